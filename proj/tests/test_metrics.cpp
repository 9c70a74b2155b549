#include <accear/audio_io.hpp>
#include <accear/metrics.hpp>

#include "catch2/catch_amalgamated.hpp"
#include "test_support.hpp"

#include <map>
#include <sstream>

using namespace accear;
using Catch::Approx;

namespace {

/// Top-down Levenshtein recursion, memoized on (i, j).
std::size_t lev(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i, std::size_t j,
                std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const std::size_t r = std::min({lev(a, b, i + 1, j + 1, memo) + (a[i] == b[j] ? 0 : 1), lev(a, b, i + 1, j, memo) + 1,
                                  lev(a, b, i, j + 1, memo) + 1});
  memo[key] = r;
  return r;
}

/// A steady vowel: glottal pulse train shaped by two formant resonators.
std::vector<double> vowel(double f1, double f2, double rate, std::size_t n) {
  std::vector<double> src(n, 0.0), out(n, 0.0);
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(rate / 120.0)) src[i] = 1.0;
  std::vector<double> cur = src;
  for (double f : {f1, f2}) {
    const double r = 0.97, th = 2 * std::numbers::pi * f / rate;
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = cur[i] + (i >= 1 ? 2 * r * std::cos(th) * y[i - 1] : 0.0) - (i >= 2 ? r * r * y[i - 2] : 0.0);
    }
    cur = y;
  }
  return cur;
}

Cepstra mean_cepstrum(const Cepstra& c) {
  Cepstra m{1, c.order, std::vector<double>(c.order, 0.0)};
  for (std::size_t t = 0; t < c.frames; ++t) {
    for (std::size_t k = 0; k < c.order; ++k) m.data[k] += c(t, k) / static_cast<double>(c.frames);
  }
  return m;
}

}  // namespace

TEST_CASE("MCD closed forms", "[metrics]") {
  const double k = 10.0 / std::log(10.0);
  Cepstra a{1, 1, {0.0}}, b{1, 1, {1.0}};
  CHECK(std::abs(mcd(a, a)) < 1e-9);
  CHECK(std::abs(mcd(a, b) - k * std::sqrt(2.0)) < 1e-9);
  CHECK(std::abs(mcd(a, b) - 6.141851463713754) < 1e-9);
  // two frames: per-frame values a and b average to (a + b) / 2
  Cepstra r2{2, 2, {0, 0, 0, 0}}, s2{2, 2, {3, 4, 1, 0}};
  CHECK(std::abs(mcd(r2, s2) - (k * std::sqrt(2.0 * 25) + k * std::sqrt(2.0)) / 2) < 1e-9);
  CHECK_THROWS_AS(mcd(a, r2), ShapeError);
}

TEST_CASE("MCD is symmetric, non-negative and monotone along a ray", "[metrics][property]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Cepstra a{5, 13, std::vector<double>(65)}, d{5, 13, std::vector<double>(65)};
    for (auto& v : a.data) v = n(rng);
    for (auto& v : d.data) v = n(rng);
    double prev = -1;
    for (double t = 0; t <= 2.0; t += 0.25) {
      Cepstra b = a;
      for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += t * d.data[i];
      const double v = mcd(a, b);
      REQUIRE(v >= 0);
      REQUIRE(v == Approx(mcd(b, a)).margin(1e-12));
      REQUIRE(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("orthonormal DCT-II preserves energy", "[metrics]") {
  const auto x = testing::white_noise(40, 9);
  const auto c = dct2_orthonormal(x);
  double ex = 0, ec = 0;
  for (std::size_t i = 0; i < 40; ++i) ex += x[i] * x[i], ec += c[i] * c[i];
  CHECK(ec == Approx(ex).epsilon(1e-12));
  CHECK(dct2_orthonormal({1.0, 1.0, 1.0, 1.0})[0] == Approx(2.0));
}

TEST_CASE("MFCC grid and simple signals", "[metrics]") {
  SECTION("4 s at 16 kHz, hop 500 gives 128 x 13") {
    const auto c = mfcc(testing::white_noise(64000, 1), 16000.0);
    CHECK(c.frames == 128);
    CHECK(c.order == 13);
  }
  SECTION("silence has identical frames") {
    const auto c = mfcc(std::vector<double>(16000, 0.0), 16000.0);
    for (std::size_t t = 1; t < c.frames; ++t) {
      for (std::size_t m = 0; m < c.order; ++m) REQUIRE(c(t, m) == c(0, m));
    }
  }
  SECTION("different vowels have distinct mean cepstra") {
    const auto a = mean_cepstrum(mfcc(vowel(730, 1090, 16000, 16000), 16000.0));
    const auto i = mean_cepstrum(mfcc(vowel(270, 2290, 16000, 16000), 16000.0));
    double d = 0;
    for (std::size_t k = 0; k < a.order; ++k) d += (a.data[k] - i.data[k]) * (a.data[k] - i.data[k]);
    CHECK(std::sqrt(d) > 0.1);
  }
  SECTION("identical audio scores zero") {
    const auto x = vowel(500, 1500, 16000, 32000);
    CHECK(mcd(mfcc(x, 16000.0), mfcc(x, 16000.0)) == 0.0);
  }
  SECTION("16-bit quantization barely moves the score, pauses included") {
    auto x = peak_normalize({16000.0, vowel(600, 1700, 16000, 16000)}, -3.0).values;
    x.resize(32000, 0.0);
    const auto q = decode_wav(encode_wav_pcm16({16000.0, x}));
    CHECK(mcd(mfcc(x, 16000.0), mfcc(q)) < 0.5);
  }
  CHECK_THROWS_AS(mfcc(std::vector<double>(100, 0.0), 16000.0), InputError);
  MfccConfig bad;
  bad.floor = 0;
  CHECK_THROWS_AS(mfcc(std::vector<double>(16000, 0.0), 16000.0, bad), ParameterError);
}

TEST_CASE("WER examples", "[metrics]") {
  CHECK(wer("a b c d", "a b c d").rate() == 0.0);
  const auto one = wer("a b c d", "a x c d");
  CHECK(one == WerBreakdown{1, 0, 0, 4});
  CHECK(one.rate() == 0.25);
  const auto many = wer("a", "x y z");
  CHECK(many.substitutions == 1);
  CHECK(many.insertions == 2);
  CHECK(many.rate() == Approx(3.0));
  CHECK(wer("Hello, World!", "hello world").rate() == 0.0);
  CHECK(wer("a b c", "").deletions == 3);
  CHECK_THROWS_AS(wer("", "a"), InputError);
  CHECK(tokenize_words("  Don't STOP-now ") == std::vector<std::string>{"dont", "stopnow"});
}

TEST_CASE("WER matches a brute-force edit distance", "[metrics][property]") {
  const std::vector<std::string> vocab{"the", "cat", "sat", "on", "mat", "dog"};
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> r(1 + rng() % 8), h(rng() % 9);
    for (auto& w : r) w = vocab[rng() % vocab.size()];
    for (auto& w : h) w = vocab[rng() % vocab.size()];
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    const auto w = wer(r, h);
    REQUIRE(w.edits() == lev(r, h, 0, 0, memo));
    REQUIRE(w.reference_length == r.size());
    // the alignment must be consistent with the hypothesis length
    REQUIRE(r.size() - w.deletions + w.insertions == h.size());
    REQUIRE(wer(r, r).edits() == 0);
  }
}

TEST_CASE("evaluation report CSV", "[metrics][io]") {
  std::ostringstream os;
  write_report_csv(os, {{"seg_a", 3.5, true, {1, 0, 2, 4}}, {"seg_b", 9.25, false, {}}});
  CHECK(os.str() ==
        "segment_id,mcd,comprehensible,wer,S,D,I,N\n"
        "seg_a,3.500000,true,0.750000,1,0,2,4\n"
        "seg_b,9.250000,false,,,,,\n");
}
