#include <accear/channel_sim.hpp>
#include <accear/synth.hpp>

#include "catch2/catch_amalgamated.hpp"
#include "test_support.hpp"

#include <complex>

using namespace accear;
using Catch::Approx;
using accear::testing::TempDir;

namespace {

/// Amplitude of the `freq` component of the z axis, evaluated at the actual
/// (jittered) timestamps.
double z_amplitude(const RawAccelTrace& tr, double freq, std::size_t skip = 50) {
  double mean = 0;
  const std::size_t n = tr.size() - 2 * skip;
  for (std::size_t k = skip; k < skip + n; ++k) mean += tr.samples[k][2] / static_cast<double>(n);
  std::complex<double> acc = 0;
  for (std::size_t k = skip; k < skip + n; ++k) {
    const double t = static_cast<double>(tr.timestamps_ns[k]) * 1e-9;
    acc += (tr.samples[k][2] - mean) * std::polar(1.0, -2 * std::numbers::pi * freq * t);
  }
  return 2 * std::abs(acc) / static_cast<double>(n);
}

UniformSeries tone(double f, double seconds, double amp = 0.5) {
  return {16000.0, testing::sine(f, 16000.0, static_cast<std::size_t>(seconds * 16000), amp)};
}

SpectralConfig small_spectral() {
  SpectralConfig sc;
  sc.image_size = 64;
  sc.mel_bins = 64;
  sc.audio_n_fft = 1024;
  return sc;
}

std::vector<double> column_energy(const Matrix& m) {
  std::vector<double> e(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) e[c] += m(r, c);
  }
  return e;
}

}  // namespace

TEST_CASE("silence gives a gravity-only trace", "[channel-sim]") {
  auto p = sensor_profile("generic-500");
  p.noise_floor = 0;
  const auto tr = simulate_trace({16000.0, std::vector<double>(16000, 0.0)}, p, {}, 1);
  REQUIRE(tr.size() == 502);
  tr.validate();
  for (const auto& s : tr.samples) {
    REQUIRE(s[0] == 0.0);
    REQUIRE(s[1] == 0.0);
    REQUIRE(s[2] == 9.8);
  }
}

TEST_CASE("sensor response passes low tones and rejects tones above Nyquist", "[channel-sim]") {
  const auto p = sensor_profile("mate40pro");
  const double expected = p.gain * 0.5;
  const auto low = simulate_trace(tone(100, 10), p, {}, 3);
  const double a_low = z_amplitude(low, 100);
  INFO("100 Hz amplitude " << a_low << " vs " << expected);
  CHECK(std::abs(20 * std::log10(a_low / expected)) < 3.0);

  const auto high = simulate_trace(tone(400, 10), p, {}, 3);
  // 400 Hz would fold onto 100 Hz at a 500 Hz rate
  CHECK(20 * std::log10(z_amplitude(high, 100) / expected) <= -40.0);
  CHECK(20 * std::log10(z_amplitude(high, 400) / expected) <= -40.0);
}

TEST_CASE("no tone above the sensor Nyquist leaks into the trace", "[channel-sim][property]") {
  std::mt19937_64 rng(11);
  for (const char* name : {"generic-167", "generic-200", "reno6pro"}) {
    const auto p = sensor_profile(name);
    const double in_band = z_amplitude(simulate_trace(tone(0.2 * p.rate_hz, 6), p, {}, 1), 0.2 * p.rate_hz);
    for (int trial = 0; trial < 3; ++trial) {
      const double f = p.rate_hz * (0.55 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng));
      const auto tr = simulate_trace(tone(f, 6), p, {}, 1);
      // scan the whole observable band
      double worst = 0;
      for (double g = 2; g < p.rate_hz / 2; g += 1.0) worst = std::max(worst, z_amplitude(tr, g));
      INFO(name << " tone " << f << " Hz: worst " << worst << " vs in-band " << in_band);
      CHECK(20 * std::log10(worst / in_band) <= -40.0);
    }
  }
}

TEST_CASE("simulation is deterministic per seed", "[channel-sim]") {
  const auto audio = tone(150, 2);
  const auto p = sensor_profile("s21plus");
  const ScenePreset scene{SceneKind::restaurant, 0.8};
  CHECK(simulate_trace(audio, p, scene, 5) == simulate_trace(audio, p, scene, 5));
  CHECK_FALSE(simulate_trace(audio, p, scene, 5) == simulate_trace(audio, p, scene, 6));
  std::ostringstream a, b;
  write_accel_csv(a, simulate_trace(audio, p, scene, 5));
  write_accel_csv(b, simulate_trace(audio, p, scene, 5));
  CHECK(a.str() == b.str());
}

TEST_CASE("timestamps stay monotone under heavy jitter", "[channel-sim]") {
  auto p = sensor_profile("generic-500");
  p.jitter_ns = 5e6;  // larger than the sample period
  const auto tr = simulate_trace(tone(100, 1), p, {}, 2);
  CHECK_NOTHROW(tr.validate());
}

TEST_CASE("walking disturbance stays below 20 Hz", "[channel-sim]") {
  for (double rate : {167.0, 500.0}) {
    auto p = sensor_profile("generic-500");
    std::mt19937_64 rng(4);
    const auto d = scene_disturbance(SceneKind::walking, static_cast<std::size_t>(20 * rate), rate, p, rng);
    // direct DFT of the whole signal
    double below = 0, total = 0;
    const double n = static_cast<double>(d.size());
    for (std::size_t k = 1; k < d.size() / 2; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        acc += d[i] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * i) / n);
      }
      const double pw = std::norm(acc);
      total += pw;
      if (static_cast<double>(k) * rate / n < 20.0) below += pw;
    }
    CHECK(below / total >= 0.95);
  }
}

TEST_CASE("scene and profile parsing", "[channel-sim]") {
  CHECK(parse_scene("quiet-room") == SceneKind::quiet_room);
  CHECK_THROWS_AS(parse_scene("forest"), ParameterError);
  CHECK(sensor_profile("tabs6lite").rate_hz == 200);
  CHECK(sensor_profile("mate40pro").corner_hz == Approx(220.0));
  CHECK_THROWS_AS(sensor_profile("nokia"), ParameterError);
  CHECK_THROWS_AS(simulate_trace({16000.0, std::vector<double>(10, 0.0)}, sensor_profile("generic-167"), {}, 1),
                  InputError);
  CHECK_THROWS_AS((ScenePreset{SceneKind::none, 0.0}.validate()), ParameterError);
}

TEST_CASE("synthetic corpus", "[channel-sim][synth]") {
  SynthConfig sc;
  sc.seconds = 6;
  const auto a = synthesize_recording(sc, 0);
  CHECK(a.audio.values == synthesize_recording(sc, 0).audio.values);
  CHECK(a.audio.values != synthesize_recording(sc, 1).audio.values);
  CHECK(a.audio.values.size() == 96000);
  REQUIRE_FALSE(a.words.empty());
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    CHECK(a.words[i].end <= 6.0);
    if (i > 0) CHECK(a.words[i].start >= a.words[i - 1].end);
  }
  double peak = 0;
  for (double v : a.audio.values) peak = std::max(peak, std::abs(v));
  CHECK(peak <= 1.0);
  CHECK(peak > 0.5);
}

TEST_CASE("paired dataset from a directory of recordings", "[channel-sim][dataset]") {
  TempDir tmp("accear_test_dataset");
  SynthConfig sc;
  sc.recordings = 3;
  sc.seconds = 12;
  write_corpus(tmp.path / "audio", synthesize_corpus(sc));

  DatasetConfig cfg;
  cfg.profile = sensor_profile("generic-500");
  cfg.spectral = small_spectral();
  cfg.seed = 9;
  const auto m = make_dataset(tmp.path / "audio", tmp.path / "data", cfg);

  REQUIRE(m.segments.size() == 9);
  std::size_t train = 0;
  for (const auto& g : m.segments) train += g.split == "train";
  CHECK(train == 8);
  CHECK(m.segments[4].segment_id == "utt001_001");
  CHECK(m.segments[4].accel_csv_path == "traces/utt001.csv");
  CHECK(m.segments[4].audio_wav_path == "../audio/utt001.wav");
  CHECK(m.has_transcripts);
  CHECK(m.overlap.training_words > 0);

  SECTION("manifest round trip") {
    CHECK(parse_manifest(manifest_text(m)) == m);
    const auto back = read_manifest(tmp.path / "data" / "manifest.json");
    CHECK(back == m);
    CHECK(back.segments == m.segments);
    CHECK(back.config.profile == m.config.profile);
    CHECK_THROWS_AS(parse_manifest("{\"schema\": 1}"), InputError);
    CHECK_THROWS_AS(parse_manifest("not json"), InputError);
  }

  SECTION("stats match a recomputation from the listed segments") {
    const auto fb = audio_filterbank(m.config.spectral);
    const auto sigs = load_segments(m, tmp.path / "data", [](const ManifestSegment&) { return true; });
    REQUIRE(sigs.size() == 9);
    NormStats cond{1e300, -1e300}, targ{1e300, -1e300};
    for (const auto& [g, s] : sigs) {
      const auto c = matrix_range(accel_compressed(s.accel, m.config.spectral));
      const auto t = matrix_range(audio_compressed(s.audio, m.config.spectral, fb));
      CHECK(std::abs(c.min - g->condition_stats.min) < 1e-9);
      CHECK(std::abs(c.max - g->condition_stats.max) < 1e-9);
      CHECK(std::abs(t.max - g->target_stats.max) < 1e-9);
      if (g->split != "train") continue;
      cond = merge_stats(cond, c);
      targ = merge_stats(targ, t);
    }
    CHECK(std::abs(cond.min - m.condition_stats.min) < 1e-9);
    CHECK(std::abs(cond.max - m.condition_stats.max) < 1e-9);
    CHECK(std::abs(targ.min - m.target_stats.min) < 1e-9);
    CHECK(std::abs(targ.max - m.target_stats.max) < 1e-9);
  }

  SECTION("condition and target envelopes are aligned") {
    const auto fb = audio_filterbank(m.config.spectral);
    const auto sigs = load_segments(m, tmp.path / "data", [](const ManifestSegment&) { return true; });
    for (const auto& [g, s] : sigs) {
      auto ec = column_energy(accel_compressed(s.accel, m.config.spectral));
      auto et = column_energy(audio_compressed(s.audio, m.config.spectral, fb));
      for (auto* e : {&ec, &et}) {
        double mean = 0;
        for (double v : *e) mean += v / static_cast<double>(e->size());
        for (auto& v : *e) v -= mean;
      }
      int best = 0;
      double best_v = -1e300;
      for (int lag = -5; lag <= 5; ++lag) {
        double acc = 0;
        for (int i = 0; i < static_cast<int>(ec.size()); ++i) {
          const int j = i + lag;
          if (j >= 0 && j < static_cast<int>(et.size())) acc += ec[static_cast<std::size_t>(i)] * et[static_cast<std::size_t>(j)];
        }
        if (acc > best_v) best_v = acc, best = lag;
      }
      INFO(g->segment_id << " peak lag " << best);
      CHECK(std::abs(best) <= 1);
    }
  }

  SECTION("rerun is byte-identical") {
    const auto first = detail::read_file((tmp.path / "data" / "manifest.json").string());
    const auto csv = detail::read_file((tmp.path / "data" / "traces" / "utt002.csv").string());
    make_dataset(tmp.path / "audio", tmp.path / "data", cfg);
    CHECK(detail::read_file((tmp.path / "data" / "manifest.json").string()) == first);
    CHECK(detail::read_file((tmp.path / "data" / "traces" / "utt002.csv").string()) == csv);
  }

  SECTION("empty input directory") {
    fs::create_directories(tmp.path / "empty");
    try {
      make_dataset(tmp.path / "empty", tmp.path / "out", cfg);
      FAIL("expected an input error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("no input audio") != std::string::npos);
    }
  }
}

TEST_CASE("transcripts", "[channel-sim]") {
  TempDir tmp("accear_test_transcript");
  const std::vector<TimedWord> words{{0.1, 0.5, "alpha"}, {3.9, 4.3, "bravo"}, {4.5, 4.9, "echo"}};
  write_transcript(tmp.path / "t.txt", words);
  CHECK(read_transcript(tmp.path / "t.txt") == words);
  CHECK(words_between(words, 0, 4) == "alpha");
  CHECK(words_between(words, 4, 8) == "bravo echo");
  std::ofstream(tmp.path / "bad.txt") << "0.1 word\n";
  CHECK_THROWS_AS(read_transcript(tmp.path / "bad.txt"), InputError);
}
