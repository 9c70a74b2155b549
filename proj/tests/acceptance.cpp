// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [N ...]
//
// With no numbers every check runs. The pipeline checks train real models
// and take several minutes each. Lines are also written to
// acceptance_results.txt in the working directory.

#include <accear/autodiff/graph.hpp>
#include <accear/autodiff/ops.hpp>
#include <accear/cli.hpp>

#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace accear;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 2: gradient checks

using ad::Graph;
using ad::Tensor;
using ad::Var;
using Build = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

Tensor<double> random_tensor(ad::Shape s, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> d(0.0, sigma);
  Tensor<double> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

double gradient_error(const std::vector<Tensor<double>>& inputs, const Build& build) {
  std::size_t params = 0;
  for (const auto& t : inputs) params += t.numel();
  if (params > 200) throw ParameterError("gradient check input exceeds 200 parameters");
  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  g.backward(build(g, leaves));
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t li = 0; li < inputs.size(); ++li) {
    const auto analytic = g.grad(leaves[li]).data;
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      auto eval = [&](double delta) {
        auto p = inputs;
        p[li].data[i] += delta;
        Graph<double> g2;
        std::vector<Var<double>> l2;
        for (const auto& t : p) l2.push_back(g2.constant(t));
        return build(g2, l2).value().data[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12));
  }
  return worst;
}

Var<double> probe(Var<double> y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::dot_constant(y, random_tensor(y.shape(), rng));
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> checks;
  std::mt19937_64 rng(2);
  for (ad::ConvGeometry geom : {ad::ConvGeometry{1, 0}, ad::ConvGeometry{2, 1}, ad::ConvGeometry{1, 1}}) {
    const std::vector in{random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({1, 3, 1, 1}, rng)};
    checks.emplace_back("conv2d", gradient_error(in, [geom](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::conv2d(v[0], v[1], v[2], geom), 11);
                        }));
  }
  {
    const std::vector in{random_tensor({1, 2, 6, 6}, rng), random_tensor({2, 2, 4, 4}, rng)};
    checks.emplace_back("conv2d k4s2", gradient_error(in, [](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::conv2d(v[0], v[1], Var<double>{}, ad::ConvGeometry{2, 1}), 12);
                        }));
  }
  {
    const std::vector in{random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({1, 2, 1, 1}, rng)};
    checks.emplace_back("conv_transpose2d", gradient_error(in, [](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::conv_transpose2d(v[0], v[1], v[2], ad::ConvGeometry{2, 1}), 13);
                        }));
  }
  for (auto kind : {ad::Activation::leaky_relu, ad::Activation::relu, ad::Activation::tanh, ad::Activation::sigmoid}) {
    auto x = random_tensor({2, 3, 4, 4}, rng);
    for (auto& v : x.data) v += v >= 0 ? 0.01 : -0.01;
    checks.emplace_back(ad::activation_name(kind), gradient_error({x}, [kind](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::activation(kind, v[0]), 14);
                        }));
  }
  {
    const std::vector in{random_tensor({2, 3, 4, 4}, rng, 2.0), random_tensor({1, 3, 1, 1}, rng), random_tensor({1, 3, 1, 1}, rng)};
    checks.emplace_back("batch_norm train", gradient_error(in, [](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::batch_norm(v[0], v[1], v[2], ad::NormMode::training), 15);
                        }));
    ad::RunningStats rs(3);
    rs.mean = {0.3, -0.2, 1.0};
    rs.var = {0.5, 2.0, 1.5};
    checks.emplace_back("batch_norm eval", gradient_error(in, [&rs](Graph<double>&, const std::vector<Var<double>>& v) {
                          return probe(ad::batch_norm(v[0], v[1], v[2], ad::NormMode::inference, &rs), 15);
                        }));
  }
  const auto a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 2, 3, 3}, rng), c = random_tensor({2, 1, 3, 3}, rng);
  checks.emplace_back("add", gradient_error({a, b}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                        return probe(ad::add(v[0], v[1]), 16);
                      }));
  checks.emplace_back("scale", gradient_error({a}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                        return probe(ad::scale(v[0], -2.5), 17);
                      }));
  checks.emplace_back("mean", gradient_error({a}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                        return ad::mean(v[0]);
                      }));
  checks.emplace_back("concat", gradient_error({a, c}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                        return probe(ad::concat_channels(v[0], v[1]), 18);
                      }));
  checks.emplace_back("l1_loss", gradient_error({a, b}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                        return ad::l1_loss(v[0], v[1]);
                      }));
  for (double label : {0.0, 1.0}) {
    checks.emplace_back("bce", gradient_error({a}, [label](Graph<double>&, const std::vector<Var<double>>& v) {
                          return ad::bce_with_logits(v[0], label);
                        }));
  }
  double worst = 0;
  std::string worst_name;
  for (const auto& [n, e] : checks) {
    if (e > worst) worst = e, worst_name = n;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0, std::to_string(checks.size()) + " checks, worst " + fmt("%.2e", worst) + " (" +
                                            worst_name + "), " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 3-7: numeric oracles

Outcome stft_round_trip() {
  double worst = 0;
  for (std::size_t n_fft : {256u, 512u}) {
    for (std::size_t hop : {n_fft / 2, n_fft / 4, n_fft / 8, std::size_t{100}}) {
      const auto x = accear::testing::white_noise(6000, n_fft * 7 + hop);
      const auto y = istft(stft(x, 1000.0, n_fft, hop));
      double num = 0, den = 0;
      for (std::size_t i = n_fft; i + n_fft < x.size(); ++i) {
        num += (y.values[i] - x[i]) * (y.values[i] - x[i]);
        den += x[i] * x[i];
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
  }
  return {worst < 1e-6, "worst interior relative error " + fmt("%.2e", worst)};
}

std::vector<double> harmonic_tone(double f0, double rate, std::size_t n) {
  std::vector<double> x(n, 0.0);
  for (int h = 1; h <= 3; ++h) {
    const auto s = accear::testing::sine(f0 * h, rate, n, 1.0 / h, 0.3 * h);
    for (std::size_t i = 0; i < n; ++i) x[i] += s[i];
  }
  return x;
}

Outcome griffin_lim_checks() {
  double worst_rise = -1e300;
  bool monotone = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto x = accear::testing::white_noise(4000, seed);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] = 0.7 * x[i - 1] + 0.3 * x[i];
    const auto mag = stft(x, 16000.0, 256, 64, PadMode::zero).magnitude();
    const auto res = griffin_lim(mag, 16000.0, 256, 64, x.size());
    if (res.error.size() != 60) monotone = false;
    for (std::size_t i = 1; i < res.error.size(); ++i) {
      worst_rise = std::max(worst_rise, res.error[i] - res.error[i - 1]);
      if (res.error[i] > res.error[i - 1] + 1e-7) monotone = false;
    }
  }
  const auto tone = harmonic_tone(125.0, 16000.0, 16000);
  const auto mag = stft(tone, 16000.0, 512, 128, PadMode::zero).magnitude();
  const double tone_err = griffin_lim(mag, 16000.0, 512, 128, tone.size()).error.back();
  return {monotone && tone_err < 0.05,
          "largest step change " + fmt("%.2e", worst_rise) + ", harmonic tone error " + fmt("%.4f", tone_err)};
}

std::size_t lev(const std::vector<std::string>& r, const std::vector<std::string>& h, std::size_t i, std::size_t j,
                std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == r.size()) return h.size() - j;
  if (j == h.size()) return r.size() - i;
  const auto key = std::make_pair(i, j);
  if (const auto it = memo.find(key); it != memo.end()) return it->second;
  const std::size_t best = std::min({lev(r, h, i + 1, j, memo) + 1, lev(r, h, i, j + 1, memo) + 1,
                                     lev(r, h, i + 1, j + 1, memo) + (r[i] == h[j] ? 0 : 1)});
  return memo[key] = best;
}

Outcome metric_oracles() {
  const double k = 10.0 / std::log(10.0);
  const Cepstra a{1, 1, {0.0}}, b{1, 1, {1.0}};
  const double unit = mcd(a, b);
  const bool mcd_ok = std::abs(mcd(a, a)) < 1e-9 && std::abs(unit - k * std::sqrt(2.0)) < 1e-9 &&
                      std::abs(unit - 6.141851463713754) < 1e-9;
  const std::vector<std::string> vocab{"the", "cat", "sat", "on", "mat", "dog"};
  std::mt19937_64 rng(2024);
  std::size_t agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> r(1 + rng() % 8), h(rng() % 9);
    for (auto& w : r) w = vocab[rng() % vocab.size()];
    for (auto& w : h) w = vocab[rng() % vocab.size()];
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    agree += wer(r, h).edits() == lev(r, h, 0, 0, memo);
  }
  return {mcd_ok && agree == 1000, "unit MCD " + fmt("%.15f", unit) + ", WER agrees on " + std::to_string(agree) + "/1000"};
}

Outcome mel_formula() {
  double worst_inv = 0;
  for (double f = 0.0; f <= 8000.0; f += 13.7) {
    worst_inv = std::max(worst_inv, std::abs(mel_to_hz(hz_to_mel(f)) - f) / std::max(1.0, f));
  }
  const double at700 = hz_to_mel(700.0);
  const bool ok = hz_to_mel(0.0) == 0.0 && std::abs(at700 - 2595.0 * std::log10(2.0)) < 1e-9 && worst_inv < 1e-9;
  return {ok, "mel(700) = " + fmt("%.12f", at700) + ", worst inverse error " + fmt("%.2e", worst_inv)};
}

Outcome high_pass_spec() {
  const double rate = 1000.0;
  const std::size_t n = 10000, lo = 2000, hi = 8000;
  const double r5 = accear::testing::peak(high_pass({rate, accear::testing::sine(5.0, rate, n)}, 20.0).values, lo, hi);
  const double r100 = accear::testing::peak(high_pass({rate, accear::testing::sine(100.0, rate, n)}, 20.0).values, lo, hi);
  const double db5 = -20 * std::log10(r5), db100 = 20 * std::log10(r100);
  return {db5 >= 40.0 && std::abs(db100) <= 0.5,
          "5 Hz attenuated " + fmt("%.1f dB", db5) + ", 100 Hz change " + fmt("%.3f dB", db100)};
}

// ---------------------------------------------------------------------------
// 8-10: pipeline runs

cli::Context pipeline_context(std::ostream& log, const std::string& overrides) {
  cli::Context ctx;
  ctx.log = &log;
  ctx.config.merge_text(overrides, "acceptance");
  ctx.config.validate();
  return ctx;
}

struct PipelineRun {
  fs::path root;
  cli::EvalSummary eval;
  double seconds = 0;
};

PipelineRun run_pipeline(const cli::Context& ctx, const fs::path& root, const fs::path& corpus, bool baseline) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(corpus / "run_config.txt")) cli::cmd_synthesize_corpus(ctx, corpus);
  const auto manifest = cli::cmd_simulate(ctx, corpus, root / "sim");
  cli::cmd_prepare(ctx, manifest, root / "images");
  const auto trained = cli::cmd_train(ctx, manifest, root / "images", root / "run");

  // reconstruct the first recording with a held-out segment
  const auto m = read_manifest(manifest);
  std::string stem = m.segments.front().recording;
  for (const auto& g : m.segments) {
    if (g.split == "test") {
      stem = g.recording;
      break;
    }
  }
  cli::ReconstructOptions ro{root / "spectrograms", corpus / (stem + ".wav")};
  cli::cmd_reconstruct(ctx, trained.checkpoint, root / "sim" / "traces" / (stem + ".csv"), root / "reconstructed" / (stem + ".wav"), ro);

  cli::EvaluateOptions eo;
  eo.checkpoint = trained.checkpoint;
  eo.baseline = baseline;
  PipelineRun r{root, cli::cmd_evaluate(ctx, manifest, root / "eval", eo), 0};
  r.seconds = seconds_since(t0);
  return r;
}

const char* kE2eConfig =
    "seed = 1\nimage-size = 64\nngf = 16\nndf = 16\nepochs = 30\nphase1-epochs = 0\ncheckpoint-every = 10\n"
    "corpus-recordings = 50\ncorpus-seconds = 16\n";

Outcome end_to_end(const fs::path& work, std::ostream& log) {
  const auto ctx = pipeline_context(log, kE2eConfig);
  const auto r = run_pipeline(ctx, work / "e2e", work / "e2e" / "corpus", true);
  const auto m = read_manifest(work / "e2e" / "sim" / "manifest.json");
  std::size_t train = 0;
  for (const auto& g : m.segments) train += g.split == "train";
  const bool ok = m.segments.size() == 200 && r.seconds < 1800 && *r.eval.mean_l1 < *r.eval.baseline_l1 &&
                  r.eval.mean_mcd < *r.eval.baseline_mcd;
  std::ostringstream d;
  d << m.segments.size() << " pairs (" << train << " train), " << fmt("%.0f s", r.seconds) << "; held-out L1 "
    << fmt("%.4f", *r.eval.mean_l1) << " vs baseline " << fmt("%.4f", *r.eval.baseline_l1) << ", MCD "
    << fmt("%.2f", r.eval.mean_mcd) << " vs baseline " << fmt("%.2f", *r.eval.baseline_mcd);
  return {ok, d.str()};
}

std::vector<fs::path> determinism_files(const fs::path& root) {
  std::vector<fs::path> files{"sim/manifest.json", "run/loss.csv", "run/model.ckpt", "eval/report.csv"};
  for (const auto* dir : {"run/checkpoints", "reconstructed", "eval/wav"}) {
    if (!fs::exists(root / dir)) continue;
    for (const auto& e : fs::directory_iterator(root / dir)) {
      if (e.path().filename().string().front() != '.') files.push_back(e.path().lexically_relative(root));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism(const fs::path& work, std::ostream& log) {
  const char* cfg =
      "seed = 3\nimage-size = 64\nngf = 8\nndf = 8\nepochs = 3\nphase1-epochs = 1\ncheckpoint-every = 1\n"
      "corpus-recordings = 6\ncorpus-seconds = 8\nscene = restaurant\n";
  const auto ctx = pipeline_context(log, cfg);
  const auto a = run_pipeline(ctx, work / "det-a", work / "det-a" / "corpus", false);
  const auto b = run_pipeline(ctx, work / "det-b", work / "det-b" / "corpus", false);
  const auto fa = determinism_files(a.root), fb = determinism_files(b.root);
  if (fa != fb) return {false, "runs produced different file sets"};
  std::size_t same = 0;
  std::string first_diff;
  for (const auto& f : fa) {
    if (cli::detail::read_text(a.root / f) == cli::detail::read_text(b.root / f)) {
      ++same;
    } else if (first_diff.empty()) {
      first_diff = f.string();
    }
  }
  return {same == fa.size(), std::to_string(same) + "/" + std::to_string(fa.size()) + " files byte-identical" +
                                 (first_diff.empty() ? "" : ", first difference " + first_diff)};
}

Outcome rate_ablation(const fs::path& work, std::ostream& log) {
  const char* base =
      "seed = 1\nimage-size = 64\nngf = 16\nndf = 16\nepochs = 15\nphase1-epochs = 0\ncheckpoint-every = 0\n"
      "corpus-recordings = 30\ncorpus-seconds = 16\n";
  std::vector<std::pair<std::string, double>> mcds;
  for (const char* profile : {"generic-167", "generic-200", "generic-500"}) {
    const auto ctx = pipeline_context(log, std::string(base) + "profile = " + profile + "\n");
    const auto r = run_pipeline(ctx, work / "rates" / profile, work / "rates" / "corpus", false);
    mcds.emplace_back(profile, r.eval.mean_mcd);
  }
  std::ostringstream d;
  for (const auto& [p, v] : mcds) d << (d.tellp() > 0 ? ", " : "") << p << " " << fmt("%.3f", v);
  return {mcds[0].second >= mcds[1].second && mcds[1].second >= mcds[2].second, "held-out MCD " + d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "accear_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      only.insert(std::stoi(a));
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  std::ostringstream pipeline_log;

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria{
      {2, {"gradient checks", gradients}},
      {3, {"STFT round trip", stft_round_trip}},
      {4, {"Griffin-Lim monotonicity and tone oracle", griffin_lim_checks}},
      {5, {"MCD and WER oracles", metric_oracles}},
      {6, {"mel formula", mel_formula}},
      {7, {"high-pass response", high_pass_spec}},
      {8, {"end-to-end synthetic run beats the identity baseline", [&] { return end_to_end(work, pipeline_log); }}},
      {9, {"pipeline determinism", [&] { return determinism(work, pipeline_log); }}},
      {10, {"sampling-rate ablation ordering", [&] { return rate_ablation(work, pipeline_log); }}},
  };

  // ctest hides the output of passing tests, so keep a copy
  std::ofstream results("acceptance_results.txt");
  int failures = 0;
  for (const auto& [id, c] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + c.first + ": " +
                             o.detail + " (" + fmt("%.1f s", seconds_since(t0)) + ")";
    std::cout << line << std::endl;
    results << line << "\n";
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
