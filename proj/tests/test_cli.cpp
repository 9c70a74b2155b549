#include <accear/cli.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

using namespace accear;
using accear::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) { return cli::detail::read_text(p); }

struct Pipeline {
  std::ostringstream log;
  cli::Context ctx;

  Pipeline() {
    ctx.log = &log;
    ctx.config.merge_text(
        "image-size = 64\nngf = 8\nndf = 8\nepochs = 2\nphase1-epochs = 1\ncheckpoint-every = 1\n"
        "corpus-recordings = 3\ncorpus-seconds = 12\ngl-iterations = 8\nseed = 5\n",
        "test");
    ctx.config.validate();
  }

  void run_through_training(const fs::path& root) {
    cli::cmd_synthesize_corpus(ctx, root / "corpus");
    cli::cmd_simulate(ctx, root / "corpus", root / "sim");
    cli::cmd_prepare(ctx, root / "sim" / "manifest.json", root / "img");
    cli::cmd_train(ctx, root / "sim" / "manifest.json", root / "img", root / "run");
  }
};

int run_cli(const std::string& args) {
  const int status = std::system((std::string(ACCEAR_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("error kinds map to exit codes") {
  CHECK(cli::exit_code_for(ParameterError("x")) == 2);
  CHECK(cli::exit_code_for(InputError("x")) == 3);
  CHECK(cli::exit_code_for(ShapeError("x")) == 3);
  CHECK(cli::exit_code_for(NumericError("x")) == 4);
}

TEST_CASE("executable exit codes") {
  TempDir tmp("accear_test_cli_exit");
  const auto t = tmp.path.string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("simulate " + t) == 2);
  CHECK(run_cli("simulate " + t + " " + t + "/out --epochs 3 --no-such-flag") == 2);
  CHECK(run_cli("simulate " + t + " " + t + "/out --profile nokia") == 2);
  CHECK(run_cli("simulate " + t + " " + t + "/out") == 3);
  CHECK(run_cli("export-spectrogram " + t + "/missing.wav " + t + "/x.png") == 3);
  CHECK(run_cli("synthesize-corpus " + t + "/c --corpus-recordings 1 --corpus-seconds 1") == 0);
  CHECK(fs::exists(tmp.path / "c" / "utt000.wav"));
  CHECK(run_cli("export-spectrogram " + t + "/c/utt000.wav " + t + "/x.png") == 0);
  CHECK(fs::exists(tmp.path / "x.png"));
}

TEST_CASE("simulate reports a directory without audio") {
  TempDir tmp("accear_test_cli_empty");
  cli::Context ctx;
  CHECK_THROWS_WITH(cli::cmd_simulate(ctx, tmp.path, tmp.path / "out"),
                    Catch::Matchers::ContainsSubstring("no input audio"));
  CHECK_THROWS_AS(cli::cmd_simulate(ctx, tmp.path / "missing", tmp.path / "out"), InputError);
}

TEST_CASE("pipeline runs end to end on a small corpus") {
  TempDir tmp("accear_test_cli_pipeline");
  Pipeline p;
  const auto t0 = std::chrono::steady_clock::now();
  p.run_through_training(tmp.path);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 60.0);

  const auto manifest = read_manifest(tmp.path / "sim" / "manifest.json");
  REQUIRE(manifest.segments.size() == 9);
  for (const auto& g : manifest.segments) {
    const auto c = read_aspc((tmp.path / "img" / (g.segment_id + ".condition.aspc")).string());
    CHECK(c.rows == 64);
    CHECK(c.cols == 64);
  }
  const auto run = tmp.path / "run";
  CHECK(fs::exists(run / "model.ckpt"));
  CHECK(fs::exists(run / "checkpoints" / "epoch_0001.ckpt"));
  CHECK(fs::exists(run / "checkpoints" / "epoch_0002.ckpt"));
  for (const char* d : {"corpus", "sim", "img", "run"}) {
    RunConfig back;
    back.merge_file(tmp.path / d / "run_config.txt");
    CHECK(back.get("image-size") == "64");
  }
  const auto loss = slurp(run / "loss.csv");
  CHECK(loss.rfind("epoch,g_loss,d_loss,l1\n1,", 0) == 0);
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 3);

  SECTION("unchanged inputs are skipped unless forced") {
    const auto stamp_time = fs::last_write_time(run / "model.ckpt");
    p.log.str("");
    cli::cmd_train(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "img", run);
    CHECK(p.log.str().find("up to date") != std::string::npos);
    CHECK(fs::last_write_time(run / "model.ckpt") == stamp_time);

    auto forced = p.ctx;
    forced.force = true;
    const auto before = slurp(run / "model.ckpt");
    cli::cmd_train(forced, tmp.path / "sim" / "manifest.json", tmp.path / "img", run);
    CHECK(slurp(run / "model.ckpt") == before);
    CHECK(slurp(run / "loss.csv") == loss);
  }

  SECTION("resume continues the epoch numbering") {
    auto ctx = p.ctx;
    ctx.config.set("epochs", "3");
    const auto r = cli::cmd_train(ctx, tmp.path / "sim" / "manifest.json", tmp.path / "img", run,
                                  run / "checkpoints" / "epoch_0001.ckpt");
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0].epoch == 2);
    CHECK(r.history[1].epoch == 3);
    const auto resumed = slurp(run / "loss.csv");
    CHECK(std::count(resumed.begin(), resumed.end(), '\n') == 4);
    CHECK(resumed.rfind(loss, 0) == 0);  // epochs 1 and 2 replay identically
    CHECK(fs::exists(run / "checkpoints" / "epoch_0003.ckpt"));
    CHECK(cgan::restore_model(cgan::read_checkpoint(r.checkpoint)).epochs_done() == 3);
  }

  SECTION("reconstruct writes audio and a png triplet per segment") {
    cli::ReconstructOptions opt{tmp.path / "png", tmp.path / "corpus" / "utt001.wav"};
    cli::cmd_reconstruct(p.ctx, run / "model.ckpt", tmp.path / "sim" / "traces" / "utt001.csv", tmp.path / "out" / "utt001.wav",
                         opt);
    const auto wav = read_wav((tmp.path / "out" / "utt001.wav").string());
    CHECK(wav.rate_hz == 16000);
    CHECK(wav.values.size() == 3 * 64000);
    for (const char* k : {"condition", "generated", "target"}) {
      for (int s = 0; s < 3; ++s) {
        CHECK(fs::exists(tmp.path / "png" / ("utt001_00" + std::to_string(s) + "_" + k + ".png")));
      }
    }
    CHECK(fs::exists(tmp.path / "out" / "utt001.run_config.txt"));
  }

  SECTION("evaluate scores generated audio and ground truth") {
    cli::EvaluateOptions opt;
    opt.checkpoint = run / "model.ckpt";
    opt.baseline = true;
    opt.write_reference = true;
    opt.split = "all";
    const auto s = cli::cmd_evaluate(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "eval", opt);
    CHECK(s.segments == 9);
    CHECK(s.mean_l1.has_value());
    CHECK(s.baseline_mcd.has_value());
    CHECK(s.mean_mcd > 0);
    CHECK(fs::exists(tmp.path / "eval" / "wav" / "utt000_000.wav"));
    const auto report = slurp(tmp.path / "eval" / "report.csv");
    CHECK(std::count(report.begin(), report.end(), '\n') == 10);
    const auto j = nlohmann::json::parse(slurp(tmp.path / "eval" / "summary.json"));
    CHECK(j.at("mean_mcd").get<double>() == s.mean_mcd);

    cli::EvaluateOptions self;
    self.wav_dir = tmp.path / "eval" / "reference";
    self.transcripts = tmp.path / "eval" / "reference";
    self.split = "all";
    const auto g = cli::cmd_evaluate(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "self", self);
    CHECK(g.mean_mcd == 0.0);
    CHECK(g.comprehensible == 9);
    REQUIRE(g.mean_wer.has_value());
    CHECK(*g.mean_wer == 0.0);

    cli::EvaluateOptions both = opt;
    both.wav_dir = tmp.path;
    CHECK_THROWS_AS(cli::cmd_evaluate(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "x", both), ParameterError);
  }
}

TEST_CASE("pipeline outputs are byte-identical across runs") {
  TempDir a("accear_test_cli_det_a"), b("accear_test_cli_det_b");
  Pipeline pa, pb;
  pa.run_through_training(a.path);
  pb.run_through_training(b.path);
  for (const auto* f : {"sim/manifest.json", "sim/traces/utt002.csv", "img/utt001_001.target.aspc", "run/loss.csv",
                        "run/model.ckpt", "run/checkpoints/epoch_0001.ckpt"}) {
    INFO(f);
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
}

TEST_CASE("training rejects images of the wrong size") {
  TempDir tmp("accear_test_cli_shape");
  Pipeline p;
  cli::cmd_synthesize_corpus(p.ctx, tmp.path / "corpus");
  cli::cmd_simulate(p.ctx, tmp.path / "corpus", tmp.path / "sim");
  cli::cmd_prepare(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "img");
  write_aspc((tmp.path / "img" / "utt000_000.target.aspc").string(), Matrix(32, 64));
  CHECK_THROWS_AS(cli::cmd_train(p.ctx, tmp.path / "sim" / "manifest.json", tmp.path / "img", tmp.path / "run"),
                  ShapeError);
}
