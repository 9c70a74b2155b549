#include <accear/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace accear;
namespace fs = std::filesystem;

struct Subcommand {
  CLI::App* app = nullptr;
  std::vector<std::pair<std::string, CLI::Option*>> keys;
};

// every config key doubles as a flag with the same name
Subcommand add_command(CLI::App& root, const std::string& name, const std::string& help,
                       std::map<std::string, std::string>& values, std::string& config_file, bool& force) {
  Subcommand s{root.add_subcommand(name, help), {}};
  s.app->add_option("--config", config_file, "config file of `key = value` lines")->check(CLI::ExistingFile);
  s.app->add_flag("--force", force, "rerun even if the outputs are up to date");
  for (const auto& k : config_keys()) {
    auto* opt = s.app->add_option("--" + k.name, values[k.name], k.help + " (default " + k.default_value + ")");
    opt->group("Configuration")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    s.keys.emplace_back(k.name, opt);
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech reconstruction from smartphone accelerometer traces"};
  app.require_subcommand(1);

  std::map<std::string, std::string> values;
  std::string config_file;
  bool force = false;
  std::string a1, a2, a3;
  std::optional<std::string> resume, export_dir, reference_audio, checkpoint, wav_dir, transcripts;
  bool baseline = false, write_reference = false;
  std::string split = "test";

  auto corpus = add_command(app, "synthesize-corpus", "write a synthetic speech corpus", values, config_file, force);
  corpus.app->add_option("OUT_DIR", a1)->required();

  auto simulate = add_command(app, "simulate", "simulate accelerometer traces for a directory of WAV files", values,
                              config_file, force);
  simulate.app->add_option("AUDIO_DIR", a1)->required();
  simulate.app->add_option("OUT_DIR", a2)->required();

  auto prepare = add_command(app, "prepare", "build condition and target images", values, config_file, force);
  prepare.app->add_option("MANIFEST", a1)->required();
  prepare.app->add_option("OUT_DIR", a2)->required();

  auto train = add_command(app, "train", "train the cGAN", values, config_file, force);
  train.app->add_option("MANIFEST", a1)->required();
  train.app->add_option("IMAGES_DIR", a2)->required();
  train.app->add_option("OUT_DIR", a3)->required();
  train.app->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto reconstruct = add_command(app, "reconstruct", "reconstruct speech from an accelerometer CSV", values,
                                 config_file, force);
  reconstruct.app->add_option("CHECKPOINT", a1)->required();
  reconstruct.app->add_option("ACCEL_CSV", a2)->required();
  reconstruct.app->add_option("OUT_WAV", a3)->required();
  reconstruct.app->add_option("--export-spectrograms", export_dir, "write condition/generated/target PNGs here");
  reconstruct.app->add_option("--reference-audio", reference_audio, "audio for the target PNGs")
      ->check(CLI::ExistingFile);

  auto evaluate = add_command(app, "evaluate", "score reconstructions against the reference audio", values,
                              config_file, force);
  evaluate.app->add_option("MANIFEST", a1)->required();
  evaluate.app->add_option("OUT_DIR", a2)->required();
  evaluate.app->add_option("--checkpoint", checkpoint, "generate from this model");
  evaluate.app->add_option("--wav-dir", wav_dir, "score existing <segment_id>.wav files");
  evaluate.app->add_option("--transcripts", transcripts, "hypothesis transcripts <segment_id>.txt for WER");
  evaluate.app->add_option("--split", split, "test, train or all")->capture_default_str();
  evaluate.app->add_flag("--baseline", baseline, "also score the condition image used as a mel image");
  evaluate.app->add_flag("--write-reference", write_reference, "write reference audio and transcripts");

  auto exporter = add_command(app, "export-spectrogram", "render a WAV, CSV or ASPC file as a PNG", values,
                              config_file, force);
  exporter.app->add_option("INPUT", a1)->required();
  exporter.app->add_option("OUT_PNG", a2)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kUsage;
  }

  try {
    const Subcommand* active = nullptr;
    for (const auto* s : {&corpus, &simulate, &prepare, &train, &reconstruct, &evaluate, &exporter}) {
      if (s->app->parsed()) active = s;
    }
    // flags override the config file, which overrides the defaults
    cli::Context ctx;
    ctx.force = force;
    if (!config_file.empty()) ctx.config.merge_file(config_file);
    for (const auto& [key, opt] : active->keys) {
      if (opt->count() > 0) ctx.config.set(key, values[key]);
    }
    ctx.config.validate();

    const auto name = active->app->get_name();
    if (name == "synthesize-corpus") {
      std::cout << cli::cmd_synthesize_corpus(ctx, a1).string() << "\n";
    } else if (name == "simulate") {
      std::cout << cli::cmd_simulate(ctx, a1, a2).string() << "\n";
    } else if (name == "prepare") {
      std::cout << cli::cmd_prepare(ctx, a1, a2).string() << "\n";
    } else if (name == "train") {
      const auto r = cli::cmd_train(ctx, a1, a2, a3, resume ? std::optional<fs::path>(*resume) : std::nullopt);
      std::cout << r.checkpoint.string() << "\n";
    } else if (name == "reconstruct") {
      cli::ReconstructOptions opt;
      if (export_dir) opt.export_dir = *export_dir;
      if (reference_audio) opt.reference_audio = *reference_audio;
      std::cout << cli::cmd_reconstruct(ctx, a1, a2, a3, opt).string() << "\n";
    } else if (name == "evaluate") {
      cli::EvaluateOptions opt;
      if (checkpoint) opt.checkpoint = *checkpoint;
      if (wav_dir) opt.wav_dir = *wav_dir;
      if (transcripts) opt.transcripts = *transcripts;
      opt.baseline = baseline;
      opt.write_reference = write_reference;
      opt.split = split;
      const auto s = cli::cmd_evaluate(ctx, a1, a2, opt);
      std::cout << cli::summary_json(s, split).dump(2) << "\n";
    } else {
      std::cout << cli::cmd_export_spectrogram(ctx, a1, a2).string() << "\n";
    }
    return cli::kOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInput;
  }
}
