#pragma once

// Commands behind the `accear` executable. Each one validates its inputs,
// writes the resolved configuration next to its outputs, and skips work when
// a stamp shows the same command already ran on unchanged inputs.

#include <accear/audio_io.hpp>
#include <accear/cgan.hpp>
#include <accear/channel_sim.hpp>
#include <accear/config.hpp>
#include <accear/image_io.hpp>
#include <accear/metrics.hpp>
#include <accear/parallel.hpp>
#include <accear/synth.hpp>
#include <accear/vocoder.hpp>

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace accear::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kInput = 3, kNumeric = 4 };

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::parameter: return kUsage;
    case ErrorKind::input:
    case ErrorKind::shape: return kInput;
    case ErrorKind::numeric: return kNumeric;
  }
  return kInput;
}

struct Context {
  RunConfig config;
  bool force = false;
  std::ostream* log = &std::cerr;
};

// ---------------------------------------------------------------------------
// Stamps and run configs

namespace detail {

inline std::uint64_t hash_bytes(std::uint64_t h, const std::vector<std::uint8_t>& bytes) {
  for (auto b : bytes) h = (h ^ b) * 0x100000001b3ULL;
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Content digest of files, or of every regular file under a directory.
inline std::string digest_inputs(const std::vector<fs::path>& paths) {
  std::string out;
  for (const auto& p : paths) {
    std::vector<fs::path> files;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw InputError("missing input " + p.string());
    }
    for (const auto& f : files) {
      out += f.lexically_relative(fs::is_directory(p) ? p : p.parent_path()).generic_string() + " " +
             hex(hash_bytes(0xcbf29ce484222325ULL, accear::detail::read_file(f.string()))) + "\n";
    }
  }
  return out;
}

inline std::string read_text(const fs::path& p) {
  const auto b = accear::detail::read_file(p.string());
  return std::string(b.begin(), b.end());
}

inline void write_text(const fs::path& p, const std::string& s) {
  accear::detail::write_file(p.string(), std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace detail

struct Stamp {
  fs::path path;
  std::string content;

  bool current(const Context& ctx, const std::vector<fs::path>& outputs) const {
    if (ctx.force || !fs::exists(path)) return false;
    for (const auto& o : outputs) {
      if (!fs::exists(o)) return false;
    }
    return detail::read_text(path) == content;
  }
  void commit() const { detail::write_text(path, content); }
};

inline Stamp make_stamp(const fs::path& path, const std::string& command, const RunConfig& cfg,
                        const std::vector<std::string>& args, const std::vector<fs::path>& inputs) {
  std::string s = "command " + command + "\n";
  for (const auto& a : args) s += "arg " + a + "\n";
  s += cfg.text();
  s += detail::digest_inputs(inputs);
  return {path, s};
}

inline void write_run_config(const fs::path& path, const RunConfig& cfg) {
  detail::write_text(path, "# resolved accear configuration\n" + cfg.text());
}

/// Dataset settings recorded in a manifest override the run config.
inline void adopt_dataset(RunConfig& cfg, const PairedManifest& m) {
  const auto& c = m.config;
  const auto num = [](double v) { return accear::detail::format_double(v); };
  cfg.set("profile", c.profile.name);
  cfg.set("gain", num(c.profile.gain));
  cfg.set("noise-floor", num(c.profile.noise_floor));
  cfg.set("jitter-ns", num(c.profile.jitter_ns));
  cfg.set("scene", scene_name(c.scene.kind));
  cfg.set("volume", num(c.scene.volume));
  cfg.set("split-ratio", num(c.split_ratio));
  cfg.set("accel-rate", num(c.prep.target_rate_hz));
  cfg.set("highpass-hz", num(c.prep.highpass_hz));
  cfg.set("segment-seconds", num(c.prep.segment_seconds));
  cfg.set("axis", axis_name(c.prep.axis));
  cfg.set("image-size", std::to_string(c.spectral.image_size));
  cfg.set("accel-n-fft", std::to_string(c.spectral.accel_n_fft));
  cfg.set("audio-rate", num(c.spectral.audio_rate_hz));
  cfg.set("audio-n-fft", std::to_string(c.spectral.audio_n_fft));
  cfg.set("mel-fmin", num(c.spectral.mel_fmin_hz));
  cfg.set("mel-fmax", num(c.spectral.mel_fmax_hz));
  cfg.set("per-image-norm", c.spectral.per_image_norm ? "true" : "false");
}

// ---------------------------------------------------------------------------
// Checkpoint metadata: the training config and normalization stats

struct ModelBundle {
  cgan::GanModel model;
  RunConfig config;
  NormStats condition_stats;
  NormStats target_stats;
};

inline std::map<std::string, std::string> checkpoint_metadata(const RunConfig& cfg, const PairedManifest& m) {
  std::map<std::string, std::string> md;
  for (const auto& k : config_keys()) md["config." + k.name] = cfg.get(k.name);
  md["config.audio-n-fft"] = std::to_string(cfg.spectral().audio_n_fft);
  const auto num = [](double v) { return accear::detail::format_double(v); };
  md["stats.condition.min"] = num(m.condition_stats.min);
  md["stats.condition.max"] = num(m.condition_stats.max);
  md["stats.target.min"] = num(m.target_stats.min);
  md["stats.target.max"] = num(m.target_stats.max);
  return md;
}

/// Model plus the config it was trained with; vocoder keys stay as given.
inline ModelBundle load_model(const fs::path& path, const RunConfig& base) {
  const auto ck = cgan::read_checkpoint(path);
  ModelBundle b{cgan::restore_model(ck), base, {}, {}};
  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("config.", 0) != 0) continue;
    const auto key = k.substr(7);
    if (key == "gl-iterations" || key == "gl-momentum" || !RunConfig::known(key)) continue;
    b.config.set(key, v);
  }
  const auto stat = [&](const std::string& k) {
    const auto it = ck.metadata.find(k);
    if (it == ck.metadata.end()) throw InputError(path.string() + ": checkpoint lacks " + k);
    return std::stod(it->second);
  };
  b.condition_stats = {stat("stats.condition.min"), stat("stats.condition.max")};
  b.target_stats = {stat("stats.target.min"), stat("stats.target.max")};
  b.config.validate();
  return b;
}

inline std::string format_num(double v) { return accear::detail::format_double(v); }

// ---------------------------------------------------------------------------
// Commands

/// Writes a synthetic speech corpus (`<stem>.wav` + `<stem>.txt`).
inline fs::path cmd_synthesize_corpus(const Context& ctx, const fs::path& out_dir) {
  const auto stamp = make_stamp(out_dir / ".accear-stamp", "synthesize-corpus", ctx.config, {}, {});
  if (stamp.current(ctx, {out_dir / "run_config.txt"})) {
    *ctx.log << "synthesize-corpus: up to date (use --force to rerun)\n";
    return out_dir;
  }
  const auto sc = ctx.config.synth();
  write_corpus(out_dir, synthesize_corpus(sc));
  write_run_config(out_dir / "run_config.txt", ctx.config);
  stamp.commit();
  *ctx.log << "synthesize-corpus: " << sc.recordings << " recordings in " << out_dir.string() << "\n";
  return out_dir;
}

inline fs::path cmd_simulate(const Context& ctx, const fs::path& audio_dir, const fs::path& out_dir) {
  if (!fs::is_directory(audio_dir)) throw InputError("no input audio: " + audio_dir.string() + " is not a directory");
  if (list_wavs(audio_dir).empty()) throw InputError("no input audio in " + audio_dir.string());
  const auto manifest = out_dir / "manifest.json";
  fs::create_directories(out_dir);
  const auto stamp = make_stamp(out_dir / ".accear-stamp", "simulate", ctx.config,
                                {relative_path(audio_dir, out_dir)}, {audio_dir});
  if (stamp.current(ctx, {manifest})) {
    *ctx.log << "simulate: up to date (use --force to rerun)\n";
    return manifest;
  }
  const auto m = make_dataset(audio_dir, out_dir, ctx.config.dataset());
  write_run_config(out_dir / "run_config.txt", ctx.config);
  stamp.commit();
  std::size_t train = 0;
  for (const auto& g : m.segments) train += g.split == "train";
  *ctx.log << "simulate: " << m.segments.size() << " segments (" << train << " train, " << m.segments.size() - train
           << " test) -> " << manifest.string() << "\n";
  return manifest;
}

inline fs::path image_path(const fs::path& dir, const std::string& id, const char* kind) {
  return dir / (id + "." + kind + ".aspc");
}

/// Condition and target images for every manifest segment.
inline fs::path cmd_prepare(const Context& ctx, const fs::path& manifest_path, const fs::path& out_dir) {
  const auto m = read_manifest(manifest_path);
  RunConfig cfg = ctx.config;
  adopt_dataset(cfg, m);
  cfg.validate();
  fs::create_directories(out_dir);
  const auto stamp = make_stamp(out_dir / ".accear-stamp", "prepare", cfg, {}, {manifest_path});
  if (stamp.current(ctx, {out_dir / "run_config.txt"})) {
    *ctx.log << "prepare: up to date (use --force to rerun)\n";
    return out_dir;
  }
  const auto& sc = m.config.spectral;
  const auto fb = audio_filterbank(sc);
  const auto sigs = load_segments(m, manifest_path.parent_path(), [](const ManifestSegment&) { return true; });
  parallel_for(sigs.size(), [&](std::size_t i) {
    const auto& [g, s] = sigs[i];
    write_aspc(image_path(out_dir, g->segment_id, "condition").string(), accel_to_image(s.accel, m.condition_stats, sc).pixels);
    write_aspc(image_path(out_dir, g->segment_id, "target").string(), audio_to_mel(s.audio, m.target_stats, sc, fb).pixels);
  });
  write_run_config(out_dir / "run_config.txt", cfg);
  stamp.commit();
  *ctx.log << "prepare: " << sigs.size() << " image pairs -> " << out_dir.string() << "\n";
  return out_dir;
}

struct TrainResult {
  fs::path checkpoint;
  fs::path loss_csv;
  std::vector<cgan::EpochStats> history;
};

inline std::string loss_row(const cgan::EpochStats& s) {
  return std::to_string(s.epoch) + "," + format_num(s.g_loss) + "," + format_num(s.d_loss) + "," + format_num(s.l1) + "\n";
}

inline TrainResult cmd_train(const Context& ctx, const fs::path& manifest_path, const fs::path& images_dir,
                             const fs::path& out_dir, const std::optional<fs::path>& resume = std::nullopt) {
  const auto m = read_manifest(manifest_path);
  RunConfig cfg = ctx.config;
  adopt_dataset(cfg, m);
  cfg.validate();
  const auto net = cfg.net();
  const auto tc = cfg.train();
  TrainResult result{out_dir / "model.ckpt", out_dir / "loss.csv", {}};

  std::vector<cgan::TrainingPair> pairs;
  std::vector<fs::path> inputs{manifest_path};
  for (const auto& g : m.segments) {
    if (g.split != "train") continue;
    const auto c = image_path(images_dir, g.segment_id, "condition"), t = image_path(images_dir, g.segment_id, "target");
    inputs.push_back(c);
    inputs.push_back(t);
  }
  if (resume) inputs.push_back(*resume);
  fs::create_directories(out_dir);
  const auto stamp = make_stamp(out_dir / ".accear-stamp", "train", cfg, {resume ? "resume" : "fresh"}, inputs);
  if (stamp.current(ctx, {result.checkpoint, result.loss_csv})) {
    *ctx.log << "train: up to date (use --force to rerun)\n";
    return result;
  }
  for (std::size_t i = 1; i < inputs.size(); i += 2) {
    if (resume && i + 1 == inputs.size()) break;
    cgan::TrainingPair p{read_aspc(inputs[i].string()), read_aspc(inputs[i + 1].string())};
    if (p.condition.rows != net.image_size || p.condition.cols != net.image_size || !p.condition.same_shape(p.target)) {
      throw ShapeError(inputs[i].string() + ": image is not " + std::to_string(net.image_size) + "x" +
                       std::to_string(net.image_size));
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw InputError("manifest has no training segments");

  cgan::GanModel model;
  std::string csv = "epoch,g_loss,d_loss,l1\n";
  if (resume) {
    model = cgan::restore_model(cgan::read_checkpoint(*resume), &net);
    if (model.epochs_done() > tc.epochs) throw ParameterError("checkpoint is already past the requested epochs");
    // keep earlier rows from the run being resumed
    if (fs::exists(result.loss_csv)) {
      std::istringstream old(detail::read_text(result.loss_csv));
      std::string line;
      std::getline(old, line);
      while (std::getline(old, line)) {
        if (!line.empty() && std::stoul(line) <= model.epochs_done()) csv += line + "\n";
      }
    }
  } else {
    model = cgan::GanModel(net, tc.seed);
  }
  write_run_config(out_dir / "run_config.txt", cfg);
  const auto metadata = checkpoint_metadata(cfg, m);
  if (tc.checkpoint_every > 0) fs::create_directories(out_dir / "checkpoints");

  *ctx.log << "train: " << pairs.size() << " pairs, epochs " << model.epochs_done() + 1 << ".." << tc.epochs << "\n";
  while (model.epochs_done() < tc.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = cgan::train_epoch(model, pairs, tc);
    result.history.push_back(s);
    csv += loss_row(s);
    detail::write_text(result.loss_csv, csv);
    if (tc.checkpoint_every > 0 && s.epoch % tc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", s.epoch);
      cgan::write_checkpoint(out_dir / "checkpoints" / name, cgan::make_checkpoint(model, metadata));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    *ctx.log << "epoch " << s.epoch << "/" << tc.epochs << "  g " << s.g_loss << "  d " << s.d_loss << "  l1 " << s.l1
             << "  (" << secs << " s)\n";
  }
  detail::write_text(result.loss_csv, csv);
  cgan::write_checkpoint(result.checkpoint, cgan::make_checkpoint(model, metadata));
  stamp.commit();
  return result;
}

/// Generated image -> waveform of one segment.
inline UniformSeries vocode_generated(const Matrix& pixels, const ModelBundle& b, const MelInverter& inv) {
  return vocode_image(pixels, b.target_stats, b.config.spectral(), inv, b.config.vocoder()).audio;
}

struct ReconstructOptions {
  std::optional<fs::path> export_dir;
  std::optional<fs::path> reference_audio;
};

inline fs::path cmd_reconstruct(const Context& ctx, const fs::path& checkpoint, const fs::path& accel_csv,
                                const fs::path& out_wav, const ReconstructOptions& opt = {}) {
  auto b = load_model(checkpoint, ctx.config);
  const auto sc = b.config.spectral();
  const auto parent = out_wav.has_parent_path() ? out_wav.parent_path() : fs::path(".");
  fs::create_directories(parent);
  std::vector<fs::path> inputs{checkpoint, accel_csv};
  if (opt.reference_audio) inputs.push_back(*opt.reference_audio);
  const auto stamp = make_stamp(parent / ("." + out_wav.filename().string() + ".stamp"), "reconstruct", b.config,
                                {out_wav.filename().string(), opt.export_dir ? opt.export_dir->string() : ""}, inputs);
  if (stamp.current(ctx, {out_wav})) {
    *ctx.log << "reconstruct: up to date (use --force to rerun)\n";
    return out_wav;
  }

  const auto segs = prepare_segments(read_accel_csv(accel_csv.string()), b.config.prep());
  if (segs.empty()) throw InputError(accel_csv.string() + ": trace shorter than one segment");
  std::optional<UniformSeries> reference;
  if (opt.reference_audio) reference = read_wav(opt.reference_audio->string());
  if (opt.export_dir) fs::create_directories(*opt.export_dir);

  const auto fb = audio_filterbank(sc);
  const MelInverter inv(fb);
  const auto seed = b.config.integer("seed");
  std::vector<Matrix> conditions(segs.size()), generated(segs.size());
  for (std::size_t k = 0; k < segs.size(); ++k) {
    conditions[k] = accel_to_image(segs[k].values, b.condition_stats, sc).pixels;
    generated[k] = b.model.generate(conditions[k], mix_seed(seed, "segment-" + std::to_string(k)));
  }
  std::vector<UniformSeries> pieces(segs.size());
  parallel_for(segs.size(), [&](std::size_t k) { pieces[k] = vocode_generated(generated[k], b, inv); });

  UniformSeries out{sc.audio_rate_hz, {}};
  for (const auto& p : pieces) out.values.insert(out.values.end(), p.values.begin(), p.values.end());
  write_wav_pcm16(out_wav.string(), out);

  if (opt.export_dir) {
    const auto stem = out_wav.stem().string();
    for (std::size_t k = 0; k < segs.size(); ++k) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "_%03zu_", k);
      const auto base = *opt.export_dir / (stem + tag);
      write_png(base.string() + "condition.png", conditions[k]);
      write_png(base.string() + "generated.png", generated[k]);
      if (reference) {
        const std::size_t n = sc.audio_segment_samples(), off = k * n;
        if (off + n > reference->values.size()) continue;
        const std::span<const double> slice(reference->values.data() + off, n);
        write_png(base.string() + "target.png", audio_to_mel(slice, b.target_stats, sc, fb).pixels);
      }
    }
  }
  write_run_config(parent / (out_wav.stem().string() + ".run_config.txt"), b.config);
  stamp.commit();
  *ctx.log << "reconstruct: " << segs.size() << " segments, " << out.duration_s() << " s -> " << out_wav.string() << "\n";
  return out_wav;
}

struct EvaluateOptions {
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> wav_dir;
  std::optional<fs::path> transcripts;
  bool baseline = false;
  bool write_reference = false;
  std::string split = "test";
};

struct EvalSummary {
  std::size_t segments = 0;
  double mean_mcd = 0;
  std::size_t comprehensible = 0;
  std::optional<double> mean_l1;
  std::optional<double> mean_wer;
  std::optional<double> baseline_mcd;
  std::optional<double> baseline_l1;
};

inline nlohmann::ordered_json summary_json(const EvalSummary& s, const std::string& split) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["segments"] = s.segments;
  j["mean_mcd"] = s.mean_mcd;
  j["comprehensible"] = s.comprehensible;
  if (s.mean_l1) j["mean_l1"] = *s.mean_l1;
  if (s.mean_wer) j["mean_wer"] = *s.mean_wer;
  if (s.baseline_mcd) j["baseline"] = {{"mean_mcd", *s.baseline_mcd}, {"mean_l1", *s.baseline_l1}};
  return j;
}

inline std::string read_words(const fs::path& p) {
  std::string text = detail::read_text(p);
  // accept plain text or `start end word` transcripts
  std::istringstream ss(text);
  std::string line, words;
  bool timed = true;
  std::vector<std::string> lines;
  while (std::getline(ss, line)) {
    if (accear::detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    double a, b;
    std::string w, extra;
    if (!(ls >> a >> b >> w) || (ls >> extra)) timed = false;
    lines.push_back(line);
  }
  if (!timed || lines.empty()) return text;
  for (const auto& l : read_transcript(p)) words += (words.empty() ? "" : " ") + l.word;
  return words;
}

inline EvalSummary cmd_evaluate(const Context& ctx, const fs::path& manifest_path, const fs::path& out_dir,
                                const EvaluateOptions& opt) {
  if (opt.checkpoint.has_value() == opt.wav_dir.has_value()) {
    throw ParameterError("evaluate needs exactly one of --checkpoint or --wav-dir");
  }
  if (opt.split != "test" && opt.split != "train" && opt.split != "all") throw ParameterError("split must be test, train or all");
  if (opt.baseline && !opt.checkpoint) throw ParameterError("--baseline needs --checkpoint");
  const auto m = read_manifest(manifest_path);
  std::optional<ModelBundle> bundle;
  RunConfig cfg = ctx.config;
  adopt_dataset(cfg, m);
  if (opt.checkpoint) {
    bundle = load_model(*opt.checkpoint, cfg);
    cfg = bundle->config;
  }
  cfg.validate();
  const auto sc = cfg.spectral();
  if (sc.image_size != m.config.spectral.image_size || sc.audio_n_fft != m.config.spectral.audio_n_fft) {
    throw InputError("checkpoint and manifest use different spectrogram settings");
  }

  fs::create_directories(out_dir);
  std::vector<fs::path> inputs{manifest_path};
  if (opt.checkpoint) inputs.push_back(*opt.checkpoint);
  if (opt.wav_dir) inputs.push_back(*opt.wav_dir);
  if (opt.transcripts) inputs.push_back(*opt.transcripts);
  const auto stamp = make_stamp(out_dir / ".accear-stamp", "evaluate", cfg,
                                {opt.split, opt.baseline ? "baseline" : "", opt.write_reference ? "reference" : "",
                                 opt.wav_dir ? "wav-dir" : "checkpoint"},
                                inputs);
  const auto report = out_dir / "report.csv", summary_path = out_dir / "summary.json";
  if (stamp.current(ctx, {report, summary_path})) {
    *ctx.log << "evaluate: up to date (use --force to rerun)\n";
    const auto j = nlohmann::json::parse(detail::read_text(summary_path));
    EvalSummary s;
    s.segments = j.at("segments").get<std::size_t>();
    s.mean_mcd = j.at("mean_mcd").get<double>();
    s.comprehensible = j.at("comprehensible").get<std::size_t>();
    if (j.contains("mean_l1")) s.mean_l1 = j.at("mean_l1").get<double>();
    if (j.contains("mean_wer")) s.mean_wer = j.at("mean_wer").get<double>();
    if (j.contains("baseline")) {
      s.baseline_mcd = j.at("baseline").at("mean_mcd").get<double>();
      s.baseline_l1 = j.at("baseline").at("mean_l1").get<double>();
    }
    return s;
  }

  const auto sigs = load_segments(m, manifest_path.parent_path(),
                                  [&](const ManifestSegment& g) { return opt.split == "all" || g.split == opt.split; });
  if (sigs.empty()) throw InputError("no segments in split '" + opt.split + "'");
  const std::size_t n = sigs.size();
  const auto fb = audio_filterbank(sc);
  const MelInverter inv(fb);

  // generation is sequential; vocoding and scoring run in parallel
  std::vector<Matrix> conds(n), gens(n), targets(n);
  if (bundle) {
    const auto seed = cfg.integer("seed");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [g, s] = sigs[i];
      conds[i] = accel_to_image(s.accel, bundle->condition_stats, sc).pixels;
      targets[i] = audio_to_mel(s.audio, bundle->target_stats, sc, fb).pixels;
      gens[i] = bundle->model.generate(conds[i], mix_seed(seed, g->segment_id));
    }
  }
  std::vector<UniformSeries> hyp(n);
  std::vector<double> mcds(n), l1s(n), base_mcds(n), base_l1s(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& [g, s] = sigs[i];
    if (bundle) {
      hyp[i] = vocode_generated(gens[i], *bundle, inv);
      l1s[i] = cgan::mean_abs_diff(gens[i], targets[i]);
    } else {
      hyp[i] = read_wav((*opt.wav_dir / (g->segment_id + ".wav")).string());
    }
    const auto ref_c = mfcc(s.audio, sc.audio_rate_hz);
    mcds[i] = mcd(ref_c, mfcc(hyp[i]));
    if (opt.baseline) {
      base_l1s[i] = cgan::mean_abs_diff(conds[i], targets[i]);
      base_mcds[i] = mcd(ref_c, mfcc(vocode_generated(conds[i], *bundle, inv)));
    }
  });

  std::vector<EvalRow> rows;
  EvalSummary sum;
  sum.segments = n;
  double wer_total = 0;
  std::size_t wer_count = 0;
  if (bundle) fs::create_directories(out_dir / "wav");
  if (opt.write_reference) fs::create_directories(out_dir / "reference");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [g, s] = sigs[i];
    EvalRow row{g->segment_id, mcds[i], false, {}};
    if (opt.transcripts && !g->transcript.empty()) {
      const auto hp = *opt.transcripts / (g->segment_id + ".txt");
      if (fs::exists(hp)) {
        row.has_wer = true;
        row.wer = wer(g->transcript, read_words(hp));
        wer_total += row.wer.rate();
        ++wer_count;
      }
    }
    rows.push_back(row);
    sum.mean_mcd += mcds[i] / static_cast<double>(n);
    sum.comprehensible += mcds[i] < kComprehensibleMcd;
    if (bundle) write_wav_pcm16((out_dir / "wav" / (g->segment_id + ".wav")).string(), hyp[i]);
    if (opt.write_reference) {
      write_wav_pcm16((out_dir / "reference" / (g->segment_id + ".wav")).string(), {sc.audio_rate_hz, s.audio});
      detail::write_text(out_dir / "reference" / (g->segment_id + ".txt"), g->transcript + "\n");
    }
  }
  if (bundle) {
    double a = 0;
    for (double v : l1s) a += v / static_cast<double>(n);
    sum.mean_l1 = a;
  }
  if (wer_count > 0) sum.mean_wer = wer_total / static_cast<double>(wer_count);
  if (opt.baseline) {
    double a = 0, c = 0;
    for (std::size_t i = 0; i < n; ++i) a += base_mcds[i] / static_cast<double>(n), c += base_l1s[i] / static_cast<double>(n);
    sum.baseline_mcd = a;
    sum.baseline_l1 = c;
  }

  std::ostringstream csv;
  write_report_csv(csv, rows);
  detail::write_text(report, csv.str());
  detail::write_text(summary_path, summary_json(sum, opt.split).dump(2) + "\n");
  write_run_config(out_dir / "run_config.txt", cfg);
  stamp.commit();
  *ctx.log << "evaluate: " << n << " segments, mean MCD " << sum.mean_mcd;
  if (sum.baseline_mcd) *ctx.log << " (baseline " << *sum.baseline_mcd << ")";
  if (sum.mean_l1) *ctx.log << ", image L1 " << *sum.mean_l1;
  if (sum.baseline_l1) *ctx.log << " (baseline " << *sum.baseline_l1 << ")";
  *ctx.log << "\n";
  return sum;
}

/// Scales a compressed spectrogram by its own range.
inline Matrix self_normalized(const Matrix& compressed) {
  return normalize_compressed(compressed, usable_stats(matrix_range(compressed)));
}

/// WAV -> log mel image, accelerometer CSV -> sqrt linear image, ASPC -> as stored.
inline fs::path cmd_export_spectrogram(const Context& ctx, const fs::path& input, const fs::path& out_png) {
  const auto sc = ctx.config.spectral();
  const auto ext = input.extension().string();
  Matrix img;
  if (ext == ".wav") {
    const auto audio = read_wav(input.string());
    if (audio.values.size() < sc.audio_n_fft) throw InputError(input.string() + ": audio shorter than one frame");
    const auto spec = stft(audio.values, audio.rate_hz, sc.audio_n_fft, sc.audio_hop());
    const auto fb = build_mel_filterbank(sc.mel_bins, sc.audio_n_fft, audio.rate_hz, sc.mel_fmin_hz,
                                         std::min(sc.mel_fmax_hz, audio.rate_hz / 2));
    img = self_normalized(compress(linear_to_mel(spec.magnitude(), fb), Compression::log1p));
  } else if (ext == ".csv") {
    const auto series = condition_trace(read_accel_csv(input.string()), ctx.config.prep());
    if (series.values.size() < sc.accel_n_fft) throw InputError(input.string() + ": trace shorter than one frame");
    const auto spec = stft(series.values, series.rate_hz, sc.accel_n_fft, sc.accel_hop());
    img = self_normalized(compress(spec.magnitude(), Compression::sqrt));
  } else if (ext == ".aspc") {
    img = read_aspc(input.string());
  } else {
    throw InputError(input.string() + ": expected a .wav, .csv or .aspc file");
  }
  if (out_png.has_parent_path()) fs::create_directories(out_png.parent_path());
  write_png(out_png.string(), img);
  *ctx.log << "export-spectrogram: " << img.rows << "x" << img.cols << " -> " << out_png.string() << "\n";
  return out_png;
}

}  // namespace accear::cli
