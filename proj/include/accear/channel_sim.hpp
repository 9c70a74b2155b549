#pragma once

// Synthetic speaker -> chassis -> accelerometer channel, and the paired
// (audio, trace) dataset manifest built on top of it.

#include <accear/audio_io.hpp>
#include <accear/error.hpp>
#include <accear/filters.hpp>
#include <accear/parallel.hpp>
#include <accear/signal_prep.hpp>
#include <accear/spectral.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace accear {

namespace fs = std::filesystem;

struct SensorProfile {
  std::string name = "generic-500";
  double rate_hz = 500.0;
  double corner_hz = 220.0;     // 2nd-order response low-pass
  double gain = 0.05;           // m/s^2 per unit of audio amplitude
  double jitter_ns = 20'000.0;  // timestamp jitter sigma
  double noise_floor = 5e-4;    // m/s^2 RMS per axis
  double gravity = 9.8;         // added to z
  double movement = 0.3;        // walking disturbance RMS, m/s^2

  void validate() const {
    if (!(rate_hz > 0)) throw ParameterError("sensor rate must be positive");
    if (!(corner_hz > 0)) throw ParameterError("response corner must be positive");
    if (!(gain >= 0)) throw ParameterError("response gain must be non-negative");
    if (!(jitter_ns >= 0)) throw ParameterError("timestamp jitter must be non-negative");
    if (!(noise_floor >= 0)) throw ParameterError("noise floor must be non-negative");
    if (!(movement >= 0)) throw ParameterError("movement level must be non-negative");
  }

  bool operator==(const SensorProfile&) const = default;
};

/// Named device presets. The response corner sits at 0.44 x rate.
inline const std::map<std::string, double>& profile_rates() {
  static const std::map<std::string, double> rates{
      {"mate40pro", 500},   {"mate30pro", 500},   {"reno6pro", 420},    {"s21plus", 416},
      {"redmi10xpro", 418}, {"findx3", 425},      {"matepadpro", 250},  {"tabs6lite", 200},
      {"generic-167", 167}, {"generic-200", 200}, {"generic-250", 250}, {"generic-500", 500}};
  return rates;
}

inline SensorProfile sensor_profile(const std::string& name) {
  const auto& rates = profile_rates();
  const auto it = rates.find(name);
  if (it == rates.end()) {
    std::string known;
    for (const auto& [k, v] : rates) known += (known.empty() ? "" : ", ") + k;
    throw ParameterError("unknown sensor profile '" + name + "' (known: " + known + ")");
  }
  SensorProfile p;
  p.name = name;
  p.rate_hz = it->second;
  p.corner_hz = 0.44 * it->second;
  return p;
}

enum class SceneKind { none, quiet_room, restaurant, street, walking, music };

inline const char* scene_name(SceneKind k) {
  switch (k) {
    case SceneKind::none: return "none";
    case SceneKind::quiet_room: return "quiet-room";
    case SceneKind::restaurant: return "restaurant";
    case SceneKind::street: return "street";
    case SceneKind::walking: return "walking";
    case SceneKind::music: return "music";
  }
  return "?";
}

inline SceneKind parse_scene(std::string_view s) {
  for (auto k : {SceneKind::none, SceneKind::quiet_room, SceneKind::restaurant, SceneKind::street, SceneKind::walking,
                 SceneKind::music}) {
    if (s == scene_name(k)) return k;
  }
  throw ParameterError("unknown scene '" + std::string(s) +
                       "' (none, quiet-room, restaurant, street, walking, music)");
}

struct ScenePreset {
  SceneKind kind = SceneKind::none;
  double volume = 1.0;

  void validate() const {
    if (!(volume > 0) || volume > 1) throw ParameterError("volume must be in (0, 1]");
  }
  bool operator==(const ScenePreset&) const = default;
};

// ---------------------------------------------------------------------------
// Simulation

namespace detail {

inline double rms(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

inline void scale_to_rms(std::vector<double>& v, double target) {
  const double r = rms(v);
  if (r > 0) {
    for (auto& x : v) x *= target / r;
  }
}

/// Sum of `count` sinusoids with frequencies uniform in [lo, hi] Hz.
inline std::vector<double> tone_mix(std::size_t n, double rate, std::size_t count, double lo, double hi,
                                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(lo, hi), phase(0.0, 2 * std::numbers::pi);
  std::vector<double> out(n, 0.0);
  for (std::size_t c = 0; c < count; ++c) {
    const double f = freq(rng), p = phase(rng);
    for (std::size_t i = 0; i < n; ++i) out[i] += std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / rate + p);
  }
  return out;
}

inline void add_white(std::vector<double>& v, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& x : v) x += g(rng);
}

/// Blackman-windowed sinc, tabulated on a fine grid of audio-sample offsets.
class ResampleKernel {
 public:
  static constexpr int kOversample = 64;

  ResampleKernel(double cutoff_cycles_per_sample, double half_width_samples)
      : half_width_(half_width_samples), table_(static_cast<std::size_t>(std::ceil(half_width_samples * kOversample)) + 2) {
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const double tau = static_cast<double>(i) / kOversample;
      const double u = std::min(tau / half_width_, 1.0);
      const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * u) + 0.08 * std::cos(2 * std::numbers::pi * u);
      const double a = 2 * cutoff_cycles_per_sample * tau;
      const double s = a == 0 ? 1.0 : std::sin(std::numbers::pi * a) / (std::numbers::pi * a);
      table_[i] = tau >= half_width_ ? 0.0 : w * s;
    }
  }

  double half_width() const { return half_width_; }

  double operator()(double tau) const {
    const double p = std::abs(tau) * kOversample;
    const auto i = static_cast<std::size_t>(p);
    if (i + 1 >= table_.size()) return 0.0;
    const double f = p - static_cast<double>(i);
    return (1 - f) * table_[i] + f * table_[i + 1];
  }

 private:
  double half_width_;
  std::vector<double> table_;
};

}  // namespace detail

inline constexpr double kAntiAliasFraction = 0.42;  // of the sensor rate
inline constexpr double kKernelHalfWidthPeriods = 16.0;

/// Additive scene disturbance at the sensor rate, in m/s^2.
inline std::vector<double> scene_disturbance(SceneKind kind, std::size_t n, double rate_hz, const SensorProfile& profile,
                                             std::mt19937_64& rng) {
  std::vector<double> d(n, 0.0);
  const double top = kAntiAliasFraction * rate_hz;
  switch (kind) {
    case SceneKind::none:
      break;
    case SceneKind::quiet_room:
      detail::add_white(d, 3e-4, rng);
      break;
    case SceneKind::restaurant: {
      d = detail::tone_mix(n, rate_hz, 8, 20.0, top, rng);
      const auto env = detail::tone_mix(n, rate_hz, 2, 1.0, 4.0, rng);
      for (std::size_t i = 0; i < n; ++i) d[i] *= 1.0 + 0.4 * env[i];
      detail::scale_to_rms(d, 2e-3);
      detail::add_white(d, 5e-4, rng);
      break;
    }
    case SceneKind::street: {
      std::normal_distribution<double> g(0.0, 1.0);
      const double a = std::exp(-2 * std::numbers::pi * 8.0 / rate_hz);
      double s = 0;
      for (auto& x : d) x = s = a * s + (1 - a) * g(rng);
      detail::scale_to_rms(d, 3e-3);
      detail::add_white(d, 1e-3, rng);
      break;
    }
    case SceneKind::walking:
      d = detail::tone_mix(n, rate_hz, 4, 0.8, 15.0, rng);
      detail::scale_to_rms(d, profile.movement);
      break;
    case SceneKind::music: {
      std::uniform_int_distribution<int> note(0, 24);
      const auto block = static_cast<std::size_t>(std::max(1.0, 0.5 * rate_hz));
      for (std::size_t start = 0; start < n; start += block) {
        for (int v = 0; v < 3; ++v) {
          const double f = std::min(top, 40.0 * std::pow(2.0, note(rng) / 12.0));
          for (std::size_t i = start; i < std::min(n, start + block); ++i) {
            d[i] += std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / rate_hz);
          }
        }
      }
      detail::scale_to_rms(d, 2e-3);
      break;
    }
  }
  return d;
}

/// Speech audio -> timestamped 3-axis trace. Deterministic per seed.
inline RawAccelTrace simulate_trace(const UniformSeries& audio, const SensorProfile& profile, const ScenePreset& scene,
                                    std::uint64_t seed) {
  profile.validate();
  scene.validate();
  audio.validate();
  const double fs = audio.rate_hz;
  const double duration = audio.duration_s();
  if (duration * profile.rate_hz < 1.0) throw InputError("audio shorter than one sensor sample");
  if (profile.corner_hz >= fs / 2) throw ParameterError("response corner must be below the audio Nyquist");

  std::vector<double> v = audio.values;
  for (auto& x : v) x *= scene.volume;
  v = sosfilt(butterworth_lowpass(2, profile.corner_hz, fs), v);

  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(std::ceil(duration * profile.rate_hz)) + 2;
  RawAccelTrace trace;
  trace.timestamps_ns.resize(n);
  trace.samples.resize(n);
  std::normal_distribution<double> jitter(0.0, std::max(profile.jitter_ns, 1e-300));
  for (std::size_t k = 0; k < n; ++k) {
    const double nominal = static_cast<double>(k) * 1e9 / profile.rate_hz;
    const double j = (k == 0 || profile.jitter_ns == 0) ? 0.0 : jitter(rng);
    auto t = static_cast<std::int64_t>(std::llround(nominal + j));
    if (k > 0) t = std::max(t, trace.timestamps_ns[k - 1] + 1);
    trace.timestamps_ns[k] = std::max<std::int64_t>(t, 0);
  }

  // band-limited evaluation of the filtered audio at each sensor timestamp
  const detail::ResampleKernel kernel(kAntiAliasFraction * profile.rate_hz / fs,
                                      kKernelHalfWidthPeriods * fs / profile.rate_hz);
  const auto len = static_cast<std::ptrdiff_t>(v.size());
  std::vector<double> sensed(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double p = static_cast<double>(trace.timestamps_ns[k]) * 1e-9 * fs;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(p - kernel.half_width()));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(p + kernel.half_width()));
    double acc = 0, norm = 0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double h = kernel(p - static_cast<double>(i));
      norm += h;
      if (i >= 0 && i < len) acc += h * v[static_cast<std::size_t>(i)];
    }
    sensed[k] = norm > 0 ? profile.gain * acc / norm : 0.0;
  }

  const auto disturbance = scene_disturbance(scene.kind, n, profile.rate_hz, profile, rng);
  std::normal_distribution<double> noise(0.0, std::max(profile.noise_floor, 1e-300));
  for (std::size_t k = 0; k < n; ++k) {
    const double a = sensed[k] + disturbance[k];
    std::array<double, 3> s{0.2 * a, 0.2 * a, a + profile.gravity};
    if (profile.noise_floor > 0) {
      for (auto& c : s) c += noise(rng);
    }
    trace.samples[k] = s;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Transcripts: one `start end word` line per word, times in seconds.

struct TimedWord {
  double start = 0;
  double end = 0;
  std::string word;
  bool operator==(const TimedWord&) const = default;
};

inline std::vector<TimedWord> read_transcript(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open transcript " + path.string());
  std::vector<TimedWord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss{std::string(t)};
    TimedWord w;
    if (!(ss >> w.start >> w.end >> w.word) || w.end < w.start) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected `start end word`");
    }
    out.push_back(std::move(w));
  }
  return out;
}

inline void write_transcript(const fs::path& path, const std::vector<TimedWord>& words) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write transcript " + path.string());
  for (const auto& w : words) out << detail::format_double(w.start) << ' ' << detail::format_double(w.end) << ' ' << w.word << '\n';
}

/// Words whose midpoint falls in [start, end), space separated.
inline std::string words_between(const std::vector<TimedWord>& words, double start, double end) {
  std::string out;
  for (const auto& w : words) {
    const double mid = 0.5 * (w.start + w.end);
    if (mid >= start && mid < end) out += (out.empty() ? "" : " ") + w.word;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired dataset manifest

inline constexpr int kManifestSchema = 1;

struct ManifestSegment {
  std::string segment_id;
  std::string recording;
  std::string accel_csv_path;  // relative to the manifest directory
  std::string audio_wav_path;
  std::size_t index = 0;  // within the recording
  double start_s = 0;
  std::size_t audio_offset = 0;  // samples at the audio rate
  std::size_t accel_offset = 0;  // samples on the uniform accelerometer grid
  std::string split;             // "train" or "test"
  NormStats condition_stats;     // compressed-domain range of this segment
  NormStats target_stats;
  std::string transcript;
  bool operator==(const ManifestSegment&) const = default;
};

struct WordOverlap {
  std::size_t training_words = 0;
  std::size_t testing_words = 0;
  std::size_t overlapping_words = 0;
  bool operator==(const WordOverlap&) const = default;
};

struct DatasetConfig {
  SensorProfile profile;
  ScenePreset scene;
  std::uint64_t seed = 1;
  double split_ratio = 0.9;
  PrepConfig prep;
  SpectralConfig spectral;

  void validate() const {
    profile.validate();
    scene.validate();
    spectral.validate();
    if (!(split_ratio > 0) || split_ratio > 1) throw ParameterError("split ratio must be in (0, 1]");
    if (std::abs(prep.target_rate_hz - spectral.accel_rate_hz) > 1e-9) {
      throw ParameterError("accelerometer grid rate and spectral accel rate differ");
    }
    if (std::abs(prep.segment_seconds - spectral.segment_seconds) > 1e-12) {
      throw ParameterError("segment length differs between preparation and spectral settings");
    }
  }
};

struct PairedManifest {
  int schema = kManifestSchema;
  DatasetConfig config;
  NormStats condition_stats;  // over the training split
  NormStats target_stats;
  std::vector<ManifestSegment> segments;
  bool has_transcripts = false;
  WordOverlap overlap;
};

inline void to_json(nlohmann::ordered_json& j, const NormStats& s) { j = {{"min", s.min}, {"max", s.max}}; }
inline void from_json(const nlohmann::ordered_json& j, NormStats& s) {
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
}

inline nlohmann::ordered_json manifest_to_json(const PairedManifest& m) {
  using nlohmann::ordered_json;
  const auto& c = m.config;
  ordered_json j;
  j["schema"] = m.schema;
  j["seed"] = c.seed;
  j["split_ratio"] = c.split_ratio;
  j["profile"] = {{"name", c.profile.name},           {"rate_hz", c.profile.rate_hz},
                  {"corner_hz", c.profile.corner_hz}, {"gain", c.profile.gain},
                  {"jitter_ns", c.profile.jitter_ns}, {"noise_floor", c.profile.noise_floor},
                  {"gravity", c.profile.gravity},     {"movement", c.profile.movement}};
  j["scene"] = {{"name", scene_name(c.scene.kind)}, {"volume", c.scene.volume}};
  j["prep"] = {{"target_rate_hz", c.prep.target_rate_hz},
               {"highpass_hz", c.prep.highpass_hz},
               {"segment_seconds", c.prep.segment_seconds},
               {"axis", axis_name(c.prep.axis)}};
  const auto& s = c.spectral;
  j["spectral"] = {{"segment_seconds", s.segment_seconds}, {"image_size", s.image_size},
                   {"accel_rate_hz", s.accel_rate_hz},     {"accel_n_fft", s.accel_n_fft},
                   {"audio_rate_hz", s.audio_rate_hz},     {"audio_n_fft", s.audio_n_fft},
                   {"mel_bins", s.mel_bins},               {"mel_fmin_hz", s.mel_fmin_hz},
                   {"mel_fmax_hz", s.mel_fmax_hz},         {"per_image_norm", s.per_image_norm}};
  j["stats"] = {{"condition", m.condition_stats}, {"target", m.target_stats}};
  if (m.has_transcripts) {
    j["word_overlap"] = {{"training_words", m.overlap.training_words},
                         {"testing_words", m.overlap.testing_words},
                         {"overlapping_words", m.overlap.overlapping_words}};
  }
  auto& segs = j["segments"] = ordered_json::array();
  for (const auto& g : m.segments) {
    segs.push_back({{"segment_id", g.segment_id},
                    {"recording", g.recording},
                    {"accel_csv_path", g.accel_csv_path},
                    {"audio_wav_path", g.audio_wav_path},
                    {"index", g.index},
                    {"offsets", {{"start_s", g.start_s}, {"audio_sample", g.audio_offset}, {"accel_sample", g.accel_offset}}},
                    {"split", g.split},
                    {"stats", {{"condition", g.condition_stats}, {"target", g.target_stats}}},
                    {"transcript", g.transcript}});
  }
  return j;
}

inline PairedManifest manifest_from_json(const nlohmann::ordered_json& j) {
  try {
    PairedManifest m;
    m.schema = j.at("schema").get<int>();
    if (m.schema != kManifestSchema) throw InputError("unsupported manifest schema " + std::to_string(m.schema));
    auto& c = m.config;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.split_ratio = j.at("split_ratio").get<double>();
    const auto& p = j.at("profile");
    c.profile = {p.at("name").get<std::string>(),  p.at("rate_hz").get<double>(),   p.at("corner_hz").get<double>(),
                 p.at("gain").get<double>(),       p.at("jitter_ns").get<double>(), p.at("noise_floor").get<double>(),
                 p.at("gravity").get<double>(),    p.at("movement").get<double>()};
    c.scene = {parse_scene(j.at("scene").at("name").get<std::string>()), j.at("scene").at("volume").get<double>()};
    const auto& pr = j.at("prep");
    c.prep.target_rate_hz = pr.at("target_rate_hz").get<double>();
    c.prep.highpass_hz = pr.at("highpass_hz").get<double>();
    c.prep.segment_seconds = pr.at("segment_seconds").get<double>();
    c.prep.axis = parse_axis(pr.at("axis").get<std::string>());
    const auto& s = j.at("spectral");
    c.spectral.segment_seconds = s.at("segment_seconds").get<double>();
    c.spectral.image_size = s.at("image_size").get<std::size_t>();
    c.spectral.accel_rate_hz = s.at("accel_rate_hz").get<double>();
    c.spectral.accel_n_fft = s.at("accel_n_fft").get<std::size_t>();
    c.spectral.audio_rate_hz = s.at("audio_rate_hz").get<double>();
    c.spectral.audio_n_fft = s.at("audio_n_fft").get<std::size_t>();
    c.spectral.mel_bins = s.at("mel_bins").get<std::size_t>();
    c.spectral.mel_fmin_hz = s.at("mel_fmin_hz").get<double>();
    c.spectral.mel_fmax_hz = s.at("mel_fmax_hz").get<double>();
    c.spectral.per_image_norm = s.at("per_image_norm").get<bool>();
    m.condition_stats = j.at("stats").at("condition").get<NormStats>();
    m.target_stats = j.at("stats").at("target").get<NormStats>();
    if (j.contains("word_overlap")) {
      m.has_transcripts = true;
      const auto& w = j.at("word_overlap");
      m.overlap = {w.at("training_words").get<std::size_t>(), w.at("testing_words").get<std::size_t>(),
                   w.at("overlapping_words").get<std::size_t>()};
    }
    for (const auto& g : j.at("segments")) {
      ManifestSegment seg;
      seg.segment_id = g.at("segment_id").get<std::string>();
      seg.recording = g.at("recording").get<std::string>();
      seg.accel_csv_path = g.at("accel_csv_path").get<std::string>();
      seg.audio_wav_path = g.at("audio_wav_path").get<std::string>();
      seg.index = g.at("index").get<std::size_t>();
      seg.start_s = g.at("offsets").at("start_s").get<double>();
      seg.audio_offset = g.at("offsets").at("audio_sample").get<std::size_t>();
      seg.accel_offset = g.at("offsets").at("accel_sample").get<std::size_t>();
      seg.split = g.at("split").get<std::string>();
      if (seg.split != "train" && seg.split != "test") throw InputError("segment split must be train or test");
      seg.condition_stats = g.at("stats").at("condition").get<NormStats>();
      seg.target_stats = g.at("stats").at("target").get<NormStats>();
      seg.transcript = g.at("transcript").get<std::string>();
      m.segments.push_back(std::move(seg));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  } catch (const ParameterError& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
}

inline std::string manifest_text(const PairedManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

inline PairedManifest parse_manifest(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

inline bool operator==(const PairedManifest& a, const PairedManifest& b) { return manifest_to_json(a) == manifest_to_json(b); }

inline void write_manifest(const fs::path& path, const PairedManifest& m) {
  const auto text = manifest_text(m);
  detail::write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline PairedManifest read_manifest(const fs::path& path) {
  const auto bytes = detail::read_file(path.string());
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Dataset assembly

/// Uniform accelerometer grid and audio of one recording.
struct RecordingSignals {
  UniformSeries accel;  // conditioned (normalized, high-passed) selected axis
  UniformSeries audio;
};

struct SegmentSignals {
  std::vector<double> accel;
  std::vector<double> audio;
};

inline std::size_t segment_count(const RecordingSignals& r, const SpectralConfig& sc) {
  return std::min(r.audio.values.size() / sc.audio_segment_samples(), r.accel.values.size() / sc.accel_segment_samples());
}

inline SegmentSignals slice_segment(const RecordingSignals& r, const ManifestSegment& g, const SpectralConfig& sc) {
  const std::size_t na = sc.audio_segment_samples(), nc = sc.accel_segment_samples();
  if (g.audio_offset + na > r.audio.values.size() || g.accel_offset + nc > r.accel.values.size()) {
    throw InputError("segment " + g.segment_id + " extends past the end of its recording");
  }
  const auto ab = r.audio.values.begin() + static_cast<std::ptrdiff_t>(g.audio_offset);
  const auto cb = r.accel.values.begin() + static_cast<std::ptrdiff_t>(g.accel_offset);
  return {std::vector<double>(cb, cb + static_cast<std::ptrdiff_t>(nc)), std::vector<double>(ab, ab + static_cast<std::ptrdiff_t>(na))};
}

inline RecordingSignals load_recording(const fs::path& accel_csv, const fs::path& audio_wav, const PrepConfig& prep,
                                       double audio_rate_hz) {
  RecordingSignals r{condition_trace(read_accel_csv(accel_csv.string()), prep), read_wav(audio_wav.string())};
  if (std::abs(r.audio.rate_hz - audio_rate_hz) > 1e-9) {
    throw InputError(audio_wav.string() + ": sample rate " + std::to_string(r.audio.rate_hz) + " Hz, expected " +
                     std::to_string(audio_rate_hz) + " Hz");
  }
  return r;
}

/// Signals for the segments accepted by `keep`, reading each recording once.
template <class Pred>
std::vector<std::pair<const ManifestSegment*, SegmentSignals>> load_segments(const PairedManifest& m,
                                                                             const fs::path& manifest_dir, Pred keep) {
  std::vector<const ManifestSegment*> chosen;
  std::vector<std::string> recordings;
  for (const auto& g : m.segments) {
    if (!keep(g)) continue;
    chosen.push_back(&g);
    if (std::find(recordings.begin(), recordings.end(), g.recording) == recordings.end()) recordings.push_back(g.recording);
  }
  std::vector<std::vector<std::pair<const ManifestSegment*, SegmentSignals>>> per(recordings.size());
  parallel_for(recordings.size(), [&](std::size_t r) {
    const ManifestSegment* first = nullptr;
    for (auto* g : chosen) {
      if (g->recording == recordings[r]) {
        first = g;
        break;
      }
    }
    const auto rec = load_recording(manifest_dir / first->accel_csv_path, manifest_dir / first->audio_wav_path,
                                    m.config.prep, m.config.spectral.audio_rate_hz);
    for (auto* g : chosen) {
      if (g->recording == recordings[r]) per[r].emplace_back(g, slice_segment(rec, *g, m.config.spectral));
    }
  });
  // back to manifest order
  std::vector<std::pair<const ManifestSegment*, SegmentSignals>> out;
  for (auto* g : chosen) {
    for (auto& lst : per) {
      for (auto& item : lst) {
        if (item.first == g) out.push_back(std::move(item));
      }
    }
  }
  return out;
}

inline NormStats merge_stats(const NormStats& a, const NormStats& b) { return {std::min(a.min, b.min), std::max(a.max, b.max)}; }

/// Guards against a flat range, which cannot be scaled into [0, 1].
inline NormStats usable_stats(NormStats s) {
  if (!(s.max > s.min)) s.max = s.min + 1.0;
  return s;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) h = (h ^ c) * 0x100000001b3ULL;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string relative_path(const fs::path& target, const fs::path& base) {
  return fs::weakly_canonical(target).lexically_relative(fs::weakly_canonical(base)).generic_string();
}

/// Simulates every WAV in `audio_dir`, writes `traces/<stem>.csv` and
/// `manifest.json` under `out_dir`, and returns the manifest.
inline PairedManifest make_dataset(const fs::path& audio_dir, const fs::path& out_dir, const DatasetConfig& cfg) {
  cfg.validate();
  const auto wavs = list_wavs(audio_dir);
  if (wavs.empty()) throw InputError("no input audio in " + audio_dir.string());
  fs::create_directories(out_dir / "traces");
  const auto& sc = cfg.spectral;
  const auto fb = audio_filterbank(sc);

  struct FileResult {
    std::vector<ManifestSegment> segments;
    bool has_transcript = false;
  };
  std::vector<FileResult> results(wavs.size());
  parallel_for(wavs.size(), [&](std::size_t f) {
    const auto& wav = wavs[f];
    const std::string stem = wav.stem().string();
    const auto audio = read_wav(wav.string());
    if (std::abs(audio.rate_hz - sc.audio_rate_hz) > 1e-9) {
      throw InputError(wav.string() + ": expected " + std::to_string(sc.audio_rate_hz) + " Hz audio");
    }
    const auto trace = simulate_trace(audio, cfg.profile, cfg.scene, mix_seed(cfg.seed, stem));
    const auto csv = out_dir / "traces" / (stem + ".csv");
    write_accel_csv(csv.string(), trace);

    std::vector<TimedWord> words;
    const auto txt = fs::path(wav).replace_extension(".txt");
    auto& res = results[f];
    if (fs::exists(txt)) {
      words = read_transcript(txt);
      res.has_transcript = true;
    }

    const RecordingSignals rec{condition_trace(trace, cfg.prep), audio};
    const std::size_t count = segment_count(rec, sc);
    for (std::size_t k = 0; k < count; ++k) {
      ManifestSegment g;
      char id[32];
      std::snprintf(id, sizeof id, "_%03zu", k);
      g.segment_id = stem + id;
      g.recording = stem;
      g.accel_csv_path = relative_path(csv, out_dir);
      g.audio_wav_path = relative_path(wav, out_dir);
      g.index = k;
      g.start_s = static_cast<double>(k) * sc.segment_seconds;
      g.audio_offset = k * sc.audio_segment_samples();
      g.accel_offset = k * sc.accel_segment_samples();
      const auto sig = slice_segment(rec, g, sc);
      g.condition_stats = matrix_range(accel_compressed(sig.accel, sc));
      g.target_stats = matrix_range(audio_compressed(sig.audio, sc, fb));
      g.transcript = words_between(words, g.start_s, g.start_s + sc.segment_seconds);
      res.segments.push_back(std::move(g));
    }
  });

  PairedManifest m;
  m.config = cfg;
  for (auto& r : results) {
    m.has_transcripts = m.has_transcripts || r.has_transcript;
    for (auto& g : r.segments) m.segments.push_back(std::move(g));
  }
  if (m.segments.empty()) throw InputError("input audio is shorter than one segment");

  // seeded split over segments
  std::mt19937_64 rng(mix_seed(cfg.seed, "split"));
  std::vector<std::size_t> order(m.segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.split_ratio * static_cast<double>(order.size()) + 1e-9)));
  for (std::size_t r = 0; r < order.size(); ++r) m.segments[order[r]].split = r < n_train ? "train" : "test";

  bool first = true;
  std::set<std::string> train_words, test_words;
  for (const auto& g : m.segments) {
    auto& bag = g.split == "train" ? train_words : test_words;
    std::istringstream ss(g.transcript);
    for (std::string w; ss >> w;) bag.insert(w);
    if (g.split != "train") continue;
    m.condition_stats = first ? g.condition_stats : merge_stats(m.condition_stats, g.condition_stats);
    m.target_stats = first ? g.target_stats : merge_stats(m.target_stats, g.target_stats);
    first = false;
  }
  m.condition_stats = usable_stats(m.condition_stats);
  m.target_stats = usable_stats(m.target_stats);
  if (m.has_transcripts) {
    std::size_t both = 0;
    for (const auto& w : test_words) both += train_words.count(w);
    m.overlap = {train_words.size(), test_words.size(), both};
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace accear
