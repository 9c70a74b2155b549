#pragma once

// Run configuration: one flat key table shared by the config file
// (`key = value` lines, `#` comments) and the command-line flags.

#include <accear/cgan.hpp>
#include <accear/channel_sim.hpp>
#include <accear/error.hpp>
#include <accear/synth.hpp>
#include <accear/vocoder.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace accear {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"seed", "1", "seed for simulation, splitting, initialization and training"},
      // simulation
      {"profile", "generic-500", "sensor profile name"},
      {"scene", "none", "scene preset: none, quiet-room, restaurant, street, walking, music"},
      {"volume", "1", "playback volume scale in (0, 1]"},
      {"gain", "0.05", "sensor response gain, m/s^2 per unit amplitude"},
      {"noise-floor", "0.0005", "sensor noise floor, m/s^2 RMS"},
      {"jitter-ns", "20000", "timestamp jitter sigma in ns"},
      {"split-ratio", "0.9", "fraction of segments assigned to training"},
      // preparation
      {"accel-rate", "1000", "uniform accelerometer grid rate in Hz"},
      {"highpass-hz", "20", "high-pass cutoff in Hz"},
      {"segment-seconds", "4", "segment length in seconds"},
      {"axis", "z", "accelerometer axis: x, y or z"},
      // spectrograms
      {"image-size", "128", "square image size (power of two >= 32)"},
      {"accel-n-fft", "256", "accelerometer STFT size"},
      {"audio-rate", "16000", "audio sample rate in Hz"},
      {"audio-n-fft", "auto", "audio STFT size; auto picks the smallest power of two >= max(512, hop)"},
      {"mel-fmin", "0", "lowest mel filter edge in Hz"},
      {"mel-fmax", "8000", "highest mel filter edge in Hz"},
      {"per-image-norm", "false", "scale each image by its own range instead of dataset stats"},
      // model and training
      {"ngf", "64", "generator base channels"},
      {"ndf", "64", "discriminator base channels"},
      {"epochs", "200", "total training epochs"},
      {"phase1-epochs", "100", "leading epochs with plain gradient steps before Adam"},
      {"lr", "0.0002", "learning rate"},
      {"batch-size", "1", "pairs per update"},
      {"lambda", "100", "L1 weight"},
      {"checkpoint-every", "10", "epochs between numbered checkpoints (0 disables)"},
      // vocoder
      {"gl-iterations", "60", "Griffin-Lim iterations"},
      {"gl-momentum", "0", "Griffin-Lim momentum in [0, 1)"},
      // synthetic corpus
      {"corpus-recordings", "50", "recordings written by synthesize-corpus"},
      {"corpus-seconds", "16", "length of each synthetic recording in seconds"},
      {"f0-min", "60", "lowest synthetic speaker F0 in Hz"},
      {"f0-max", "240", "highest synthetic speaker F0 in Hz"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_keys()) {
      if (k.name == key) return true;
    }
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ParameterError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ParameterError("unknown config key '" + key + "'");
    return it->second;
  }

  /// `key = value` lines; blank lines and `#` comments ignored.
  void merge_text(std::string_view text, const std::string& source) {
    std::size_t lineno = 0, pos = 0;
    while (pos <= text.size()) {
      const auto end = std::min(text.find('\n', pos), text.size());
      const auto line = detail::trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++lineno;
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ParameterError(source + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key(detail::trim(line.substr(0, eq)));
      if (!known(key)) throw ParameterError(source + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
      values_[key] = std::string(detail::trim(line.substr(eq + 1)));
    }
  }

  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
  }

  double number(const std::string& key) const {
    const auto& s = get(key);
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ParameterError("config key '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ParameterError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool flag(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ParameterError("config key '" + key + "': expected true or false, got '" + s + "'");
  }

  SpectralConfig spectral() const {
    SpectralConfig s;
    s.segment_seconds = number("segment-seconds");
    s.image_size = integer("image-size");
    s.mel_bins = s.image_size;
    s.accel_rate_hz = number("accel-rate");
    s.accel_n_fft = integer("accel-n-fft");
    s.audio_rate_hz = number("audio-rate");
    if (get("audio-n-fft") == "auto") {
      std::size_t n = 512;
      if (s.image_size > 0) {
        while (n < s.audio_hop()) n *= 2;
      }
      s.audio_n_fft = n;
    } else {
      s.audio_n_fft = integer("audio-n-fft");
    }
    s.mel_fmin_hz = number("mel-fmin");
    s.mel_fmax_hz = number("mel-fmax");
    s.per_image_norm = flag("per-image-norm");
    return s;
  }

  PrepConfig prep() const {
    PrepConfig p;
    p.target_rate_hz = number("accel-rate");
    p.highpass_hz = number("highpass-hz");
    p.segment_seconds = number("segment-seconds");
    p.axis = parse_axis(get("axis"));
    return p;
  }

  DatasetConfig dataset() const {
    DatasetConfig d;
    d.profile = sensor_profile(get("profile"));
    d.profile.gain = number("gain");
    d.profile.noise_floor = number("noise-floor");
    d.profile.jitter_ns = number("jitter-ns");
    d.scene = {parse_scene(get("scene")), number("volume")};
    d.seed = integer("seed");
    d.split_ratio = number("split-ratio");
    d.prep = prep();
    d.spectral = spectral();
    return d;
  }

  cgan::NetConfig net() const { return {integer("image-size"), integer("ngf"), integer("ndf")}; }

  cgan::TrainConfig train() const {
    cgan::TrainConfig t;
    t.epochs = integer("epochs");
    t.phase1_epochs = integer("phase1-epochs");
    t.lr = number("lr");
    t.batch_size = integer("batch-size");
    t.seed = integer("seed");
    t.lambda = number("lambda");
    t.checkpoint_every = integer("checkpoint-every");
    return t;
  }

  GriffinLimConfig vocoder() const {
    GriffinLimConfig g;
    g.iterations = integer("gl-iterations");
    g.momentum = number("gl-momentum");
    return g;
  }

  SynthConfig synth() const {
    SynthConfig s;
    s.recordings = integer("corpus-recordings");
    s.seconds = number("corpus-seconds");
    s.rate_hz = number("audio-rate");
    s.seed = integer("seed");
    s.f0_min_hz = number("f0-min");
    s.f0_max_hz = number("f0-max");
    return s;
  }

  /// Parses and validates every section, so a bad value fails before any work.
  void validate() const {
    dataset().validate();
    net().validate();
    train().validate();
    vocoder().validate();
    synth().validate();
  }

  /// Resolved values in table order; `audio-n-fft = auto` is written out.
  std::string text() const {
    std::string out;
    for (const auto& k : config_keys()) {
      std::string v = get(k.name);
      if (k.name == "audio-n-fft" && v == "auto") v = std::to_string(spectral().audio_n_fft);
      out += k.name + " = " + v + "\n";
    }
    return out;
  }

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace accear
