#pragma once

// Speech-like test corpus: voiced syllables from a pulse train through
// formant resonators, fricative onsets from shaped noise, and timed words.

#include <accear/audio_io.hpp>
#include <accear/channel_sim.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace accear {

struct SynthConfig {
  std::size_t recordings = 3;
  double seconds = 12.0;
  double rate_hz = 16000.0;
  std::uint64_t seed = 1;
  double f0_min_hz = 60.0;
  double f0_max_hz = 240.0;

  void validate() const {
    if (recordings == 0) throw ParameterError("need at least one recording");
    if (!(seconds > 0) || !(rate_hz > 0)) throw ParameterError("duration and rate must be positive");
    if (!(f0_min_hz > 0) || f0_max_hz < f0_min_hz) throw ParameterError("bad F0 range");
  }
};

struct SynthRecording {
  std::string stem;
  UniformSeries audio;
  std::vector<TimedWord> words;
};

namespace detail {

struct Vowel {
  double f1, f2, f3;
};

// rough adult formant targets
inline constexpr std::array<Vowel, 8> kVowels{{{730, 1090, 2440},
                                               {270, 2290, 3010},
                                               {530, 1840, 2480},
                                               {660, 1720, 2410},
                                               {300, 870, 2240},
                                               {570, 840, 2410},
                                               {440, 1020, 2240},
                                               {640, 1190, 2390}}};

enum class Onset { none, fricative, plosive, nasal };

struct Syllable {
  Onset onset;
  std::size_t vowel;
};

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words{"alpha", "bravo",  "coffee", "delta",  "echo",   "fix",
                                              "golf",  "hotel",  "india",  "jazz",   "kilo",   "lima",
                                              "mike",  "north",  "oscar",  "papa",   "quiet",  "radio",
                                              "seven", "tango",  "under",  "victor", "window", "yellow"};
  return words;
}

/// Each word maps to a fixed syllable sequence derived from its letters.
inline std::vector<Syllable> word_syllables(const std::string& w) {
  std::vector<Syllable> out;
  const std::size_t n = 1 + w.size() % 3;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<unsigned char>(w[(2 * i) % w.size()]);
    out.push_back({static_cast<Onset>(c % 4), static_cast<std::size_t>((c / 4 + i) % kVowels.size())});
  }
  return out;
}

/// Two-pole resonator with unit gain at DC, so energy near F0 survives.
struct Resonator {
  double y1 = 0, y2 = 0;
  double step(double x, double f, double bw, double rate) {
    const double r = std::exp(-std::numbers::pi * bw / rate);
    const double b = 2 * r * std::cos(2 * std::numbers::pi * f / rate);
    const double y = (1 - b + r * r) * x + b * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

inline SynthRecording synthesize_recording(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  char stem[32];
  std::snprintf(stem, sizeof stem, "utt%03zu", index);
  std::mt19937_64 rng(mix_seed(cfg.seed, stem));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fs = cfg.rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(cfg.seconds * fs));

  const double f0_base = cfg.f0_min_hz + (cfg.f0_max_hz - cfg.f0_min_hz) * u(rng);
  const double formant_scale = 0.9 + 0.25 * (f0_base - cfg.f0_min_hz) / std::max(1.0, cfg.f0_max_hz - cfg.f0_min_hz);
  const double vibrato = 2 * std::numbers::pi * u(rng);

  SynthRecording rec{stem, {fs, std::vector<double>(n, 0.0)}, {}};
  std::vector<double> voiced_track(n, 0.0), noise_track(n, 0.0);
  std::array<detail::Resonator, 3> voice{};
  detail::Resonator hiss;
  std::normal_distribution<double> white(0.0, 1.0);
  double phase = 0, glottis = 0;
  // glottal source roll-off, about -6 dB per octave above 150 Hz
  const double tilt = std::exp(-2 * std::numbers::pi * 150.0 / fs);
  double t = 0.15 + 0.2 * u(rng);

  const auto& vocab = detail::vocabulary();
  while (true) {
    const std::string& word = vocab[static_cast<std::size_t>(rng() % vocab.size())];
    const auto syllables = detail::word_syllables(word);
    const double pitch = f0_base * (0.9 + 0.25 * u(rng));
    std::vector<double> durations;
    double total = 0;
    for (std::size_t s = 0; s < syllables.size(); ++s) {
      durations.push_back(0.16 * (0.85 + 0.3 * u(rng)));
      total += durations.back();
    }
    if (t + total > cfg.seconds - 0.05) break;
    rec.words.push_back({t, t + total, word});

    for (std::size_t s = 0; s < syllables.size(); ++s) {
      const auto& v = detail::kVowels[syllables[s].vowel];
      const auto& next = detail::kVowels[syllables[(s + 1) % syllables.size()].vowel];
      const auto begin = static_cast<std::size_t>(t * fs);
      const auto len = static_cast<std::size_t>(durations[s] * fs);
      const double onset_len = syllables[s].onset == detail::Onset::none ? 0.0 : 0.25;
      for (std::size_t i = 0; i < len && begin + i < n; ++i) {
        const double p = static_cast<double>(i) / static_cast<double>(len);
        const double time = static_cast<double>(begin + i) / fs;
        // attack / release envelope
        const double env = std::min({1.0, p / 0.12, (1.0 - p) / 0.2});
        const double f0 = pitch * (1.0 + 0.04 * std::sin(2 * std::numbers::pi * 5.0 * time + vibrato)) * (1.05 - 0.1 * p);
        phase += f0 / fs;
        double pulse = 0;
        if (phase >= 1.0) {
          phase -= 1.0;
          pulse = 1.0;
        }
        const double blend = std::max(0.0, (p - 0.6) / 0.4);
        const double f1 = formant_scale * ((1 - blend) * v.f1 + blend * next.f1);
        const double f2 = formant_scale * ((1 - blend) * v.f2 + blend * next.f2);
        const double f3 = formant_scale * ((1 - blend) * v.f3 + blend * next.f3);
        glottis = tilt * glottis + (1 - tilt) * pulse;
        double voiced = glottis * (p < onset_len && syllables[s].onset == detail::Onset::fricative ? 0.2 : 1.0);
        voiced = voice[0].step(voiced, f1, 90, fs);
        voiced = voice[1].step(voiced, f2, 110, fs);
        voiced = voice[2].step(voiced, f3, 160, fs);

        double noise = 0;
        if (p < onset_len) {
          const double q = p / onset_len;
          switch (syllables[s].onset) {
            case detail::Onset::fricative:
              noise = hiss.step(white(rng), 5500.0, 2500.0, fs);
              break;
            case detail::Onset::plosive:
              noise = q < 0.25 ? 0.5 * white(rng) * (1 - 4 * q) : 0.0;
              break;
            case detail::Onset::nasal:
              voiced *= 0.4;
              break;
            case detail::Onset::none:
              break;
          }
        }
        voiced_track[begin + i] += env * voiced;
        noise_track[begin + i] += noise;
      }
      t += durations[s];
    }
    t += 0.08 + 0.3 * u(rng);
  }
  // voicing carries most of the energy, as in natural speech
  detail::scale_to_rms(voiced_track, 0.2);
  detail::scale_to_rms(noise_track, 0.03);
  for (std::size_t i = 0; i < n; ++i) rec.audio.values[i] = voiced_track[i] + noise_track[i];
  rec.audio = peak_normalize(rec.audio, -3.0);
  return rec;
}

inline std::vector<SynthRecording> synthesize_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SynthRecording> out(cfg.recordings);
  parallel_for(cfg.recordings, [&](std::size_t i) { out[i] = synthesize_recording(cfg, i); });
  return out;
}

/// Writes `<stem>.wav` and `<stem>.txt` per recording.
inline void write_corpus(const fs::path& dir, const std::vector<SynthRecording>& recs) {
  fs::create_directories(dir);
  for (const auto& r : recs) {
    write_wav_pcm16((dir / (r.stem + ".wav")).string(), r.audio);
    write_transcript(dir / (r.stem + ".txt"), r.words);
  }
}

}  // namespace accear
