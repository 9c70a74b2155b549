#pragma once

// RIFF/WAVE reading (PCM 16/24/32-bit, IEEE float 32/64, any channel count,
// downmixed to mono) and 16-bit mono PCM writing.

#include <accear/error.hpp>
#include <accear/image_io.hpp>
#include <accear/signal_prep.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace accear {

namespace detail {

inline std::uint16_t get_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

inline UniformSeries decode_wav(const std::vector<std::uint8_t>& b, const std::string& source = "<buffer>") {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw InputError(source + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* payload = nullptr;
  std::size_t payload_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t len = detail::get_u32_le(b.data() + pos + 4);
    const std::uint8_t* body = b.data() + pos + 8;
    if (pos + 8 + len > b.size()) throw InputError(source + ": truncated chunk");
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (len < 16) throw InputError(source + ": short fmt chunk");
      format = detail::get_u16_le(body);
      channels = detail::get_u16_le(body + 2);
      rate = detail::get_u32_le(body + 4);
      bits = detail::get_u16_le(body + 14);
      if (format == 0xFFFE && len >= 26) format = detail::get_u16_le(body + 24);  // WAVE_FORMAT_EXTENSIBLE
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      payload = body;
      payload_len = len;
    }
    pos += 8 + len + (len & 1U);
  }
  if (channels == 0 || rate == 0) throw InputError(source + ": missing fmt chunk");
  if (payload == nullptr) throw InputError(source + ": missing data chunk");
  const bool pcm = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == 3 && (bits == 32 || bits == 64);
  if (!pcm && !flt) throw InputError(source + ": unsupported sample format");

  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = payload_len / (bytes_per * channels);
  UniformSeries out{static_cast<double>(rate), std::vector<double>(frames, 0.0)};
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = payload + (f * channels + c) * bytes_per;
      double v = 0;
      if (pcm && bits == 16) {
        v = static_cast<std::int16_t>(detail::get_u16_le(p)) / 32768.0;
      } else if (pcm && bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else if (pcm) {
        v = static_cast<std::int32_t>(detail::get_u32_le(p)) / 2147483648.0;
      } else if (bits == 32) {
        v = std::bit_cast<float>(detail::get_u32_le(p));
      } else {
        std::uint64_t u = 0;
        for (int i = 7; i >= 0; --i) u = (u << 8) | p[i];
        v = std::bit_cast<double>(u);
      }
      acc += v;
    }
    out.values[f] = acc / channels;
  }
  return out;
}

inline UniformSeries read_wav(const std::string& path) { return decode_wav(detail::read_file(path), path); }

inline std::int16_t to_pcm16(double v) {
  return static_cast<std::int16_t>(std::clamp<long>(std::lround(v * 32768.0), -32768, 32767));
}

/// Mono 16-bit PCM; samples outside [-1, 1] are clipped.
inline std::vector<std::uint8_t> encode_wav_pcm16(const UniformSeries& s) {
  const auto rate = static_cast<std::uint32_t>(std::lround(s.rate_hz));
  const auto data_len = static_cast<std::uint32_t>(s.values.size() * 2);
  std::vector<std::uint8_t> out{'R', 'I', 'F', 'F'};
  detail::put_u32_le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32_le(out, 16);
  detail::put_u16_le(out, 1);
  detail::put_u16_le(out, 1);
  detail::put_u32_le(out, rate);
  detail::put_u32_le(out, rate * 2);
  detail::put_u16_le(out, 2);
  detail::put_u16_le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32_le(out, data_len);
  for (double v : s.values) detail::put_u16_le(out, static_cast<std::uint16_t>(to_pcm16(v)));
  return out;
}

inline void write_wav_pcm16(const std::string& path, const UniformSeries& s) {
  detail::write_file(path, encode_wav_pcm16(s));
}

/// Scales so the absolute peak sits at `dbfs` (e.g. -1). Silence stays silent.
inline UniformSeries peak_normalize(UniformSeries s, double dbfs = -1.0) {
  double peak = 0;
  for (double v : s.values) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    const double gain = std::pow(10.0, dbfs / 20.0) / peak;
    for (auto& v : s.values) v *= gain;
  }
  return s;
}

}  // namespace accear
