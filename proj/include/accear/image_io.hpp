#pragma once

// Spectrogram image files.
//
// ASPC: 16-byte header (magic "ASPC", u32 version, u32 rows, u32 cols), then
// rows * cols little-endian float32 values, row-major, row 0 = lowest frequency.
//
// PNG: 8-bit grayscale, lowest frequency at the bottom of the picture.

#include <accear/error.hpp>
#include <accear/matrix.hpp>

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace accear {

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

inline constexpr std::uint32_t kAspcVersion = 1;

inline std::vector<std::uint8_t> encode_aspc(const Matrix& m) {
  std::vector<std::uint8_t> out{'A', 'S', 'P', 'C'};
  detail::put_u32_le(out, kAspcVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.rows));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.cols));
  out.reserve(out.size() + m.data.size() * 4);
  for (double v : m.data) detail::put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline Matrix decode_aspc(const std::vector<std::uint8_t>& bytes, const std::string& source = "<buffer>") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "ASPC", 4) != 0) throw InputError(source + ": not an ASPC file");
  const auto version = detail::get_u32_le(bytes.data() + 4);
  if (version != kAspcVersion) throw InputError(source + ": unsupported ASPC version " + std::to_string(version));
  const auto rows = detail::get_u32_le(bytes.data() + 8);
  const auto cols = detail::get_u32_le(bytes.data() + 12);
  if (bytes.size() != 16 + std::size_t{rows} * cols * 4) throw InputError(source + ": ASPC payload size mismatch");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = std::bit_cast<float>(detail::get_u32_le(bytes.data() + 16 + 4 * i));
  }
  return m;
}

inline void write_aspc(const std::string& path, const Matrix& m) { detail::write_file(path, encode_aspc(m)); }
inline Matrix read_aspc(const std::string& path) { return decode_aspc(detail::read_file(path), path); }

/// Values are clamped to [0, 1] and mapped to 0..255.
inline std::vector<std::uint8_t> encode_png(const Matrix& m) {
  if (m.rows == 0 || m.cols == 0) throw ShapeError("cannot encode an empty image");
  std::vector<std::uint8_t> raw;
  raw.reserve(m.rows * (m.cols + 1));
  for (std::size_t y = 0; y < m.rows; ++y) {
    const std::size_t r = m.rows - 1 - y;
    raw.push_back(0);  // filter type: none
    for (std::size_t c = 0; c < m.cols; ++c) {
      raw.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(m(r, c), 0.0, 1.0) * 255.0)));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw NumericError("zlib compression failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  auto chunk = [&png](const char* type, const std::vector<std::uint8_t>& body) {
    detail::put_u32_be(png, static_cast<std::uint32_t>(body.size()));
    std::vector<std::uint8_t> crc_input(type, type + 4);
    crc_input.insert(crc_input.end(), body.begin(), body.end());
    png.insert(png.end(), crc_input.begin(), crc_input.end());
    detail::put_u32_be(png, static_cast<std::uint32_t>(crc32(0L, crc_input.data(), static_cast<uInt>(crc_input.size()))));
  };
  std::vector<std::uint8_t> ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(m.cols));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(m.rows));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale, deflate, no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  return png;
}

inline void write_png(const std::string& path, const Matrix& m) { detail::write_file(path, encode_png(m)); }

}  // namespace accear
