#pragma once

// Accelerometer conditioning: raw jittery 3-axis logs in, fixed-rate
// fixed-length single-axis segments out.

#include <accear/error.hpp>
#include <accear/filters.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace accear {

enum class Axis { x = 0, y = 1, z = 2 };

inline Axis parse_axis(std::string_view s) {
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw ParameterError("axis must be one of x, y, z (got '" + std::string(s) + "')");
}

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

/// Timestamped 3-axis samples in m/s^2, as logged by the sensor.
struct RawAccelTrace {
  std::vector<std::int64_t> timestamps_ns;
  std::vector<std::array<double, 3>> samples;

  std::size_t size() const { return timestamps_ns.size(); }

  void validate() const {
    if (timestamps_ns.size() != samples.size()) throw InputError("trace timestamps and samples differ in length");
    if (timestamps_ns.size() < 2) throw InputError("trace needs at least 2 samples");
    for (std::size_t i = 1; i < timestamps_ns.size(); ++i) {
      if (timestamps_ns[i] <= timestamps_ns[i - 1]) {
        throw InputError("trace timestamps not strictly increasing at sample " + std::to_string(i));
      }
    }
  }

  bool operator==(const RawAccelTrace&) const = default;
};

struct UniformSeries {
  double rate_hz = 0;
  std::vector<double> values;

  double duration_s() const { return static_cast<double>(values.size()) / rate_hz; }

  void validate() const {
    if (!(rate_hz > 0)) throw InputError("series rate must be positive");
    for (double v : values) {
      if (!std::isfinite(v)) throw InputError("series contains non-finite values");
    }
  }
};

struct Segment {
  std::vector<double> values;
  double duration_s = 0;
  std::size_t source_offset = 0;
};

/// Per-axis (s - mean) / sigma with the population standard deviation.
/// A constant axis maps to zeros.
inline RawAccelTrace zero_mean_normalize(const RawAccelTrace& trace) {
  trace.validate();
  RawAccelTrace out = trace;
  const double n = static_cast<double>(trace.size());
  for (int axis = 0; axis < 3; ++axis) {
    double mean = 0;
    for (const auto& s : trace.samples) mean += s[axis];
    mean /= n;
    double var = 0;
    for (const auto& s : trace.samples) var += (s[axis] - mean) * (s[axis] - mean);
    const double sigma = std::sqrt(var / n);
    for (auto& s : out.samples) s[axis] = sigma > 0 ? (s[axis] - mean) / sigma : 0.0;
  }
  return out;
}

inline constexpr int kHighPassOrder = 4;

/// Zero-phase 4th-order Butterworth high-pass.
inline UniformSeries high_pass(const UniformSeries& series, double cutoff_hz) {
  const auto sos = butterworth_highpass(kHighPassOrder, cutoff_hz, series.rate_hz);
  return {series.rate_hz, sosfiltfilt(sos, series.values)};
}

/// Linear interpolation onto a grid anchored at the first timestamp. The grid
/// stops at or before the last timestamp, so nothing is extrapolated.
inline UniformSeries interpolate_uniform(std::span<const std::int64_t> timestamps_ns, std::span<const double> values,
                                         double target_rate_hz) {
  if (timestamps_ns.size() != values.size()) throw InputError("timestamps and values differ in length");
  if (timestamps_ns.size() < 2) throw InputError("interpolation needs at least 2 samples");
  if (!(target_rate_hz > 0)) throw ParameterError("target rate must be positive");
  for (std::size_t i = 1; i < timestamps_ns.size(); ++i) {
    if (timestamps_ns[i] <= timestamps_ns[i - 1]) throw InputError("timestamps not strictly increasing");
  }

  const std::int64_t t0 = timestamps_ns.front();
  const long double span = static_cast<long double>(timestamps_ns.back() - t0);
  const long double step_ns = 1e9L / target_rate_hz;
  const auto count = static_cast<std::size_t>(std::floor(span / step_ns + 1e-9L)) + 1;

  UniformSeries out{target_rate_hz, std::vector<double>(count)};
  std::size_t i = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const long double t = static_cast<long double>(t0) + static_cast<long double>(k) * step_ns;
    while (i + 2 < timestamps_ns.size() && static_cast<long double>(timestamps_ns[i + 1]) <= t) ++i;
    const auto lo = static_cast<long double>(timestamps_ns[i]);
    const auto hi = static_cast<long double>(timestamps_ns[i + 1]);
    double frac = static_cast<double>((t - lo) / (hi - lo));
    frac = std::clamp(frac, 0.0, 1.0);
    out.values[k] = (1.0 - frac) * values[i] + frac * values[i + 1];
  }
  return out;
}

struct AxisStream {
  std::vector<std::int64_t> timestamps_ns;
  std::vector<double> values;
};

inline AxisStream select_axis(const RawAccelTrace& trace, Axis axis = Axis::z) {
  AxisStream s{trace.timestamps_ns, {}};
  s.values.reserve(trace.size());
  for (const auto& v : trace.samples) s.values.push_back(v[static_cast<int>(axis)]);
  return s;
}

/// Consecutive non-overlapping windows; a trailing partial window is dropped.
inline std::vector<Segment> segment(const UniformSeries& series, double seconds) {
  if (!(seconds > 0)) throw ParameterError("segment length must be positive");
  const auto window = static_cast<std::size_t>(std::llround(seconds * series.rate_hz));
  std::vector<Segment> out;
  if (window == 0) return out;
  for (std::size_t start = 0; start + window <= series.values.size(); start += window) {
    out.push_back({std::vector<double>(series.values.begin() + static_cast<std::ptrdiff_t>(start),
                                       series.values.begin() + static_cast<std::ptrdiff_t>(start + window)),
                   seconds, start});
  }
  return out;
}

struct PrepConfig {
  double target_rate_hz = 1000.0;
  double highpass_hz = 20.0;
  double segment_seconds = 4.0;
  Axis axis = Axis::z;
};

/// normalize -> select axis -> interpolate -> high-pass. The filter runs on the
/// uniform grid because an IIR recursion is only defined on uniform samples.
inline UniformSeries condition_trace(const RawAccelTrace& trace, const PrepConfig& cfg = {}) {
  const auto normalized = zero_mean_normalize(trace);
  const auto stream = select_axis(normalized, cfg.axis);
  const auto uniform = interpolate_uniform(stream.timestamps_ns, stream.values, cfg.target_rate_hz);
  return high_pass(uniform, cfg.highpass_hz);
}

inline std::vector<Segment> prepare_segments(const RawAccelTrace& trace, const PrepConfig& cfg = {}) {
  return segment(condition_trace(trace, cfg), cfg.segment_seconds);
}

// ---------------------------------------------------------------------------
// CSV: header `t_ns,ax,ay,az`, one record per line.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

inline RawAccelTrace read_accel_csv(std::istream& in, const std::string& source = "<stream>") {
  RawAccelTrace trace;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    if (!header) {
      if (sv != "t_ns,ax,ay,az") throw InputError(source + ":" + std::to_string(lineno) + ": expected header t_ns,ax,ay,az");
      header = true;
      continue;
    }
    std::array<std::string_view, 4> fields;
    std::size_t nf = 0;
    while (nf < 4) {
      auto comma = sv.find(',');
      fields[nf++] = sv.substr(0, comma);
      if (comma == std::string_view::npos) {
        sv = {};
        break;
      }
      sv.remove_prefix(comma + 1);
    }
    if (nf != 4 || !sv.empty()) throw InputError(source + ":" + std::to_string(lineno) + ": expected 4 fields");
    std::int64_t t = 0;
    std::array<double, 3> a{};
    if (!detail::parse_number(fields[0], t)) throw InputError(source + ":" + std::to_string(lineno) + ": bad timestamp");
    for (int k = 0; k < 3; ++k) {
      if (!detail::parse_number(fields[k + 1], a[k]) || !std::isfinite(a[k])) {
        throw InputError(source + ":" + std::to_string(lineno) + ": bad acceleration value");
      }
    }
    if (!trace.timestamps_ns.empty() && t <= trace.timestamps_ns.back()) {
      throw InputError(source + ":" + std::to_string(lineno) + ": timestamp not strictly increasing");
    }
    trace.timestamps_ns.push_back(t);
    trace.samples.push_back(a);
  }
  if (!header) throw InputError(source + ": empty file");
  return trace;
}

inline RawAccelTrace read_accel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_accel_csv(in, path);
}

/// Values are written in shortest round-trip form, so a read returns the
/// exact doubles.
inline void write_accel_csv(std::ostream& out, const RawAccelTrace& trace) {
  out << "t_ns,ax,ay,az\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& s = trace.samples[i];
    out << trace.timestamps_ns[i] << ',' << detail::format_double(s[0]) << ',' << detail::format_double(s[1]) << ','
        << detail::format_double(s[2]) << '\n';
  }
}

inline void write_accel_csv(const std::string& path, const RawAccelTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_accel_csv(out, trace);
}

}  // namespace accear
