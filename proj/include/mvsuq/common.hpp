#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvsuq {

enum class Err {
  // geometry
  NonPositiveDepth,
  ParallelRays,
  CoincidentCenters,
  DegeneratePoint,
  ExcessiveConvergence,
  NonPositiveDisparity,
  // stereo
  WindowTooLarge,
  EmptyDisparityRange,
  DimensionMismatch,
  ImageTooSmall,
  // fusion
  InsufficientViews,
  KBelowTwo,
  FrameMismatch,
  // evaluation
  EmptyCloud,
  DegenerateGeometry,
  EmptyReference,
  NonMonotonicEdges,
  InsufficientBins,
  // uncertainty
  DegenerateSamples,
  NoSamples,
  EmptyTable,
  // harness
  InvalidSpec,
  NoIntersection,
  IoError,
  BadFormat,
  ConfigError,
};

const char* err_name(Err code);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

// Row-major 2-D buffer. (0,0) is the top-left pixel, x runs along width.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(size_t(w) * h, fill) {}

  T& at(int x, int y) { return data[size_t(y) * width + x]; }
  const T& at(int x, int y) const { return data[size_t(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  size_t size() const { return data.size(); }
  bool same_dims(const Grid& o) const { return width == o.width && height == o.height; }
};

using Raster8 = Grid<uint8_t>;

constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();
inline bool is_invalid(float v) { return std::isnan(v); }

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Median of an already sorted range; even cardinality averages the two middle values.
template <typename It>
double median_sorted(It first, It last) {
  auto n = last - first;
  if (n <= 0) fail(Err::DegenerateSamples, "median of empty range");
  if (n % 2 == 1) return double(first[n / 2]);
  return 0.5 * (double(first[n / 2 - 1]) + double(first[n / 2]));
}

// FNV-1a, used for artifact content hashes and derived seeds.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v);

}  // namespace mvsuq
