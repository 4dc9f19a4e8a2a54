#pragma once

#include <cstdint>
#include <vector>

#include "mvsuq/common.hpp"

namespace mvsuq {

// Per-pixel census bitstrings. Bit k is 1 iff the k-th neighbor (row-major
// order over the window, center excluded) is strictly darker than the
// center. Pixels within the window half-extent of the border are invalid,
// as are pixels whose window touches a masked-out source pixel.
struct CensusMap {
  int width = 0, height = 0;
  int win_w = 9, win_h = 7;
  std::vector<uint64_t> bits;
  std::vector<uint8_t> valid;

  size_t idx(int x, int y) const { return (size_t)y * width + x; }
  int bit_count() const { return win_w * win_h - 1; }
};

// Per-pixel disparity bands packed back to back. A pixel with len == 0 has
// no candidates at all; entries equal to `sentinel` mark candidates whose
// correspondence fell outside the other image or on an invalid census pixel.
struct CostVolume {
  int width = 0, height = 0;
  int d_min = 0, d_max = 0;
  uint16_t max_cost = 0;
  uint16_t sentinel = 0;
  std::vector<int32_t> lo;
  std::vector<int32_t> len;
  std::vector<uint64_t> off;
  std::vector<uint16_t> data;

  size_t idx(int x, int y) const { return (size_t)y * width + x; }
  uint16_t cost_at(size_t p, int d) const {
    const int l = lo[p];
    if (d < l || d >= l + len[p]) return sentinel;
    return data[off[p] + (size_t)(d - l)];
  }
  bool pixel_valid(size_t p) const {
    for (int i = 0; i < len[p]; ++i)
      if (data[off[p] + i] != sentinel) return true;
    return false;
  }
};

struct SgmParams {
  int lambda_p1 = 8;
  int lambda_p2 = 32;
  int path_count = 8;
  int pyramid_levels = 4;
  int search_band = 4;
  bool adaptive_p2 = true;
  int census_w = 9;
  int census_h = 7;
  int threads = 1;
};

void validate_params(const SgmParams& params);

struct DisparityMap {
  int width = 0, height = 0;
  int d_min = 0, d_max = 0;
  Grid<float> disp;
  Grid<float> energy;

  bool valid_at(int x, int y) const { return !is_invalid(disp.at(x, y)); }
};

// `valid`, when given, marks source pixels (0 = not real image content, e.g.
// resampling gaps); any window overlapping one yields an invalid census pixel.
CensusMap census_transform(const Raster8& raster, int win_w, int win_h, int threads = 1,
                           const Grid<uint8_t>* valid = nullptr);

// Full-range volume: every pixel with a valid left census gets the band
// [d_min, d_max].
CostVolume matching_cost(const CensusMap& left, const CensusMap& right, int d_min, int d_max,
                         int threads = 1);

// Band-limited volume: each pixel searches +-band around its own center
// disparity, clipped to [d_min, d_max]. Pixels whose center is INT32_MIN
// get an empty band.
CostVolume matching_cost_banded(const CensusMap& left, const CensusMap& right,
                                const Grid<int32_t>& center, int band, int d_min, int d_max,
                                int threads = 1);

// Path-aggregated matching over the volume. `left_raster`, when given and
// params.adaptive_p2 is set, drives the edge-aware P2 attenuation.
DisparityMap sgm_aggregate(const CostVolume& cost, const SgmParams& params,
                           const Raster8* left_raster = nullptr);

// Same recursion over an explicit direction set. Diagnostic entry; lets a
// caller run a single scanline pass and inspect the raw DP table.
DisparityMap sgm_aggregate_dirs(const CostVolume& cost, const SgmParams& params,
                                const Raster8* left_raster, const int (*dirs)[2], int ndir);

// Total smoothness-regularized matching energy of a disparity map: the sum
// over valid pixels of the raw cost at the (rounded) disparity plus, for
// each unordered 4-neighbor pair, 0 / lambda_p1 / lambda_p2 as the
// disparity jump passes 0.5 px and 1.5 px.
double energy_total(const DisparityMap& disp, const CostVolume& cost, const SgmParams& params);

Raster8 gauss_downsample(const Raster8& img);

// Coarse-to-fine matching: full range at the coarsest pyramid level, then
// +-search_band around the upsampled result per finer level. Optional masks
// follow the pyramid (center-pooled) and gate the census maps per level.
DisparityMap hierarchical_match(const Raster8& left, const Raster8& right, int d_min, int d_max,
                                const SgmParams& params,
                                const Grid<uint8_t>* valid_left = nullptr,
                                const Grid<uint8_t>* valid_right = nullptr);

// Largest pyramid depth keeping the coarsest level at least 32 px wide.
int max_pyramid_levels(int width, int height);

}  // namespace mvsuq
