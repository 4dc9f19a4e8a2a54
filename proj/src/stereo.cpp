#include "mvsuq/stereo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "mvsuq/parallel.hpp"

namespace mvsuq {

void validate_params(const SgmParams& p) {
  if (p.lambda_p1 < 0 || p.lambda_p2 < p.lambda_p1)
    fail(Err::ConfigError, "penalties must satisfy 0 <= lambda_p1 <= lambda_p2");
  if (p.path_count != 4 && p.path_count != 8) fail(Err::ConfigError, "path_count must be 4 or 8");
  if (p.pyramid_levels < 1) fail(Err::ConfigError, "pyramid_levels must be >= 1");
  if (p.search_band < 1) fail(Err::ConfigError, "search_band must be >= 1");
  if (p.census_w % 2 == 0 || p.census_h % 2 == 0 || p.census_w < 3 || p.census_h < 3 ||
      p.census_w * p.census_h > 64)
    fail(Err::ConfigError, "census window must be odd, at least 3x3 and at most 64 bits");
}

CensusMap census_transform(const Raster8& r, int win_w, int win_h, int threads,
                           const Grid<uint8_t>* valid) {
  if (win_w % 2 == 0 || win_h % 2 == 0 || win_w < 3 || win_h < 3 || win_w * win_h > 64)
    fail(Err::ConfigError, "census window must be odd, at least 3x3 and at most 64 bits");
  if (win_w > r.width || win_h > r.height)
    fail(Err::WindowTooLarge, "census window exceeds raster");
  if (valid && (valid->width != r.width || valid->height != r.height))
    fail(Err::DimensionMismatch, "validity mask dims differ from raster");

  // Summed-area table of masked-out pixels: a window is clean iff its count
  // of zeros is zero.
  Grid<int32_t> bad;
  if (valid) {
    bad = Grid<int32_t>(r.width + 1, r.height + 1, 0);
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x)
        bad.at(x + 1, y + 1) = (valid->at(x, y) ? 0 : 1) + bad.at(x, y + 1) +
                               bad.at(x + 1, y) - bad.at(x, y);
  }

  CensusMap m;
  m.width = r.width;
  m.height = r.height;
  m.win_w = win_w;
  m.win_h = win_h;
  m.bits.assign((size_t)r.width * r.height, 0);
  m.valid.assign((size_t)r.width * r.height, 0);
  const int hw = win_w / 2, hh = win_h / 2;
  parallel_for(hh, r.height - hh, threads, [&](int64_t y0, int64_t y1) {
    for (int y = (int)y0; y < (int)y1; ++y) {
      for (int x = hw; x < r.width - hw; ++x) {
        if (valid) {
          const int x0 = x - hw, y0w = y - hh, x1 = x + hw + 1, y1w = y + hh + 1;
          if (bad.at(x1, y1w) - bad.at(x0, y1w) - bad.at(x1, y0w) + bad.at(x0, y0w) > 0)
            continue;
        }
        const uint8_t c = r.at(x, y);
        uint64_t b = 0;
        int k = 0;
        for (int dy = -hh; dy <= hh; ++dy) {
          for (int dx = -hw; dx <= hw; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (r.at(x + dx, y + dy) < c) b |= uint64_t{1} << k;
            ++k;
          }
        }
        m.bits[m.idx(x, y)] = b;
        m.valid[m.idx(x, y)] = 1;
      }
    }
  });
  return m;
}

namespace {

void check_census_pair(const CensusMap& l, const CensusMap& r) {
  if (l.height != r.height) fail(Err::DimensionMismatch, "rectified heights differ");
  if (l.win_w != r.win_w || l.win_h != r.win_h)
    fail(Err::DimensionMismatch, "census windows differ");
}

void fill_costs(CostVolume& v, const CensusMap& l, const CensusMap& r, int threads) {
  v.off.resize(v.lo.size());
  uint64_t acc = 0;
  for (size_t p = 0; p < v.lo.size(); ++p) {
    v.off[p] = acc;
    acc += (uint64_t)v.len[p];
  }
  v.data.assign(acc, v.sentinel);
  parallel_for(0, v.height, threads, [&](int64_t y0, int64_t y1) {
    for (int y = (int)y0; y < (int)y1; ++y) {
      for (int x = 0; x < v.width; ++x) {
        const size_t p = v.idx(x, y);
        const uint64_t lb = l.bits[p];
        uint16_t* out = v.data.data() + v.off[p];
        for (int i = 0; i < v.len[p]; ++i) {
          const int xr = x - (v.lo[p] + i);
          if (xr < 0 || xr >= r.width || !r.valid[r.idx(xr, y)]) continue;
          out[i] = (uint16_t)std::popcount(lb ^ r.bits[r.idx(xr, y)]);
        }
      }
    }
  });
}

}  // namespace

CostVolume matching_cost(const CensusMap& l, const CensusMap& r, int d_min, int d_max,
                         int threads) {
  check_census_pair(l, r);
  if (d_max < d_min) fail(Err::EmptyDisparityRange, "d_max < d_min");
  CostVolume v;
  v.width = l.width;
  v.height = l.height;
  v.d_min = d_min;
  v.d_max = d_max;
  v.max_cost = (uint16_t)l.bit_count();
  v.sentinel = v.max_cost;
  const size_t n = (size_t)l.width * l.height;
  v.lo.assign(n, d_min);
  v.len.resize(n);
  for (size_t p = 0; p < n; ++p) v.len[p] = l.valid[p] ? d_max - d_min + 1 : 0;
  fill_costs(v, l, r, threads);
  return v;
}

CostVolume matching_cost_banded(const CensusMap& l, const CensusMap& r,
                                const Grid<int32_t>& center, int band, int d_min, int d_max,
                                int threads) {
  check_census_pair(l, r);
  if (center.width != l.width || center.height != l.height)
    fail(Err::DimensionMismatch, "center grid dims");
  if (d_max < d_min) fail(Err::EmptyDisparityRange, "d_max < d_min");
  CostVolume v;
  v.width = l.width;
  v.height = l.height;
  v.d_min = d_min;
  v.d_max = d_max;
  v.max_cost = (uint16_t)l.bit_count();
  v.sentinel = v.max_cost;
  const size_t n = (size_t)l.width * l.height;
  v.lo.assign(n, 0);
  v.len.assign(n, 0);
  for (size_t p = 0; p < n; ++p) {
    if (!l.valid[p] || center.data[p] == INT32_MIN) continue;
    const int lo = std::max(d_min, center.data[p] - band);
    const int hi = std::min(d_max, center.data[p] + band);
    if (hi < lo) continue;
    v.lo[p] = lo;
    v.len[p] = hi - lo + 1;
  }
  fill_costs(v, l, r, threads);
  return v;
}

DisparityMap sgm_aggregate_dirs(const CostVolume& cv, const SgmParams& params,
                                const Raster8* left, const int (*dirs)[2], int ndir) {
  const size_t ndata = cv.data.size();
  std::vector<int32_t> sum(ndata, 0), path(ndata, 0);
  const int p1 = params.lambda_p1, p2 = params.lambda_p2;
  const bool adaptive = params.adaptive_p2 && left != nullptr;

  for (int di = 0; di < ndir; ++di) {
    const int dx = dirs[di][0], dy = dirs[di][1];
    std::vector<int32_t> starts;
    for (int y = 0; y < cv.height; ++y) {
      for (int x = 0; x < cv.width; ++x) {
        const int px = x - dx, py = y - dy;
        if (px < 0 || px >= cv.width || py < 0 || py >= cv.height)
          starts.push_back(y * cv.width + x);
      }
    }
    parallel_for(0, (int64_t)starts.size(), params.threads, [&](int64_t s0, int64_t s1) {
      for (int64_t si = s0; si < s1; ++si) {
        int x = starts[si] % cv.width, y = starts[si] / cv.width;
        bool has_prev = false;
        size_t prev_p = 0;
        int32_t prev_min = 0;
        while (x >= 0 && x < cv.width && y >= 0 && y < cv.height) {
          const size_t p = cv.idx(x, y);
          const int plen = cv.len[p];
          if (plen == 0) {
            has_prev = false;
          } else {
            const uint16_t* c = cv.data.data() + cv.off[p];
            int32_t* out = path.data() + cv.off[p];
            int32_t cur_min = INT32_MAX;
            if (!has_prev) {
              for (int i = 0; i < plen; ++i) {
                out[i] = c[i];
                cur_min = std::min(cur_min, out[i]);
              }
            } else {
              int p2e = p2;
              if (adaptive) {
                const int g = std::abs((int)left->at(x, y) - (int)left->at(x - dx, y - dy));
                p2e = std::max(p1 + 1, (int)std::lround(p2 / (1.0 + g / 8.0)));
              }
              const int32_t* pl = path.data() + cv.off[prev_p];
              const int qlo = cv.lo[prev_p], qlen = cv.len[prev_p];
              const int lo = cv.lo[p];
              for (int i = 0; i < plen; ++i) {
                const int d = lo + i;
                int32_t best = prev_min + p2e;
                const int j = d - qlo;
                if (j >= 0 && j < qlen) best = std::min(best, pl[j]);
                if (j - 1 >= 0 && j - 1 < qlen) best = std::min(best, pl[j - 1] + p1);
                if (j + 1 >= 0 && j + 1 < qlen) best = std::min(best, pl[j + 1] + p1);
                out[i] = c[i] + best - prev_min;
                cur_min = std::min(cur_min, out[i]);
              }
            }
            has_prev = true;
            prev_p = p;
            prev_min = cur_min;
          }
          x += dx;
          y += dy;
        }
      }
    });
    parallel_for(0, (int64_t)ndata, params.threads, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) sum[i] += path[i];
    });
  }

  DisparityMap dm;
  dm.width = cv.width;
  dm.height = cv.height;
  dm.d_min = cv.d_min;
  dm.d_max = cv.d_max;
  dm.disp = Grid<float>(cv.width, cv.height, kInvalid);
  dm.energy = Grid<float>(cv.width, cv.height, kInvalid);
  parallel_for(0, cv.height, params.threads, [&](int64_t y0, int64_t y1) {
    for (int y = (int)y0; y < (int)y1; ++y) {
      for (int x = 0; x < cv.width; ++x) {
        const size_t p = cv.idx(x, y);
        if (cv.len[p] == 0 || !cv.pixel_valid(p)) continue;
        const int32_t* s = sum.data() + cv.off[p];
        int win = 0;
        for (int i = 1; i < cv.len[p]; ++i)
          if (s[i] < s[win]) win = i;
        double d = cv.lo[p] + win;
        if (win > 0 && win < cv.len[p] - 1) {
          const int32_t l = s[win - 1], m = s[win], r = s[win + 1];
          if (l > m && r > m) d += (double)(l - r) / (2.0 * (l - 2 * m + r));
        }
        dm.disp.at(x, y) = (float)d;
        dm.energy.at(x, y) = (float)s[win];
      }
    }
  });
  return dm;
}

DisparityMap sgm_aggregate(const CostVolume& cv, const SgmParams& params, const Raster8* left) {
  validate_params(params);
  static const int dirs8[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                  {1, 1},  {-1, -1}, {1, -1}, {-1, 1}};
  return sgm_aggregate_dirs(cv, params, left, dirs8, params.path_count);
}

double energy_total(const DisparityMap& dm, const CostVolume& cv, const SgmParams& params) {
  if (dm.width != cv.width || dm.height != cv.height)
    fail(Err::DimensionMismatch, "disparity map and cost volume dims differ");
  double e = 0;
  for (int y = 0; y < dm.height; ++y) {
    for (int x = 0; x < dm.width; ++x) {
      if (!dm.valid_at(x, y)) continue;
      const double d = dm.disp.at(x, y);
      e += cv.cost_at(cv.idx(x, y), (int)std::llround(d));
      const int nx[2] = {x + 1, x};
      const int ny[2] = {y, y + 1};
      for (int k = 0; k < 2; ++k) {
        if (nx[k] >= dm.width || ny[k] >= dm.height || !dm.valid_at(nx[k], ny[k])) continue;
        const double dd = std::abs(d - dm.disp.at(nx[k], ny[k]));
        if (dd >= 1.5)
          e += params.lambda_p2;
        else if (dd >= 0.5)
          e += params.lambda_p1;
      }
    }
  }
  return e;
}

Raster8 gauss_downsample(const Raster8& img) {
  static const int k[5] = {1, 4, 6, 4, 1};
  const int w = img.width, h = img.height;
  Grid<uint16_t> tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int i = -2; i <= 2; ++i)
        s += k[i + 2] * img.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = (uint16_t)s;
    }
  }
  const int ow = (w + 1) / 2, oh = (h + 1) / 2;
  Raster8 out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const int sy = 2 * y, sx = 2 * x;
      int s = 0;
      for (int i = -2; i <= 2; ++i)
        s += k[i + 2] * tmp.at(sx, std::clamp(sy + i, 0, h - 1));
      out.at(x, y) = (uint8_t)((s + 128) >> 8);
    }
  }
  return out;
}

int max_pyramid_levels(int width, int height) {
  int levels = 1;
  int w = width, h = height;
  while ((w + 1) / 2 >= 32 && (h + 1) / 2 >= 32) {
    w = (w + 1) / 2;
    h = (h + 1) / 2;
    ++levels;
  }
  return levels;
}

namespace {

// Center-pooled 2x mask reduction, sized to match gauss_downsample output.
Grid<uint8_t> mask_downsample(const Grid<uint8_t>& m) {
  Grid<uint8_t> out((m.width + 1) / 2, (m.height + 1) / 2, 0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = m.at(std::min(2 * x, m.width - 1), std::min(2 * y, m.height - 1));
  return out;
}

// 2x-upsampled band center for one fine pixel; falls back to the median of
// the valid coarse 3x3 neighborhood, INT32_MIN if none.
int32_t band_center(const DisparityMap& coarse, int fx, int fy) {
  const int cx = std::min(fx / 2, coarse.width - 1);
  const int cy = std::min(fy / 2, coarse.height - 1);
  if (coarse.valid_at(cx, cy)) return (int32_t)std::lround(2.0 * coarse.disp.at(cx, cy));
  double vals[9];
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = cx + dx, y = cy + dy;
      if (x < 0 || y < 0 || x >= coarse.width || y >= coarse.height) continue;
      if (coarse.valid_at(x, y)) vals[n++] = coarse.disp.at(x, y);
    }
  }
  if (n == 0) return INT32_MIN;
  std::sort(vals, vals + n);
  return (int32_t)std::lround(2.0 * median_sorted(vals, vals + n));
}

}  // namespace

DisparityMap hierarchical_match(const Raster8& left, const Raster8& right, int d_min, int d_max,
                                const SgmParams& params, const Grid<uint8_t>* valid_left,
                                const Grid<uint8_t>* valid_right) {
  validate_params(params);
  if (left.width != right.width || left.height != right.height)
    fail(Err::DimensionMismatch, "stereo pair dims differ");
  if (d_max < d_min) fail(Err::EmptyDisparityRange, "d_max < d_min");

  std::vector<Raster8> pl{left}, pr{right};
  std::vector<Grid<uint8_t>> ml, mr;
  if (valid_left) ml.push_back(*valid_left);
  if (valid_right) mr.push_back(*valid_right);
  for (int l = 1; l < params.pyramid_levels; ++l) {
    pl.push_back(gauss_downsample(pl.back()));
    pr.push_back(gauss_downsample(pr.back()));
    if (valid_left) ml.push_back(mask_downsample(ml.back()));
    if (valid_right) mr.push_back(mask_downsample(mr.back()));
  }
  if (pl.back().width < 32)
    fail(Err::ImageTooSmall, "coarsest pyramid level narrower than 32 px");

  DisparityMap dm;
  for (int l = params.pyramid_levels - 1; l >= 0; --l) {
    const int scale = 1 << l;
    const int dlo = (int)std::floor((double)d_min / scale);
    const int dhi = (int)std::ceil((double)d_max / scale);
    const CensusMap cl = census_transform(pl[l], params.census_w, params.census_h, params.threads,
                                          valid_left ? &ml[l] : nullptr);
    const CensusMap cr = census_transform(pr[l], params.census_w, params.census_h, params.threads,
                                          valid_right ? &mr[l] : nullptr);
    CostVolume cv;
    if (l == params.pyramid_levels - 1) {
      cv = matching_cost(cl, cr, dlo, dhi, params.threads);
    } else {
      Grid<int32_t> center(pl[l].width, pl[l].height, INT32_MIN);
      for (int y = 0; y < center.height; ++y)
        for (int x = 0; x < center.width; ++x) center.at(x, y) = band_center(dm, x, y);
      cv = matching_cost_banded(cl, cr, center, params.search_band, dlo, dhi, params.threads);
    }
    dm = sgm_aggregate(cv, params, &pl[l]);
  }
  return dm;
}

}  // namespace mvsuq
