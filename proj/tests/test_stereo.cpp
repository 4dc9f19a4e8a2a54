#include <doctest.h>

#include <cstring>
#include <random>

#include "mvsuq/stereo.hpp"

using namespace mvsuq;

namespace {

Raster8 noise_raster(int w, int h, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Raster8 r(w, h);
  for (auto& v : r.data) v = (uint8_t)u(rng);
  return r;
}

// right(x) = left(x + d): a world plane at constant disparity d with our
// sign convention (left x minus right x).
std::pair<Raster8, Raster8> shifted_pair(int w, int h, int d, uint32_t seed) {
  Raster8 base = noise_raster(w + d, h, seed);
  Raster8 left(w, h), right(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      left.at(x, y) = base.at(x, y);
      right.at(x, y) = base.at(x + d, y);
    }
  }
  return {left, right};
}

CostVolume make_volume(int w, int h, int d_min, int d_max,
                       const std::vector<std::vector<uint16_t>>& costs, uint16_t max_cost) {
  CostVolume v;
  v.width = w;
  v.height = h;
  v.d_min = d_min;
  v.d_max = d_max;
  v.max_cost = max_cost;
  v.sentinel = max_cost;
  const size_t n = (size_t)w * h;
  REQUIRE(costs.size() == n);
  v.lo.assign(n, d_min);
  v.len.assign(n, d_max - d_min + 1);
  v.off.resize(n);
  for (size_t p = 0; p < n; ++p) {
    v.off[p] = v.data.size();
    REQUIRE((int)costs[p].size() == v.len[p]);
    v.data.insert(v.data.end(), costs[p].begin(), costs[p].end());
  }
  return v;
}

CostVolume random_volume(int w, int h, int nd, uint32_t seed, uint16_t max_cost = 62) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> u(0, max_cost - 1);
  std::vector<std::vector<uint16_t>> costs((size_t)w * h);
  for (auto& c : costs) {
    c.resize(nd);
    for (auto& x : c) x = (uint16_t)u(rng);
  }
  return make_volume(w, h, 0, nd - 1, costs, max_cost);
}

CostVolume flip_x(const CostVolume& v) {
  CostVolume f = v;
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const size_t p = v.idx(x, y), q = v.idx(v.width - 1 - x, y);
      f.lo[q] = v.lo[p];
      f.len[q] = v.len[p];
    }
  }
  f.off.resize(v.lo.size());
  uint64_t acc = 0;
  for (size_t p = 0; p < f.lo.size(); ++p) {
    f.off[p] = acc;
    acc += f.len[p];
  }
  f.data.assign(v.data.size(), v.sentinel);
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const size_t p = v.idx(x, y), q = f.idx(v.width - 1 - x, y);
      for (int i = 0; i < v.len[p]; ++i) f.data[f.off[q] + i] = v.data[v.off[p] + i];
    }
  }
  return f;
}

}  // namespace

TEST_CASE("census_transform basics") {
  SUBCASE("uniform raster gives all-zero bitstrings") {
    Raster8 r(16, 12, 77);
    const CensusMap m = census_transform(r, 9, 7);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 16; ++x) {
        const bool interior = x >= 4 && x < 12 && y >= 3 && y < 9;
        CHECK((int)m.valid[m.idx(x, y)] == (interior ? 1 : 0));
        CHECK(m.bits[m.idx(x, y)] == 0);
      }
    }
  }
  SUBCASE("hand-compared 3x3 patch") {
    Raster8 r(3, 3);
    for (int i = 0; i < 9; ++i) r.data[i] = (uint8_t)(i + 1);
    const CensusMap m = census_transform(r, 3, 3);
    // Neighbors 1,2,3,4 are darker than the center 5; 6,7,8,9 are not.
    CHECK(m.bits[m.idx(1, 1)] == 0b00001111);
    CHECK(m.valid[m.idx(1, 1)] == 1);
  }
  SUBCASE("strict less-than: ties contribute 0") {
    Raster8 r(3, 3, 9);
    const CensusMap m = census_transform(r, 3, 3);
    CHECK(m.bits[m.idx(1, 1)] == 0);
  }
  SUBCASE("monotone remap invariance") {
    const Raster8 r = noise_raster(20, 15, 3);
    Raster8 shifted = r;
    for (auto& v : shifted.data) v = (uint8_t)std::min(255, v + 30);
    const CensusMap a = census_transform(r, 9, 7);
    const CensusMap b = census_transform(shifted, 9, 7);
    for (size_t p = 0; p < a.bits.size(); ++p) {
      if (!a.valid[p]) continue;
      // Compare only where the +30 shift did not clamp anywhere nearby.
      bool clamped = false;
      const int x = (int)(p % 20), y = (int)(p / 20);
      for (int dy = -3; dy <= 3 && !clamped; ++dy)
        for (int dx = -4; dx <= 4; ++dx)
          if (r.at(x + dx, y + dy) > 225) {
            clamped = true;
            break;
          }
      if (!clamped) CHECK(a.bits[p] == b.bits[p]);
    }
  }
  SUBCASE("window larger than raster") {
    Raster8 r(8, 6, 0);
    CHECK_THROWS_AS(census_transform(r, 9, 7), Error);
    try {
      census_transform(r, 9, 5);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::WindowTooLarge);
    }
  }
}

TEST_CASE("matching_cost") {
  SUBCASE("identical images have zero cost at d=0") {
    const Raster8 img = noise_raster(32, 20, 5);
    const CensusMap c = census_transform(img, 9, 7);
    const CostVolume v = matching_cost(c, c, 0, 8);
    for (int y = 3; y < 17; ++y)
      for (int x = 4; x < 28; ++x) CHECK(v.cost_at(v.idx(x, y), 0) == 0);
  }
  SUBCASE("exact 7 px shift has zero cost along d=7") {
    auto [left, right] = shifted_pair(64, 24, 7, 11);
    const CensusMap cl = census_transform(left, 9, 7);
    const CensusMap cr = census_transform(right, 9, 7);
    const CostVolume v = matching_cost(cl, cr, 0, 15);
    int zero = 0, total = 0;
    for (int y = 3; y < 21; ++y) {
      for (int x = 11; x < 53; ++x) {
        CHECK(v.cost_at(v.idx(x, y), 7) == 0);
        zero += v.cost_at(v.idx(x, y), 3) == 0;
        ++total;
      }
    }
    CHECK(zero < total / 4);  // random texture rarely matches off-shift
  }
  SUBCASE("one flipped census bit costs 1") {
    CensusMap a, b;
    a.width = b.width = 1;
    a.height = b.height = 1;
    a.win_w = b.win_w = 3;
    a.win_h = b.win_h = 3;
    a.bits = {0b00001111};
    b.bits = {0b00001101};
    a.valid = {1};
    b.valid = {1};
    const CostVolume v = matching_cost(a, b, 0, 0);
    CHECK(v.cost_at(0, 0) == 1);
    CHECK(v.max_cost == 8);
  }
  SUBCASE("empty range rejected") {
    const CensusMap c = census_transform(noise_raster(16, 12, 1), 3, 3);
    try {
      matching_cost(c, c, 5, 4);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyDisparityRange);
    }
  }
}

TEST_CASE("sgm_aggregate: zero penalties degenerate to winner-take-all") {
  const CostVolume v = random_volume(24, 18, 12, 42);
  SgmParams p;
  p.lambda_p1 = 0;
  p.lambda_p2 = 0;
  const DisparityMap dm = sgm_aggregate(v, p);
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const size_t q = v.idx(x, y);
      int wta = 0;
      for (int i = 1; i < v.len[q]; ++i)
        if (v.data[v.off[q] + i] < v.data[v.off[q] + wta]) wta = i;
      REQUIRE(dm.valid_at(x, y));
      CHECK((int)std::llround(dm.disp.at(x, y)) == v.lo[q] + wta);
      CHECK(dm.energy.at(x, y) == (float)(p.path_count * v.data[v.off[q] + wta]));
    }
  }
}

TEST_CASE("sgm_aggregate: hand dynamic-programming table, single path") {
  const CostVolume v = make_volume(3, 1, 0, 1, {{0, 5}, {5, 0}, {0, 5}}, 62);
  SgmParams p;
  p.lambda_p1 = 1;
  p.lambda_p2 = 2;
  p.adaptive_p2 = false;
  static const int lr[1][2] = {{1, 0}};
  const DisparityMap dm = sgm_aggregate_dirs(v, p, nullptr, lr, 1);
  // L(0) = [0,5]; L(1) = [5,1]; L(2) = [1,5] by hand.
  CHECK(dm.disp.at(0, 0) == 0.0f);
  CHECK(dm.disp.at(1, 0) == 1.0f);
  CHECK(dm.disp.at(2, 0) == 0.0f);
  CHECK(dm.energy.at(0, 0) == 0.0f);
  CHECK(dm.energy.at(1, 0) == 1.0f);
  CHECK(dm.energy.at(2, 0) == 1.0f);
}

TEST_CASE("sgm_aggregate recovers an exact shift") {
  auto [left, right] = shifted_pair(96, 64, 7, 19);
  const CensusMap cl = census_transform(left, 9, 7);
  const CensusMap cr = census_transform(right, 9, 7);
  const CostVolume v = matching_cost(cl, cr, 0, 20);
  SgmParams p;
  const DisparityMap dm = sgm_aggregate(v, p, &left);
  int good = 0, total = 0;
  for (int y = 3; y < 61; ++y) {
    for (int x = 27; x < 89; ++x) {
      if (!dm.valid_at(x, y)) continue;
      ++total;
      good += std::abs(dm.disp.at(x, y) - 7.0f) <= 1.0f;
    }
  }
  REQUIRE(total > 3000);
  CHECK((double)good / total >= 0.99);
}

TEST_CASE("sgm tie-break picks the lowest disparity") {
  const CostVolume v = make_volume(1, 1, 0, 3, {{4, 2, 2, 3}}, 62);
  SgmParams p;
  p.lambda_p1 = 0;
  p.lambda_p2 = 0;
  const DisparityMap dm = sgm_aggregate(v, p);
  CHECK(dm.disp.at(0, 0) == 1.0f);
}

TEST_CASE("sgm horizontal-flip equivariance") {
  const CostVolume v = random_volume(17, 9, 8, 1234);
  const CostVolume f = flip_x(v);
  SgmParams p;
  p.adaptive_p2 = false;
  const DisparityMap a = sgm_aggregate(v, p);
  const DisparityMap b = sgm_aggregate(f, p);
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const float da = a.disp.at(x, y), db = b.disp.at(v.width - 1 - x, y);
      CHECK(std::memcmp(&da, &db, 4) == 0);
      const float ea = a.energy.at(x, y), eb = b.energy.at(v.width - 1 - x, y);
      CHECK(std::memcmp(&ea, &eb, 4) == 0);
    }
  }
}

TEST_CASE("sgm determinism across worker counts") {
  const CostVolume v = random_volume(40, 30, 16, 77);
  SgmParams p1t;
  p1t.threads = 1;
  SgmParams p4t;
  p4t.threads = 4;
  const DisparityMap a = sgm_aggregate(v, p1t);
  const DisparityMap b = sgm_aggregate(v, p4t);
  CHECK(std::memcmp(a.disp.data.data(), b.disp.data.data(), a.disp.data.size() * 4) == 0);
  CHECK(std::memcmp(a.energy.data.data(), b.energy.data.data(), a.energy.data.size() * 4) == 0);
}

TEST_CASE("energy_total") {
  SUBCASE("constant map over zero costs") {
    std::vector<std::vector<uint16_t>> costs(6, std::vector<uint16_t>(4, 0));
    const CostVolume v = make_volume(3, 2, 0, 3, costs, 62);
    DisparityMap dm;
    dm.width = 3;
    dm.height = 2;
    dm.disp = Grid<float>(3, 2, 2.0f);
    dm.energy = Grid<float>(3, 2, 0.0f);
    CHECK(energy_total(dm, v, SgmParams{}) == 0.0);
  }
  SUBCASE("hand-evaluated 1x2 map") {
    const CostVolume v = make_volume(2, 1, 0, 7,
                                     {{9, 9, 9, 2, 9, 9, 9, 9}, {9, 9, 9, 9, 9, 4, 9, 9}}, 62);
    DisparityMap dm;
    dm.width = 2;
    dm.height = 1;
    dm.disp = Grid<float>(2, 1);
    dm.energy = Grid<float>(2, 1, 0.0f);
    dm.disp.at(0, 0) = 3.0f;
    dm.disp.at(1, 0) = 5.0f;
    SgmParams p;
    CHECK(energy_total(dm, v, p) == 38.0);
  }
  SUBCASE("jump of exactly one pixel costs lambda_p1") {
    const CostVolume v = make_volume(2, 1, 0, 3, {{0, 0, 0, 0}, {0, 0, 0, 0}}, 62);
    DisparityMap dm;
    dm.width = 2;
    dm.height = 1;
    dm.disp = Grid<float>(2, 1);
    dm.energy = Grid<float>(2, 1, 0.0f);
    dm.disp.at(0, 0) = 1.0f;
    dm.disp.at(1, 0) = 2.0f;
    SgmParams p;
    CHECK(energy_total(dm, v, p) == 8.0);
  }
  SUBCASE("mismatched dims rejected") {
    const CostVolume v = random_volume(4, 4, 4, 2);
    DisparityMap dm;
    dm.width = 3;
    dm.height = 4;
    try {
      energy_total(dm, v, SgmParams{});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::DimensionMismatch);
    }
  }
}

TEST_CASE("smoothing lowers total energy versus winner-take-all") {
  SgmParams sgm_p;
  sgm_p.adaptive_p2 = false;
  SgmParams wta_p = sgm_p;
  wta_p.lambda_p1 = 0;
  wta_p.lambda_p2 = 0;
  int wins = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    const CostVolume v = random_volume(20, 14, 10, 9000 + t);
    const DisparityMap smooth = sgm_aggregate(v, sgm_p);
    const DisparityMap wta = sgm_aggregate(v, wta_p);
    if (energy_total(smooth, v, sgm_p) <= energy_total(wta, v, sgm_p)) ++wins;
  }
  CHECK((double)wins / trials >= 0.95);
}

TEST_CASE("monotone intensity remap leaves the disparity map unchanged") {
  auto [left, right] = shifted_pair(64, 48, 5, 31);
  // Halve the dynamic range first so a strictly increasing 8-bit remap
  // other than the identity exists.
  for (Raster8* r : {&left, &right})
    for (auto& v : r->data) v /= 2;
  auto remap = [](const Raster8& r) {
    Raster8 out = r;
    for (auto& v : out.data) v = (uint8_t)(2 * v + 1);
    return out;
  };
  SgmParams p;
  p.adaptive_p2 = false;
  const CostVolume v1 = matching_cost(census_transform(left, 9, 7),
                                      census_transform(right, 9, 7), 0, 12);
  const CostVolume v2 = matching_cost(census_transform(remap(left), 9, 7),
                                      census_transform(remap(right), 9, 7), 0, 12);
  CHECK(v1.data == v2.data);
  const DisparityMap a = sgm_aggregate(v1, p);
  const DisparityMap b = sgm_aggregate(v2, p);
  CHECK(std::memcmp(a.disp.data.data(), b.disp.data.data(), a.disp.data.size() * 4) == 0);
}

TEST_CASE("hierarchical_match") {
  SUBCASE("one level is identical to direct aggregation") {
    auto [left, right] = shifted_pair(72, 48, 6, 55);
    SgmParams p;
    p.pyramid_levels = 1;
    const DisparityMap h = hierarchical_match(left, right, 0, 15, p);
    const CostVolume v = matching_cost(census_transform(left, p.census_w, p.census_h),
                                       census_transform(right, p.census_w, p.census_h), 0, 15);
    const DisparityMap d = sgm_aggregate(v, p, &left);
    CHECK(std::memcmp(h.disp.data.data(), d.disp.data.data(), h.disp.data.size() * 4) == 0);
    CHECK(std::memcmp(h.energy.data.data(), d.energy.data.data(), h.energy.data.size() * 4) == 0);
  }
  SUBCASE("constant shift recovered through 3 levels") {
    auto [left, right] = shifted_pair(256, 160, 21, 99);
    SgmParams p;
    p.pyramid_levels = 3;
    const DisparityMap dm = hierarchical_match(left, right, 0, 63, p);
    int good = 0, total = 0;
    for (int y = 3; y < 157; ++y) {
      for (int x = 25; x < 252; ++x) {
        if (!dm.valid_at(x, y)) continue;
        ++total;
        good += std::abs(dm.disp.at(x, y) - 21.0f) <= 1.0f;
      }
    }
    REQUIRE(total > 20000);
    CHECK((double)good / total >= 0.95);
  }
  SUBCASE("too-small coarsest level is rejected") {
    auto [left, right] = shifted_pair(64, 64, 3, 7);
    SgmParams p;
    p.pyramid_levels = 4;
    try {
      hierarchical_match(left, right, 0, 7, p);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::ImageTooSmall);
    }
  }
  SUBCASE("max_pyramid_levels keeps the coarsest level at 32 px") {
    CHECK(max_pyramid_levels(640, 480) == 4);
    CHECK(max_pyramid_levels(64, 64) == 2);
    CHECK(max_pyramid_levels(32, 32) == 1);
  }
}
