#include "mvsuq/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mvsuq/parallel.hpp"

namespace mvsuq {

namespace {

double angle_window(double theta_deg) {
  if (theta_deg < 5.0) return theta_deg / 5.0;
  if (theta_deg <= 45.0) return 1.0;
  if (theta_deg < 60.0) return (60.0 - theta_deg) / 15.0;
  return 0.0;
}

}  // namespace

double neighbor_score(const CameraView& base, const CameraView& cand, uint64_t seed) {
  const double axis_deg =
      rad2deg(std::acos(std::clamp(base.optical_axis_world().dot(cand.optical_axis_world()),
                                   -1.0, 1.0)));
  const double w = angle_window(axis_deg);
  if (w <= 0) return 0;

  std::mt19937_64 rng(seed ^ (uint64_t)base.image_id * 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> ux(0, base.width - 1);
  std::uniform_real_distribution<double> uy(0, base.height - 1);
  std::uniform_real_distribution<double> uz(base.z_near, base.z_far);
  int hits = 0;
  const int rays = 256;
  for (int i = 0; i < rays; ++i) {
    const Eigen::Vector3d p = back_project(base, {ux(rng), uy(rng)}, uz(rng));
    const Eigen::Vector3d pc = cand.to_camera(p);
    if (pc.z() <= 1e-12) continue;
    const double px = cand.fx * pc.x() / pc.z() + cand.cx;
    const double py = cand.fy * pc.y() / pc.z() + cand.cy;
    if (px >= 0 && px < cand.width && py >= 0 && py < cand.height) ++hits;
  }
  return w * hits / rays;
}

NeighborSet select_neighbors(const std::vector<CameraView>& views, int base_id, int n, int k,
                             uint64_t seed) {
  if (views.size() < 2) fail(Err::InsufficientViews, "need at least 2 views");
  const CameraView* base = nullptr;
  for (const auto& v : views)
    if (v.image_id == base_id) base = &v;
  if (!base) fail(Err::ConfigError, "base_id not in view list");

  std::vector<std::pair<double, int>> scored;
  for (const auto& v : views) {
    if (v.image_id == base_id) continue;
    const double s = neighbor_score(*base, v, seed);
    if (s > 0) scored.emplace_back(s, v.image_id);
  }
  if ((int)scored.size() < k)
    fail(Err::InsufficientViews, "image " + std::to_string(base_id) + ": only " +
                                     std::to_string(scored.size()) + " overlapping views");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  if ((int)scored.size() > n) scored.resize(n);

  NeighborSet out;
  out.base_id = base_id;
  for (const auto& [s, id] : scored) {
    out.neighbor_ids.push_back(id);
    out.scores.push_back(s);
  }
  return out;
}

PairDepthMap compute_pair_depth(const CameraView& base, const CameraView& neighbor,
                                const SgmParams& params, int d_range_margin,
                                double tilt_threshold_deg) {
  PairDepthMap out;
  out.neighbor_id = neighbor.image_id;
  out.neighbor_center = neighbor.center;
  out.composition = pair_composition(classify_view(base, tilt_threshold_deg),
                                     classify_view(neighbor, tilt_threshold_deg));
  out.pair = rectify_pair(base, neighbor, d_range_margin);

  Raster8 rect_l, rect_r;
  Grid<uint8_t> val_l, val_r;
  resample_rectified(base, out.pair, true, rect_l, val_l);
  resample_rectified(neighbor, out.pair, false, rect_r, val_r);
  // Blank the pixels whose pull-back left the source raster; the masks keep
  // any census window touching them out of the cost volume.
  for (size_t i = 0; i < rect_l.data.size(); ++i)
    if (!val_l.data[i]) rect_l.data[i] = 0;
  for (size_t i = 0; i < rect_r.data.size(); ++i)
    if (!val_r.data[i]) rect_r.data[i] = 0;

  int levels = std::min(params.pyramid_levels, max_pyramid_levels(out.pair.width, out.pair.height));
  SgmParams p = params;
  p.pyramid_levels = levels;
  // Matching searches pixel shifts relative to the viewport offset; the map
  // itself stores total disparities so f*B/d holds as-is.
  const int doff = out.pair.disparity_offset();
  out.rect_disp = hierarchical_match(rect_l, rect_r, out.pair.d_min - doff,
                                     out.pair.d_max - doff, p, &val_l, &val_r);
  out.rect_disp.d_min += doff;
  out.rect_disp.d_max += doff;
  for (float& d : out.rect_disp.disp.data)
    if (!is_invalid(d)) d += (float)doff;

  // De-rectify: depth along the base ray at each base pixel, sampled from
  // the rectified disparity by nearest pixel.
  out.depth.kind = Dmap::Depth;
  out.depth.width = base.width;
  out.depth.height = base.height;
  out.depth.d_min = (float)(out.pair.rectified_focal * out.pair.baseline / out.pair.d_max);
  out.depth.d_max = out.pair.d_min > 0
                        ? (float)(out.pair.rectified_focal * out.pair.baseline / out.pair.d_min)
                        : std::numeric_limits<float>::max();
  out.depth.values.assign((size_t)base.width * base.height, kInvalid);
  out.depth.energies.assign((size_t)base.width * base.height, kInvalid);
  const double f = out.pair.rectified_focal;
  parallel_for(0, base.height, params.threads, [&](int64_t y0, int64_t y1) {
    for (int y = (int)y0; y < (int)y1; ++y) {
      for (int x = 0; x < base.width; ++x) {
        const Eigen::Vector3d d_cam((x - base.cx) / base.fx, (y - base.cy) / base.fy, 1.0);
        const Eigen::Vector3d v_r = out.pair.left_rectify_rot * d_cam;
        if (v_r.z() <= 1e-12) continue;
        const int rx = (int)std::lround(f * v_r.x() / v_r.z() + out.pair.rect_cx);
        const int ry = (int)std::lround(f * v_r.y() / v_r.z() + out.pair.rect_cy);
        if (rx < 0 || ry < 0 || rx >= out.pair.width || ry >= out.pair.height) continue;
        if (!out.rect_disp.valid_at(rx, ry) || !val_l.at(rx, ry)) continue;
        const double disp = out.rect_disp.disp.at(rx, ry);
        if (!(disp > 0)) continue;
        const double z_rect = f * out.pair.baseline / disp;
        out.depth.values[out.depth.idx(x, y)] = (float)(z_rect / v_r.z());
        out.depth.energies[out.depth.idx(x, y)] = out.rect_disp.energy.at(rx, ry);
      }
    }
  });
  return out;
}

std::vector<PairDepthMap> pair_depth_maps(const CameraView& base,
                                          const std::vector<CameraView>& views,
                                          const NeighborSet& neighbors, const SgmParams& params,
                                          int d_range_margin, double tilt_threshold_deg,
                                          std::vector<PairRejection>* rejections) {
  std::vector<PairDepthMap> maps;
  for (int id : neighbors.neighbor_ids) {
    const CameraView* nv = nullptr;
    for (const auto& v : views)
      if (v.image_id == id) nv = &v;
    if (!nv) fail(Err::ConfigError, "neighbor id missing from view list");
    try {
      maps.push_back(compute_pair_depth(base, *nv, params, d_range_margin, tilt_threshold_deg));
    } catch (const Error& e) {
      if (e.code() == Err::ExcessiveConvergence) {
        if (rejections) rejections->push_back({id, e.what()});
        continue;
      }
      throw;
    }
  }
  return maps;
}

std::vector<int> consistent_subset(const std::vector<double>& depths, double eps_rel) {
  std::vector<std::pair<double, int>> vals;
  for (size_t i = 0; i < depths.size(); ++i)
    if (!is_invalid(depths[i])) vals.emplace_back(depths[i], (int)i);
  std::sort(vals.begin(), vals.end());
  const int n = (int)vals.size();
  int best_i = 0, best_len = 0;
  for (int i = 0; i < n; ++i) {
    for (int len = best_len + 1; i + len <= n; ++len) {
      // Median of the sorted window; extremes decide membership.
      const int j = i + len;
      const double med = len % 2 ? vals[i + len / 2].first
                                 : 0.5 * (vals[i + len / 2 - 1].first + vals[i + len / 2].first);
      const double tol = eps_rel * med;
      if (vals[i].first >= med - tol && vals[j - 1].first <= med + tol) {
        best_i = i;
        best_len = len;
      }
    }
  }
  std::vector<int> out;
  for (int t = 0; t < best_len; ++t) out.push_back(vals[best_i + t].second);
  std::sort(out.begin(), out.end());
  return out;
}

FusionResult fuse_image(const CameraView& base, const std::vector<PairDepthMap>& maps, int k,
                        double eps_rel, int threads) {
  if (k < 2) fail(Err::KBelowTwo, "consistency threshold k must be at least 2");
  const int w = base.width, h = base.height;
  const size_t n = (size_t)w * h;
  for (const auto& m : maps)
    if (m.depth.width != w || m.depth.height != h)
      fail(Err::DimensionMismatch, "pair depth map does not match the base image grid");

  FusionResult res;
  res.fused.kind = Dmap::Depth;
  res.fused.width = w;
  res.fused.height = h;
  res.fused.values.assign(n, kInvalid);
  res.fused.energies.assign(n, kInvalid);

  std::vector<uint8_t> rays(n, 0);
  std::vector<float> angle(n, kInvalid);
  std::vector<uint32_t> mask(n, 0);
  std::vector<Eigen::Vector3d> pos(n);

  parallel_for(0, h, threads, [&](int64_t y0, int64_t y1) {
    std::vector<double> depths(maps.size());
    std::vector<double> tmp;
    for (int y = (int)y0; y < (int)y1; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t p = (size_t)y * w + x;
        for (size_t m = 0; m < maps.size(); ++m) depths[m] = maps[m].depth.values[p];
        const std::vector<int> sel = consistent_subset(depths, eps_rel);
        if ((int)sel.size() < k) continue;

        tmp.clear();
        for (int m : sel) tmp.push_back(depths[m]);
        std::sort(tmp.begin(), tmp.end());
        const double depth = median_sorted(tmp.begin(), tmp.end());
        const Eigen::Vector3d point = back_project(base, {(double)x, (double)y}, depth);

        tmp.clear();
        for (int m : sel)
          tmp.push_back(intersection_angle(point, base.center, maps[m].neighbor_center));
        std::sort(tmp.begin(), tmp.end());
        const double med_angle = median_sorted(tmp.begin(), tmp.end());

        tmp.clear();
        for (int m : sel) tmp.push_back(maps[m].depth.energies[p]);
        std::sort(tmp.begin(), tmp.end());
        const double med_energy = median_sorted(tmp.begin(), tmp.end());

        res.fused.values[p] = (float)depth;
        res.fused.energies[p] = (float)med_energy;
        rays[p] = (uint8_t)(sel.size() + 1);
        angle[p] = (float)med_angle;
        pos[p] = point;
        uint32_t bits = 0;
        for (int m : sel) bits |= 1u << m;
        mask[p] = bits;
      }
    }
  });

  PointCloud& cloud = res.cloud;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t p = (size_t)y * w + x;
      if (is_invalid(res.fused.values[p])) continue;
      cloud.xyz.push_back(pos[p]);
      cloud.source_image.push_back((uint32_t)base.image_id);
      cloud.num_rays.push_back(rays[p]);
      cloud.median_angle_deg.push_back(angle[p]);
      cloud.dim_energy.push_back(res.fused.energies[p]);
      cloud.source_px_x.push_back((float)x);
      cloud.source_px_y.push_back((float)y);
      cloud.pair_mask.push_back(mask[p]);
    }
  }
  return res;
}

PointCloud merge_clouds(const std::vector<PointCloud>& clouds) {
  PointCloud out;
  if (clouds.empty()) return out;
  out.frame = clouds.front().frame;
  for (const auto& c : clouds) out.append(c);
  return out;
}

}  // namespace mvsuq
