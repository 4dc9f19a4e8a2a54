#include "mvsuq/uncertainty.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <map>

#include "mvsuq/parallel.hpp"

namespace mvsuq {

double reprojection_error(const Eigen::Vector3d& point, const CameraView& neighbor,
                          const Eigen::Vector2d& correspondence) {
  return (project(point, neighbor) - correspondence).norm();
}

std::optional<Eigen::Vector2d> correspondence_in_neighbor(const CameraView& base,
                                                          const CameraView& neighbor,
                                                          const PairDepthMap& map, int x, int y) {
  // Mirror the de-rectification sampling: nearest rectified pixel.
  const Eigen::Vector3d d_cam((x - base.cx) / base.fx, (y - base.cy) / base.fy, 1.0);
  const Eigen::Vector3d v_l = map.pair.left_rectify_rot * d_cam;
  if (v_l.z() <= 1e-12) return std::nullopt;
  const double f = map.pair.rectified_focal;
  const int rx = (int)std::lround(f * v_l.x() / v_l.z() + map.pair.rect_cx);
  const int ry = (int)std::lround(f * v_l.y() / v_l.z() + map.pair.rect_cy);
  if (rx < 0 || ry < 0 || rx >= map.pair.width || ry >= map.pair.height) return std::nullopt;
  if (!map.rect_disp.valid_at(rx, ry)) return std::nullopt;

  const double disp = map.rect_disp.disp.at(rx, ry);
  const Eigen::Vector3d v_r((rx - disp - map.pair.rect_cx) / f, (ry - map.pair.rect_cy) / f, 1.0);
  const Eigen::Vector3d v_n = map.pair.right_rectify_rot.transpose() * v_r;
  if (v_n.z() <= 1e-12) return std::nullopt;
  return Eigen::Vector2d(neighbor.fx * v_n.x() / v_n.z() + neighbor.cx,
                         neighbor.fy * v_n.y() / v_n.z() + neighbor.cy);
}

PseudoGtSelection select_pseudo_gt(const PointCloud& fused, const CameraView& base, int min_rays,
                                   double self_gate_px) {
  if (min_rays < 3) fail(Err::ConfigError, "pseudo ground truth needs min_rays >= 3");
  if (fused.num_rays.size() != fused.size() || fused.source_px_x.size() != fused.size())
    fail(Err::DimensionMismatch, "cloud lacks ray counts or source pixels");

  PseudoGtSelection out;
  for (size_t i = 0; i < fused.size(); ++i) {
    if (fused.num_rays[i] < min_rays) continue;
    Eigen::Vector2d px;
    try {
      px = project(fused.xyz[i], base);
    } catch (const Error&) {
      continue;
    }
    const Eigen::Vector2d own((double)fused.source_px_x[i], (double)fused.source_px_y[i]);
    if ((px - own).norm() >= self_gate_px) continue;
    out.rows.push_back(i);
  }
  out.points = select_rows(fused, out.rows);
  out.low_count = out.rows.size() < 1000;
  return out;
}

std::vector<ReprojectionSample> collect_samples(const PointCloud& pseudo_gt,
                                                const CameraView& base,
                                                const std::vector<CameraView>& views,
                                                const std::vector<PairDepthMap>& maps,
                                                int threads) {
  if (pseudo_gt.pair_mask.size() != pseudo_gt.size() ||
      pseudo_gt.source_px_x.size() != pseudo_gt.size())
    fail(Err::DimensionMismatch, "cloud lacks pair masks or source pixels");

  std::vector<const CameraView*> neighbor_views(maps.size(), nullptr);
  for (size_t m = 0; m < maps.size(); ++m) {
    for (const auto& v : views)
      if (v.image_id == maps[m].neighbor_id) neighbor_views[m] = &v;
    if (!neighbor_views[m]) fail(Err::ConfigError, "neighbor view missing from the view list");
  }

  std::vector<std::vector<ReprojectionSample>> per_point(pseudo_gt.size());
  parallel_for(0, (int64_t)pseudo_gt.size(), threads, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const int x = (int)std::lround(pseudo_gt.source_px_x[i]);
      const int y = (int)std::lround(pseudo_gt.source_px_y[i]);
      for (size_t m = 0; m < maps.size(); ++m) {
        if (!(pseudo_gt.pair_mask[i] >> m & 1u)) continue;
        const float energy = maps[m].depth.energies[maps[m].depth.idx(x, y)];
        if (is_invalid(energy)) continue;
        const auto corr = correspondence_in_neighbor(base, *neighbor_views[m], maps[m], x, y);
        if (!corr) continue;
        double r;
        try {
          r = reprojection_error(pseudo_gt.xyz[i], *neighbor_views[m], *corr);
        } catch (const Error&) {
          continue;
        }
        ReprojectionSample s;
        s.px_x = (float)x;
        s.px_y = (float)y;
        s.neighbor_id = maps[m].neighbor_id;
        s.energy = energy;
        s.r = r;
        per_point[i].push_back(s);
      }
    }
  });

  std::vector<ReprojectionSample> out;
  for (const auto& list : per_point) out.insert(out.end(), list.begin(), list.end());
  return out;
}

GammaModel fit_gamma(const std::vector<double>& samples, size_t min_samples) {
  GammaModel model;
  std::vector<double> x;
  x.reserve(samples.size());
  for (double v : samples) {
    if (!std::isfinite(v)) continue;
    if (v <= 0) {
      v = 1e-6;
      model.clamped_zeros++;
    }
    x.push_back(v);
  }
  if (x.size() < std::max<size_t>(min_samples, 2))
    fail(Err::DegenerateSamples, "too few positive samples for a Gamma fit");
  // Canonical summation order: permutation invariance and rerun stability.
  std::sort(x.begin(), x.end());
  model.sample_count = x.size();

  const double n = (double)x.size();
  double sum = 0, sum_log = 0;
  for (double v : x) {
    sum += v;
    sum_log += std::log(v);
  }
  const double mean = sum / n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  if (var < 1e-18) fail(Err::DegenerateSamples, "constant samples have no finite fit");

  const double s = std::log(mean) - sum_log / n;  // > 0 by Jensen
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(k) - boost::math::digamma(k) - s;
    const double fp = 1.0 / k - boost::math::trigamma(k);
    double next = k - f / fp;
    if (!(next > 0)) next = k / 2;
    const double rel = std::abs(next - k) / k;
    k = next;
    if (rel < 1e-10) break;
  }
  model.k = k;
  model.theta = mean / k;
  return model;
}

UqTable build_uq_table(const std::vector<ReprojectionSample>& samples, double bin_size,
                       size_t min_samples) {
  if (!(bin_size > 0)) fail(Err::ConfigError, "bin size must be positive");
  if (samples.empty()) fail(Err::NoSamples, "no reprojection samples to bin");

  std::map<int64_t, std::vector<double>> bins;
  for (const auto& s : samples) {
    const int64_t b = std::max<int64_t>(0, (int64_t)std::floor(s.energy / bin_size));
    bins[b].push_back(s.r);
  }

  UqTable table;
  table.bin_size = bin_size;
  table.min_samples = min_samples;

  const int64_t last = bins.rbegin()->first;
  std::vector<double> pending;
  double lo = 0;
  for (int64_t b = 0; b <= last; ++b) {
    if (auto it = bins.find(b); it != bins.end())
      pending.insert(pending.end(), it->second.begin(), it->second.end());
    if (pending.size() < min_samples && b < last) continue;  // merge rightward
    const double hi = (double)(b + 1) * bin_size;
    if (pending.size() >= min_samples || table.models.empty()) {
      GammaModel m = fit_gamma(pending, std::min<size_t>(min_samples, 2));
      m.e_lo = lo;
      m.e_hi = hi;
      table.models.push_back(m);
    } else {
      // Trailing undersized remainder: merge leftward into the last model.
      GammaModel& prev = table.models.back();
      std::vector<double> merged = pending;
      // Refitting needs the previous bin's samples again; gather them.
      for (const auto& s : samples)
        if (prev.e_lo <= s.energy && s.energy < prev.e_hi) merged.push_back(s.r);
      GammaModel m = fit_gamma(merged, std::min<size_t>(min_samples, 2));
      m.e_lo = prev.e_lo;
      m.e_hi = hi;
      prev = m;
    }
    pending.clear();
    lo = hi;
  }
  return table;
}

InferredError infer_error(double energy, const UqTable& table) {
  if (table.models.empty()) fail(Err::EmptyTable, "uncertainty table has no bins");
  InferredError out;
  for (const auto& m : table.models) {
    if (energy < m.e_hi) {
      out.model = m;
      return out;
    }
  }
  out.model = table.models.back();
  out.extrapolated = true;
  return out;
}

namespace {

void write_prediction(PointCloud& cloud, size_t i, std::vector<double>& means,
                      std::vector<double>& stds) {
  if (means.empty()) {
    cloud.predicted_error_mean_px[i] = kInvalid;
    cloud.predicted_error_std_px[i] = kInvalid;
    return;
  }
  std::sort(means.begin(), means.end());
  std::sort(stds.begin(), stds.end());
  cloud.predicted_error_mean_px[i] = (float)median_sorted(means.begin(), means.end());
  cloud.predicted_error_std_px[i] = (float)median_sorted(stds.begin(), stds.end());
}

}  // namespace

void annotate_cloud(PointCloud& cloud, const UqTable& table,
                    const std::vector<PairDepthMap>& maps) {
  if (cloud.pair_mask.size() != cloud.size() || cloud.source_px_x.size() != cloud.size())
    fail(Err::DimensionMismatch, "cloud lacks pair masks or source pixels");
  cloud.predicted_error_mean_px.assign(cloud.size(), kInvalid);
  cloud.predicted_error_std_px.assign(cloud.size(), kInvalid);

  std::vector<double> means, stds;
  for (size_t i = 0; i < cloud.size(); ++i) {
    means.clear();
    stds.clear();
    const int x = (int)std::lround(cloud.source_px_x[i]);
    const int y = (int)std::lround(cloud.source_px_y[i]);
    for (size_t m = 0; m < maps.size(); ++m) {
      if (!(cloud.pair_mask[i] >> m & 1u)) continue;
      const float energy = maps[m].depth.energies[maps[m].depth.idx(x, y)];
      if (is_invalid(energy)) continue;
      const InferredError inf = infer_error(energy, table);
      means.push_back(inf.model.mean());
      stds.push_back(inf.model.stddev());
    }
    write_prediction(cloud, i, means, stds);
  }
}

void annotate_cloud(PointCloud& cloud, const UqTable& table) {
  if (cloud.dim_energy.size() != cloud.size())
    fail(Err::DimensionMismatch, "cloud lacks an energy column");
  cloud.predicted_error_mean_px.assign(cloud.size(), kInvalid);
  cloud.predicted_error_std_px.assign(cloud.size(), kInvalid);
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (is_invalid(cloud.dim_energy[i])) continue;
    const InferredError inf = infer_error(cloud.dim_energy[i], table);
    cloud.predicted_error_mean_px[i] = (float)inf.model.mean();
    cloud.predicted_error_std_px[i] = (float)inf.model.stddev();
  }
}

}  // namespace mvsuq
