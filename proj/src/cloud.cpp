#include "mvsuq/cloud.hpp"

#include <cmath>
#include <limits>

namespace mvsuq {

namespace {

template <typename T>
void check_column(const std::vector<T>& col, size_t n, const char* name) {
  if (!col.empty() && col.size() != n)
    fail(Err::DimensionMismatch, std::string("cloud column ") + name + " is ragged");
}

}  // namespace

void PointCloud::check() const {
  const size_t n = xyz.size();
  check_column(source_image, n, "source_image");
  check_column(num_rays, n, "num_rays");
  check_column(median_angle_deg, n, "median_angle_deg");
  check_column(dim_energy, n, "dim_energy");
  check_column(error_m, n, "error_m");
  check_column(predicted_error_mean_px, n, "predicted_error_mean_px");
  check_column(predicted_error_std_px, n, "predicted_error_std_px");
  check_column(source_px_x, n, "source_px_x");
  check_column(source_px_y, n, "source_px_y");
  check_column(pair_mask, n, "pair_mask");
  for (const auto& p : xyz)
    if (!p.allFinite()) fail(Err::DegeneratePoint, "non-finite point coordinates");
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> PointCloud::bounds() const {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& p : xyz) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {lo, hi};
}

double PointCloud::extent() const {
  if (empty()) return 0;
  const auto [lo, hi] = bounds();
  return (hi - lo).norm();
}

void PointCloud::append(const PointCloud& other) {
  if (frame != other.frame) fail(Err::FrameMismatch, "appending clouds from different frames");
  auto cat = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  cat(xyz, other.xyz);
  cat(source_image, other.source_image);
  cat(num_rays, other.num_rays);
  cat(median_angle_deg, other.median_angle_deg);
  cat(dim_energy, other.dim_energy);
  cat(error_m, other.error_m);
  cat(predicted_error_mean_px, other.predicted_error_mean_px);
  cat(predicted_error_std_px, other.predicted_error_std_px);
  cat(source_px_x, other.source_px_x);
  cat(source_px_y, other.source_px_y);
  cat(pair_mask, other.pair_mask);
}

PointCloud select_rows(const PointCloud& cloud, const std::vector<size_t>& rows) {
  PointCloud out;
  out.frame = cloud.frame;
  auto pick = [&](auto& dst, const auto& src) {
    if (src.empty()) return;
    dst.reserve(rows.size());
    for (size_t r : rows) dst.push_back(src[r]);
  };
  pick(out.xyz, cloud.xyz);
  pick(out.source_image, cloud.source_image);
  pick(out.num_rays, cloud.num_rays);
  pick(out.median_angle_deg, cloud.median_angle_deg);
  pick(out.dim_energy, cloud.dim_energy);
  pick(out.error_m, cloud.error_m);
  pick(out.predicted_error_mean_px, cloud.predicted_error_mean_px);
  pick(out.predicted_error_std_px, cloud.predicted_error_std_px);
  pick(out.source_px_x, cloud.source_px_x);
  pick(out.source_px_y, cloud.source_px_y);
  pick(out.pair_mask, cloud.pair_mask);
  return out;
}

}  // namespace mvsuq
