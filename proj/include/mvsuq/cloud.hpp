#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "mvsuq/common.hpp"

namespace mvsuq {

// Column-oriented point cloud. xyz is always populated; every other column
// is either empty or exactly size() long. The schema matches the PLY layout
// (see io.hpp), with source pixel and pair mask columns carried as optional
// extras so downstream stages can rebuild stereo correspondences.
struct PointCloud {
  std::string frame = "world";
  std::vector<Eigen::Vector3d> xyz;
  std::vector<uint32_t> source_image;
  std::vector<uint8_t> num_rays;
  std::vector<float> median_angle_deg;
  std::vector<float> dim_energy;
  std::vector<float> error_m;
  std::vector<float> predicted_error_mean_px;
  std::vector<float> predicted_error_std_px;
  std::vector<float> source_px_x;
  std::vector<float> source_px_y;
  std::vector<uint32_t> pair_mask;

  size_t size() const { return xyz.size(); }
  bool empty() const { return xyz.empty(); }

  // Throws DimensionMismatch on ragged columns, DegeneratePoint on
  // non-finite coordinates.
  void check() const;

  std::pair<Eigen::Vector3d, Eigen::Vector3d> bounds() const;
  double extent() const;

  void append(const PointCloud& other);
};

// Row subset in the given index order; populated columns follow along.
PointCloud select_rows(const PointCloud& cloud, const std::vector<size_t>& rows);

}  // namespace mvsuq
