#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvsuq/camera.hpp"
#include "mvsuq/cloud.hpp"

namespace mvsuq {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  // this after other: (this*other)(p) = this(other(p)).
  RigidTransform compose(const RigidTransform& other) const;
  RigidTransform inverse() const;
};

void apply_transform(PointCloud& cloud, const RigidTransform& t);

// Least-squares rigid fit mapping src onto dst (determinant-corrected SVD).
// min_rank 2 admits planar sets; icp_register demands full rank 3.
RigidTransform estimate_rigid(const std::vector<Eigen::Vector3d>& src,
                              const std::vector<Eigen::Vector3d>& dst, int min_rank = 2);

struct IcpResult {
  RigidTransform transform;
  double rms = 0;
  int iterations = 0;
};

// Point-to-point ICP with 10% worst-pair trimming. Assumes rough
// pre-alignment; rigid only, no scale.
IcpResult icp_register(const PointCloud& source, const PointCloud& target, int max_iters = 50,
                       double conv_tol = 1e-6, int threads = 1);

// Distance from each cloud point to its nearest reference point.
std::vector<double> per_point_error(const PointCloud& cloud, const PointCloud& reference,
                                    int threads = 1);

struct MeanStd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();  // population
  size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values);

struct ErrorBin {
  double lo = 0;
  double hi = 0;  // +inf on an open last bin
  size_t count = 0;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  double proportion = 0;
};

struct BinnedErrorStats {
  std::string metric_name;
  std::vector<ErrorBin> bins;
  size_t total = 0;  // points that landed in some bin
};

// Half-open bins [edges[i], edges[i+1]); open_last appends [edges.back(), inf).
BinnedErrorStats bin_by_metric(const std::vector<double>& metric,
                               const std::vector<double>& errors, const std::string& metric_name,
                               const std::vector<double>& edges, bool open_last = true);

std::vector<double> uniform_edges(double lo, double hi, double width);

struct Histogram {
  std::vector<double> edges;
  bool open_last = false;
  std::vector<size_t> counts;
  size_t total = 0;
};

Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges,
                    bool open_last);

struct ErrorSplit {
  PointCloud low, high;  // low: error < threshold; high: error >= threshold
  Histogram low_rays, high_rays;
  Histogram low_angles, high_angles;
};

ErrorSplit split_by_error(const PointCloud& cloud, double threshold = 0.5);

struct StereoPairCloud {
  int left_id = 0, right_id = 0;
  PairComposition composition = PairComposition::NN;
  PointCloud cloud;  // median_angle_deg holds the per-point intersection angle
};

struct CompositionRow {
  size_t count = 0;
  double mean_vs_mvs = std::numeric_limits<double>::quiet_NaN();
  double std_vs_mvs = std::numeric_limits<double>::quiet_NaN();
  double mean_vs_ref = std::numeric_limits<double>::quiet_NaN();
  double std_vs_ref = std::numeric_limits<double>::quiet_NaN();
};

struct PairCompositionStats {
  CompositionRow rows[3];  // indexed by PairComposition
};

PairCompositionStats pair_composition_stats(const std::vector<StereoPairCloud>& pairs,
                                            const PointCloud& mvs, const PointCloud& reference,
                                            int threads = 1);

// 5 degree bins over [0, 60) plus an overflow bin.
Histogram intersection_angle_histogram(const std::vector<double>& angles_deg);
Histogram intersection_angle_histogram(const std::vector<StereoPairCloud>& pairs,
                                       std::optional<PairComposition> filter);

struct OlsFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();  // NaN when y has no variance
};

// Non-finite pairs are dropped; needs >= 3 surviving points.
OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y);
double correlation_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mvsuq
