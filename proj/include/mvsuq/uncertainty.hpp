#pragma once

#include <optional>
#include <vector>

#include "mvsuq/camera.hpp"
#include "mvsuq/cloud.hpp"
#include "mvsuq/fusion.hpp"

namespace mvsuq {

// One (pseudo-ground-truth point, neighbor) residual.
struct ReprojectionSample {
  float px_x = 0, px_y = 0;  // base pixel
  int neighbor_id = -1;
  double energy = 0;  // cost units
  double r = 0;       // pixels
};

// Pixel distance between the point's projection into the neighbor view and
// the match the disparity search produced there.
double reprojection_error(const Eigen::Vector3d& point, const CameraView& neighbor,
                          const Eigen::Vector2d& correspondence);

// Where the disparity map sends base pixel (x, y) in the neighbor image.
// Empty when the pixel has no valid match.
std::optional<Eigen::Vector2d> correspondence_in_neighbor(const CameraView& base,
                                                          const CameraView& neighbor,
                                                          const PairDepthMap& map, int x, int y);

struct PseudoGtSelection {
  PointCloud points;
  std::vector<size_t> rows;  // into the source cloud
  bool low_count = false;    // fewer than 1000 survivors: fit quality degrades
};

// Multi-ray points whose fused position still lands on its own base pixel.
PseudoGtSelection select_pseudo_gt(const PointCloud& fused, const CameraView& base,
                                   int min_rays = 6, double self_gate_px = 1.0);

std::vector<ReprojectionSample> collect_samples(const PointCloud& pseudo_gt,
                                                const CameraView& base,
                                                const std::vector<CameraView>& views,
                                                const std::vector<PairDepthMap>& maps,
                                                int threads = 1);

struct GammaModel {
  double k = 0;      // shape
  double theta = 0;  // scale, pixels
  double e_lo = 0, e_hi = 0;
  size_t sample_count = 0;
  size_t clamped_zeros = 0;

  double mean() const { return k * theta; }
  double stddev() const { return std::sqrt(k) * theta; }
};

// Maximum-likelihood Gamma fit; ln(k) - digamma(k) = ln(mean) - mean(ln x)
// solved by Newton from the closed-form starting point.
GammaModel fit_gamma(const std::vector<double>& samples, size_t min_samples = 200);

struct UqTable {
  double bin_size = 1000;
  size_t min_samples = 200;
  std::vector<GammaModel> models;  // contiguous, ascending energy
};

UqTable build_uq_table(const std::vector<ReprojectionSample>& samples, double bin_size = 1000,
                       size_t min_samples = 200);

struct InferredError {
  GammaModel model;
  bool extrapolated = false;  // energy beyond the last fitted bin
};

InferredError infer_error(double energy, const UqTable& table);

// Per-pair inferred means/stds combined by their median. Points with no
// valid pair energy get NaN predictions.
void annotate_cloud(PointCloud& cloud, const UqTable& table,
                    const std::vector<PairDepthMap>& maps);

// Fallback when pair maps are gone: one lookup on the fused energy column.
void annotate_cloud(PointCloud& cloud, const UqTable& table);

}  // namespace mvsuq
