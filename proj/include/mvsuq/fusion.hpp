#pragma once

#include <vector>

#include "mvsuq/camera.hpp"
#include "mvsuq/cloud.hpp"
#include "mvsuq/io.hpp"
#include "mvsuq/rectify.hpp"
#include "mvsuq/stereo.hpp"

namespace mvsuq {

struct NeighborSet {
  int base_id = -1;
  std::vector<int> neighbor_ids;  // descending score, ties by id
  std::vector<double> scores;
};

// Scores every other view by Monte-Carlo frustum overlap (256 rays sampled
// from the base view at its depth prior) times a convergence-angle window:
// weight 1 between 5 and 45 degrees, falling linearly to 0 at 0 and 60.
// Keeps the top n positive scores; fewer than k positives is an error.
NeighborSet select_neighbors(const std::vector<CameraView>& views, int base_id, int n, int k,
                             uint64_t seed = 0x5eed);

double neighbor_score(const CameraView& base, const CameraView& candidate, uint64_t seed = 0x5eed);

// One neighbor's contribution to a base image: the rectification, the
// rectified-frame disparities (kept so later stages can rebuild exact
// correspondences) and the de-rectified depth on the base pixel grid.
struct PairDepthMap {
  int neighbor_id = -1;
  Eigen::Vector3d neighbor_center = Eigen::Vector3d::Zero();
  PairComposition composition = PairComposition::NN;
  RectifiedPair pair;
  DisparityMap rect_disp;
  Dmap depth;
};

struct PairRejection {
  int neighbor_id = -1;
  std::string reason;
};

// Rectify + match one pair and express the result as depth along the base
// camera's rays, nearest-pixel resampled onto the base grid.
PairDepthMap compute_pair_depth(const CameraView& base, const CameraView& neighbor,
                                const SgmParams& params, int d_range_margin,
                                double tilt_threshold_deg);

// All pairs of a neighbor set; rejected pairs (ExcessiveConvergence) are
// recorded and their maps omitted.
std::vector<PairDepthMap> pair_depth_maps(const CameraView& base,
                                          const std::vector<CameraView>& views,
                                          const NeighborSet& neighbors, const SgmParams& params,
                                          int d_range_margin, double tilt_threshold_deg,
                                          std::vector<PairRejection>* rejections = nullptr);

// Largest group of depths that agree to within eps_rel of the group median,
// found by scanning windows of the sorted values (leftmost-maximal rule).
// Returns indices into the input list; INVALID (NaN) entries never join.
std::vector<int> consistent_subset(const std::vector<double>& depths, double eps_rel);

struct FusionResult {
  Dmap fused;        // depth kind, energy = per-pixel fused energy
  PointCloud cloud;  // one point per fused pixel, row-major pixel order
};

// Median-of-agreeing-depths fusion along each base pixel ray. A pixel
// survives when at least k depth maps agree; the point then carries
// num_rays = |agreeing maps| + 1, the median pairwise intersection angle
// and the median dim_energy of its supporters.
FusionResult fuse_image(const CameraView& base, const std::vector<PairDepthMap>& maps, int k,
                        double eps_rel, int threads = 1);

// Plain concatenation in the given order; frames must match.
PointCloud merge_clouds(const std::vector<PointCloud>& clouds);

}  // namespace mvsuq
