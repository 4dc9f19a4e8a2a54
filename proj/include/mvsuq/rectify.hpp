#pragma once

#include <array>

#include "mvsuq/camera.hpp"

namespace mvsuq {

struct RectifiedPair {
  int left_id = -1, right_id = -1;
  // Rotations applied on top of each camera's original rotation. The
  // rectified world-to-camera rotation of the left view is
  // left_rectify_rot * left.rotation, and likewise for the right.
  Eigen::Matrix3d left_rectify_rot = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d right_rectify_rot = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rect_rotation = Eigen::Matrix3d::Identity();  // shared rectified frame
  double rectified_focal = 0;
  double rect_cx = 0, rect_cy = 0;
  // The right principal point is shifted by the central prior disparity so
  // the matcher's search offsets stay near zero whatever the baseline;
  // disparities stay total: x_left - x_right = d - (rect_cx_right - rect_cx).
  double rect_cx_right = 0;
  double baseline = 0;
  int width = 0, height = 0;
  int d_min = 0, d_max = 0;

  // Offset between a total disparity and the matcher's pixel shift.
  int disparity_offset() const { return (int)std::lround(rect_cx_right - rect_cx); }

  CameraView rectified_view(const CameraView& src, bool left) const {
    CameraView v = src;
    v.width = width;
    v.height = height;
    v.fx = v.fy = rectified_focal;
    v.cx = left ? rect_cx : rect_cx_right;
    v.cy = rect_cy;
    v.rotation = (left ? left_rectify_rot : right_rectify_rot) * src.rotation;
    v.raster = Raster8{};
    return v;
  }
};

// Rotate-both-cameras rectification: shared x-axis along the baseline,
// z-axis from the mean optical axis made orthogonal to the baseline.
// The disparity range covers the intersection of the two views' depth
// priors, mapped to the shared rectified axis, plus `d_range_margin`
// pixels each side; commonly visible points satisfy both priors, so the
// intersection is the tightest safe band.
RectifiedPair rectify_pair(const CameraView& view_a, const CameraView& view_b,
                           int d_range_margin);

double disparity_to_depth(double d, const RectifiedPair& pair);
double depth_to_disparity(double z, const RectifiedPair& pair);

// Resamples the source raster into the rectified frame with bilinear
// interpolation. `valid` marks rectified pixels whose pull-back footprint
// lies fully inside the source raster.
void resample_rectified(const CameraView& src, const RectifiedPair& pair, bool left,
                        Raster8& out, Grid<uint8_t>& valid);

}  // namespace mvsuq
