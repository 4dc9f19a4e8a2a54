#include "mvsuq/rectify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvsuq {

namespace {

// Projection of the view's optical axis into the rectified frame, as a
// pixel offset from the principal point at unit focal.
Eigen::Vector2d axis_offset(const CameraView& v, const Eigen::Matrix3d& rect_rot) {
  const Eigen::Vector3d a = rect_rot * v.optical_axis_world();
  return {a.x() / a.z(), a.y() / a.z()};
}

}  // namespace

RectifiedPair rectify_pair(const CameraView& view_a, const CameraView& view_b,
                           int d_range_margin) {
  const Eigen::Vector3d base_vec = view_b.center - view_a.center;
  const double baseline = base_vec.norm();
  if (baseline < 1e-6) fail(Err::CoincidentCenters, "rectify_pair: baseline below 1e-6 m");

  const Eigen::Vector3d axis_a = view_a.optical_axis_world();
  const Eigen::Vector3d axis_b = view_b.optical_axis_world();
  if (axis_a.dot(axis_b) < 0)
    fail(Err::ExcessiveConvergence, "rectify_pair: optical axes diverge by more than 90 deg");

  const Eigen::Vector3d e1 = base_vec / baseline;
  const Eigen::Vector3d mean_axis = (axis_a + axis_b).normalized();
  Eigen::Vector3d e3 = mean_axis - mean_axis.dot(e1) * e1;
  if (e3.norm() < 1e-9)
    fail(Err::ExcessiveConvergence, "rectify_pair: optical axes parallel to the baseline");
  e3.normalize();
  const Eigen::Vector3d e2 = e3.cross(e1);

  RectifiedPair pair;
  pair.left_id = view_a.image_id;
  pair.right_id = view_b.image_id;
  pair.baseline = baseline;
  pair.rect_rotation.row(0) = e1.transpose();
  pair.rect_rotation.row(1) = e2.transpose();
  pair.rect_rotation.row(2) = e3.transpose();
  pair.left_rectify_rot = pair.rect_rotation * view_a.rotation.transpose();
  pair.right_rectify_rot = pair.rect_rotation * view_b.rotation.transpose();
  pair.rectified_focal = 0.25 * (view_a.fx + view_a.fy + view_b.fx + view_b.fy);
  pair.width = std::max(view_a.width, view_b.width);
  pair.height = std::max(view_a.height, view_b.height);

  const Eigen::Vector2d off =
      0.5 * (axis_offset(view_a, pair.rect_rotation) + axis_offset(view_b, pair.rect_rotation));
  pair.rect_cx = 0.5 * pair.width - pair.rectified_focal * off.x();
  pair.rect_cy = 0.5 * pair.height - pair.rectified_focal * off.y();

  if (std::min(axis_a.dot(e3), axis_b.dot(e3)) <= 0.1)
    fail(Err::ExcessiveConvergence, "rectify_pair: rectified axis too far from optical axes");

  // Each prior bounds depth along its own optical axis; a point at rectified
  // depth Z sits within [Z*cos w, Z/cos w] of it, w being the axis tilt.
  // A commonly visible point must satisfy both views, so intersect.
  double z_lo = 0, z_hi = std::numeric_limits<double>::infinity();
  bool any_prior = false;
  const Eigen::Vector3d axes[2] = {axis_a, axis_b};
  const CameraView* vs[2] = {&view_a, &view_b};
  for (int i = 0; i < 2; ++i) {
    if (!(vs[i]->z_near > 0) || !(vs[i]->z_far >= vs[i]->z_near)) continue;
    const double cw = axes[i].dot(e3);
    z_lo = std::max(z_lo, vs[i]->z_near * cw);
    z_hi = std::min(z_hi, vs[i]->z_far / cw);
    any_prior = true;
  }
  if (!any_prior) fail(Err::ConfigError, "rectify_pair: views carry no usable depth prior");
  if (z_hi < z_lo)
    fail(Err::EmptyDisparityRange, "rectify_pair: depth priors do not overlap");

  const double fb = pair.rectified_focal * baseline;
  pair.d_min = std::max(0, (int)std::floor(fb / z_hi) - d_range_margin);
  pair.d_max = (int)std::ceil(fb / z_lo) + d_range_margin;
  if (pair.d_max < pair.d_min) fail(Err::EmptyDisparityRange, "rectify_pair: empty range");

  // Centering the search band on the prior keeps the matcher's pixel shifts
  // small even when the baseline is long relative to the image width.
  pair.rect_cx_right = pair.rect_cx + std::floor(0.5 * (pair.d_min + pair.d_max));
  return pair;
}

double disparity_to_depth(double d, const RectifiedPair& pair) {
  if (!(d > 0)) fail(Err::NonPositiveDisparity, "disparity_to_depth");
  return pair.rectified_focal * pair.baseline / d;
}

double depth_to_disparity(double z, const RectifiedPair& pair) {
  if (!(z > 0)) fail(Err::NonPositiveDepth, "depth_to_disparity");
  return pair.rectified_focal * pair.baseline / z;
}

void resample_rectified(const CameraView& src, const RectifiedPair& pair, bool left,
                        Raster8& out, Grid<uint8_t>& valid) {
  const Eigen::Matrix3d& rr = left ? pair.left_rectify_rot : pair.right_rectify_rot;
  const Eigen::Matrix3d back = rr.transpose();
  out = Raster8(pair.width, pair.height, 0);
  valid = Grid<uint8_t>(pair.width, pair.height, 0);
  const double f = pair.rectified_focal;
  const double cx = left ? pair.rect_cx : pair.rect_cx_right;
  for (int y = 0; y < pair.height; ++y) {
    for (int x = 0; x < pair.width; ++x) {
      const Eigen::Vector3d dir_rect((x - cx) / f, (y - pair.rect_cy) / f, 1.0);
      const Eigen::Vector3d dir_src = back * dir_rect;
      if (dir_src.z() <= 1e-12) continue;
      const double sx = src.fx * dir_src.x() / dir_src.z() + src.cx;
      const double sy = src.fy * dir_src.y() / dir_src.z() + src.cy;
      const int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
      if (x0 < 0 || y0 < 0 || x0 + 1 >= src.width || y0 + 1 >= src.height) continue;
      const double ax = sx - x0, ay = sy - y0;
      const double v00 = src.raster.at(x0, y0), v10 = src.raster.at(x0 + 1, y0);
      const double v01 = src.raster.at(x0, y0 + 1), v11 = src.raster.at(x0 + 1, y0 + 1);
      const double v = (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
      out.at(x, y) = (uint8_t)std::lround(std::min(255.0, std::max(0.0, v)));
      valid.at(x, y) = 1;
    }
  }
}

}  // namespace mvsuq
