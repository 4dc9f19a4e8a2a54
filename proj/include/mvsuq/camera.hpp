#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <utility>

#include "mvsuq/common.hpp"

namespace mvsuq {

// Oriented pinhole camera. `rotation` maps world to camera coordinates,
// `center` is the projection center in the world frame. Depth of a world
// point is its z coordinate in the camera frame.
struct CameraView {
  int image_id = -1;
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Raster8 raster;
  // Scene depth along the optical axis, used to size disparity searches.
  double z_near = 0, z_far = 0;

  Eigen::Vector3d optical_axis_world() const { return rotation.row(2).transpose(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return rotation * (p - center); }
};

// Throws ConfigError unless rotation is orthonormal with det +1, focals are
// positive and the principal point falls inside the image.
void validate_view(const CameraView& view);

struct ViewClass {
  enum Kind { Nadir, Oblique };
  Kind kind = Nadir;
  double tilt_deg = 0;
};

enum class PairComposition { NN, NO, OO };
const char* composition_name(PairComposition c);
PairComposition pair_composition(const ViewClass& a, const ViewClass& b);

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraView& view);

// World-to-camera rotation whose optical axis is `axis`; the image x axis
// is chosen deterministically from the world frame.
Eigen::Matrix3d rotation_with_axis(const Eigen::Vector3d& axis);

// Unit-length ray direction in world coordinates through the given pixel.
Eigen::Vector3d pixel_ray_direction(const CameraView& view, const Eigen::Vector2d& px);

// World point on the pixel ray whose camera-frame z coordinate equals `depth`.
Eigen::Vector3d back_project(const CameraView& view, const Eigen::Vector2d& px, double depth);

struct Triangulation {
  Eigen::Vector3d point;  // midpoint of the common perpendicular segment
  double ray_gap = 0;     // length of that segment, meters
};

Triangulation triangulate(const Eigen::Vector2d& px_a, const CameraView& view_a,
                          const Eigen::Vector2d& px_b, const CameraView& view_b);

// Angle in degrees subtended at `point` by the two camera centers.
double intersection_angle(const Eigen::Vector3d& point, const Eigen::Vector3d& center_a,
                          const Eigen::Vector3d& center_b);

// Nadir iff the optical axis is within tilt_threshold_deg of `down`
// (strict less-than; a tilt exactly at the threshold is Oblique).
ViewClass classify_view(const CameraView& view, double tilt_threshold_deg,
                        const Eigen::Vector3d& down = Eigen::Vector3d(0, 0, -1));

}  // namespace mvsuq
