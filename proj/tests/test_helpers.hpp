#pragma once

#include <Eigen/Geometry>
#include <random>

#include "mvsuq/camera.hpp"

namespace mvsuq::testutil {

// World-to-camera rotation whose optical axis (camera z in world) is `z`.
inline Eigen::Matrix3d rot_with_axis(Eigen::Vector3d z) {
  z.normalize();
  const Eigen::Vector3d h = std::abs(z.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d x = h.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return r;
}

inline CameraView make_view(int id, const Eigen::Vector3d& center, const Eigen::Vector3d& axis,
                            double f = 1000, int w = 1000, int h = 1000) {
  CameraView v;
  v.image_id = id;
  v.width = w;
  v.height = h;
  v.fx = v.fy = f;
  v.cx = w / 2.0;
  v.cy = h / 2.0;
  v.rotation = rot_with_axis(axis);
  v.center = center;
  v.z_near = 1.0;
  v.z_far = 100.0;
  return v;
}

inline Eigen::Matrix3d random_rotation(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::Vector3d axis;
  do {
    axis = {u(rng), u(rng), u(rng)};
  } while (axis.norm() < 1e-3);
  std::uniform_real_distribution<double> ang(0, 2 * kPi);
  return Eigen::AngleAxisd(ang(rng), axis.normalized()).toRotationMatrix();
}

}  // namespace mvsuq::testutil
