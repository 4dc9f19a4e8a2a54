#include "mvsuq/camera.hpp"

#include <cmath>

namespace mvsuq {

void validate_view(const CameraView& view) {
  if (view.width <= 0 || view.height <= 0) fail(Err::ConfigError, "view has empty raster dims");
  if (!(view.fx > 0) || !(view.fy > 0)) fail(Err::ConfigError, "non-positive focal length");
  if (view.cx < 0 || view.cx > view.width || view.cy < 0 || view.cy > view.height)
    fail(Err::ConfigError, "principal point outside image");
  const Eigen::Matrix3d rrt = view.rotation * view.rotation.transpose();
  if ((rrt - Eigen::Matrix3d::Identity()).norm() > 1e-9)
    fail(Err::ConfigError, "rotation not orthonormal");
  if (std::abs(view.rotation.determinant() - 1.0) > 1e-9)
    fail(Err::ConfigError, "rotation determinant != +1");
}

const char* composition_name(PairComposition c) {
  switch (c) {
    case PairComposition::NN: return "NN";
    case PairComposition::NO: return "NO";
    case PairComposition::OO: return "OO";
  }
  return "?";
}

PairComposition pair_composition(const ViewClass& a, const ViewClass& b) {
  const int n = (a.kind == ViewClass::Nadir) + (b.kind == ViewClass::Nadir);
  if (n == 2) return PairComposition::NN;
  if (n == 1) return PairComposition::NO;
  return PairComposition::OO;
}

Eigen::Matrix3d rotation_with_axis(const Eigen::Vector3d& axis) {
  const Eigen::Vector3d z = axis.normalized();
  const Eigen::Vector3d h =
      std::abs(z.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d x = h.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return r;
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraView& view) {
  const Eigen::Vector3d pc = view.to_camera(point);
  if (pc.z() <= 1e-12) fail(Err::NonPositiveDepth, "point at or behind camera plane");
  return {view.fx * pc.x() / pc.z() + view.cx, view.fy * pc.y() / pc.z() + view.cy};
}

Eigen::Vector3d pixel_ray_direction(const CameraView& view, const Eigen::Vector2d& px) {
  const Eigen::Vector3d dir_cam((px.x() - view.cx) / view.fx, (px.y() - view.cy) / view.fy, 1.0);
  return (view.rotation.transpose() * dir_cam).normalized();
}

Eigen::Vector3d back_project(const CameraView& view, const Eigen::Vector2d& px, double depth) {
  if (depth <= 1e-12) fail(Err::NonPositiveDepth, "back_project needs positive depth");
  const Eigen::Vector3d dir_cam((px.x() - view.cx) / view.fx, (px.y() - view.cy) / view.fy, 1.0);
  return view.center + view.rotation.transpose() * (dir_cam * depth);
}

Triangulation triangulate(const Eigen::Vector2d& px_a, const CameraView& view_a,
                          const Eigen::Vector2d& px_b, const CameraView& view_b) {
  const Eigen::Vector3d oa = view_a.center, ob = view_b.center;
  if ((oa - ob).norm() < 1e-12) fail(Err::CoincidentCenters, "triangulate with coincident centers");
  const Eigen::Vector3d da = pixel_ray_direction(view_a, px_a);
  const Eigen::Vector3d db = pixel_ray_direction(view_b, px_b);
  if (da.cross(db).norm() < 1e-12) fail(Err::ParallelRays, "rays (anti)parallel");
  // Nearest points on the two rays: solve for ta, tb minimizing
  // |oa + ta*da - ob - tb*db|^2. Unit directions, so the Gram matrix is
  // [[1, -b], [-b, 1]] with b = da.db.
  const Eigen::Vector3d w = oa - ob;
  const double b = da.dot(db);
  const double d = da.dot(w);
  const double e = db.dot(w);
  const double denom = 1.0 - b * b;
  const double ta = (b * e - d) / denom;
  const double tb = (e - b * d) / denom;
  const Eigen::Vector3d pa = oa + ta * da;
  const Eigen::Vector3d pb = ob + tb * db;
  Triangulation out;
  out.point = 0.5 * (pa + pb);
  out.ray_gap = (pa - pb).norm();
  return out;
}

double intersection_angle(const Eigen::Vector3d& point, const Eigen::Vector3d& center_a,
                          const Eigen::Vector3d& center_b) {
  const Eigen::Vector3d va = center_a - point;
  const Eigen::Vector3d vb = center_b - point;
  const double na = va.norm(), nb = vb.norm();
  if (na < 1e-12 || nb < 1e-12) fail(Err::DegeneratePoint, "point coincides with a camera center");
  double c = va.dot(vb) / (na * nb);
  c = std::min(1.0, std::max(-1.0, c));
  return rad2deg(std::acos(c));
}

ViewClass classify_view(const CameraView& view, double tilt_threshold_deg,
                        const Eigen::Vector3d& down) {
  const Eigen::Vector3d axis = view.optical_axis_world();
  double c = axis.dot(down.normalized()) / axis.norm();
  c = std::min(1.0, std::max(-1.0, c));
  ViewClass out;
  out.tilt_deg = rad2deg(std::acos(c));
  out.kind = out.tilt_deg < tilt_threshold_deg ? ViewClass::Nadir : ViewClass::Oblique;
  return out;
}

}  // namespace mvsuq
