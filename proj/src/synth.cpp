#include "mvsuq/synth.hpp"

#include <cmath>
#include <random>

namespace mvsuq {

void validate_spec(const SceneSpec& spec) {
  auto bad = [](const std::string& what) { fail(Err::InvalidSpec, what); };
  if (spec.surface != "plane" && spec.surface != "hills") bad("surface must be plane or hills");
  if (std::abs(spec.slope_x) > 0.3 || std::abs(spec.slope_y) > 0.3)
    bad("plane slopes are limited to 0.3");
  if (spec.hill_amp < 0 || spec.hill_freq <= 0) bad("hill shape must be positive");
  // Oblique rays at 45 degrees stay monotone against the surface only while
  // the surface gradient is well below 1.
  if (spec.surface == "hills" && spec.hill_amp * 2 * kPi * spec.hill_freq > 0.7)
    bad("hill gradient too steep for reliable ray casting");
  if (!(spec.extent > 0) || !(spec.altitude > 0)) bad("extent and altitude must be positive");
  if (spec.nadir_count < 0 || spec.oblique_count < 0 ||
      spec.nadir_count + spec.oblique_count < 1)
    bad("need at least one camera");
  if (spec.oblique_tilt_deg <= 0 || spec.oblique_tilt_deg >= 70)
    bad("oblique tilt must stay in (0, 70) degrees");
  if (spec.image_width < 16 || spec.image_height < 16) bad("images must be at least 16x16");
  if (!(spec.focal_px > 0)) bad("focal length must be positive");
  if (spec.texture_res < 16 || spec.texture_waves < 1) bad("texture resolution too low");
  if (!(spec.texture_freq_lo > 0) || !(spec.texture_freq_hi > spec.texture_freq_lo))
    bad("texture band must be a positive increasing range");
  if (spec.textureless_fraction < 0 || spec.textureless_fraction >= 0.9)
    bad("textureless fraction must lie in [0, 0.9)");
  if (spec.sensor_noise < 0) bad("sensor noise must be non-negative");
}

double SyntheticScene::surface_z(double x, double y) const {
  const double cx = x - spec.extent / 2, cy = y - spec.extent / 2;
  if (spec.surface == "plane") return spec.elevation + spec.slope_x * cx + spec.slope_y * cy;
  const double w = 2 * kPi * spec.hill_freq;
  // Phases derive from the seed so hills differ between scenes.
  const double p1 = (double)(seed % 628318) * 1e-5;
  const double p2 = (double)(seed / 628318 % 628318) * 1e-5;
  return spec.elevation + spec.hill_amp * std::sin(w * x + p1) * std::cos(w * y + p2);
}

bool SyntheticScene::masked(double x, double y) const {
  for (const auto& m : masks)
    if (x >= m[0] && x < m[2] && y >= m[1] && y < m[3]) return true;
  return false;
}

double SyntheticScene::texture_at(double x, double y) const {
  if (masked(x, y)) return 128.0;
  const double gx = std::clamp(x / spec.extent, 0.0, 1.0) * (texture.width - 1);
  const double gy = std::clamp(y / spec.extent, 0.0, 1.0) * (texture.height - 1);
  const int x0 = std::min((int)gx, texture.width - 2);
  const int y0 = std::min((int)gy, texture.height - 2);
  const double fx = gx - x0, fy = gy - y0;
  const double top = texture.at(x0, y0) * (1 - fx) + texture.at(x0 + 1, y0) * fx;
  const double bot = texture.at(x0, y0 + 1) * (1 - fx) + texture.at(x0 + 1, y0 + 1) * fx;
  return top * (1 - fy) + bot * fy;
}

namespace {

CameraView place_camera(int id, const SceneSpec& spec, const Eigen::Vector3d& center,
                        const Eigen::Vector3d& axis) {
  CameraView v;
  v.image_id = id;
  v.width = spec.image_width;
  v.height = spec.image_height;
  v.fx = v.fy = spec.focal_px;
  v.cx = spec.image_width / 2.0;
  v.cy = spec.image_height / 2.0;
  v.rotation = rotation_with_axis(axis);
  v.center = center;
  return v;
}

void set_depth_prior(CameraView& v, const SyntheticScene& scene) {
  const double e = scene.spec.extent;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) {
      const double x = e * i / 8, y = e * j / 8;
      const Eigen::Vector3d p(x, y, scene.surface_z(x, y));
      const double d = (v.rotation * (p - v.center)).z();
      if (d <= 0) continue;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  // Tight bounds keep pair disparity ranges searchable at small image sizes;
  // the slack absorbs surface wiggle between the probe samples.
  v.z_near = std::max(1.0, 0.95 * lo - 1.0);
  v.z_far = 1.05 * hi + 1.0;
}

}  // namespace

SyntheticScene generate_scene(uint64_t seed, const SceneSpec& spec) {
  validate_spec(spec);
  SyntheticScene scene;
  scene.spec = spec;
  scene.seed = seed;

  std::mt19937_64 rng(seed);

  // Band-limited texture: a sum of plane waves on the footprint grid.
  std::uniform_real_distribution<double> ufreq(spec.texture_freq_lo, spec.texture_freq_hi);
  std::uniform_real_distribution<double> uang(0, 2 * kPi);
  std::vector<std::array<double, 3>> waves(spec.texture_waves);
  for (auto& w : waves) {
    const double f = ufreq(rng), a = uang(rng);
    w = {2 * kPi * f * std::cos(a), 2 * kPi * f * std::sin(a), uang(rng)};
  }
  const double amp = spec.texture_amp * std::sqrt(2.0 / spec.texture_waves);
  scene.texture = Grid<float>(spec.texture_res, spec.texture_res);
  for (int gy = 0; gy < spec.texture_res; ++gy)
    for (int gx = 0; gx < spec.texture_res; ++gx) {
      const double x = spec.extent * gx / (spec.texture_res - 1);
      const double y = spec.extent * gy / (spec.texture_res - 1);
      double v = 128;
      for (const auto& w : waves) v += amp * std::cos(w[0] * x + w[1] * y + w[2]);
      scene.texture.at(gx, gy) = (float)v;
    }

  if (spec.textureless_fraction > 0) {
    std::uniform_real_distribution<double> upos(0, spec.extent);
    const double side = spec.extent / 6;
    double covered = 0;
    const double target = spec.textureless_fraction * spec.extent * spec.extent;
    for (int i = 0; i < 40 && covered < target; ++i) {
      const double x0 = upos(rng), y0 = upos(rng);
      const double x1 = std::min(spec.extent, x0 + side), y1 = std::min(spec.extent, y0 + side);
      scene.masks.push_back({x0, y0, x1, y1});
      covered += (x1 - x0) * (y1 - y0);
    }
  }

  // Nadir views on a grid over the footprint, obliques on a ring aimed at
  // the footprint center.
  const double e = spec.extent;
  int id = 0;
  const int g = (int)std::ceil(std::sqrt((double)std::max(1, spec.nadir_count)));
  for (int i = 0; id < spec.nadir_count; ++i)
    for (int j = 0; j < g && id < spec.nadir_count; ++j) {
      const Eigen::Vector3d c(e * (i % g + 0.5) / g, e * (j + 0.5) / g,
                              spec.elevation + spec.altitude);
      scene.views.push_back(place_camera(id++, spec, c, {0, 0, -1}));
    }
  const double tilt = deg2rad(spec.oblique_tilt_deg);
  const double ring = spec.altitude * std::tan(tilt);
  const Eigen::Vector3d aim(e / 2, e / 2, spec.elevation);
  for (int k = 0; k < spec.oblique_count; ++k) {
    const double th = 2 * kPi * k / spec.oblique_count;
    const Eigen::Vector3d c = aim + Eigen::Vector3d(ring * std::cos(th), ring * std::sin(th),
                                                    spec.altitude);
    scene.views.push_back(place_camera(id++, spec, c, (aim - c).normalized()));
  }

  for (auto& v : scene.views) {
    set_depth_prior(v, scene);
    validate_view(v);
    // Footprint visibility gate: each camera must see at least half of it.
    int seen = 0, total = 0;
    for (int i = 0; i <= 6; ++i)
      for (int j = 0; j <= 6; ++j) {
        const double x = e * i / 6, y = e * j / 6;
        const Eigen::Vector3d p(x, y, scene.surface_z(x, y));
        ++total;
        try {
          const Eigen::Vector2d px = project(p, v);
          seen += px.x() >= 0 && px.x() < v.width && px.y() >= 0 && px.y() < v.height;
        } catch (const Error&) {
        }
      }
    if (seen * 2 < total)
      fail(Err::InvalidSpec, "camera " + std::to_string(v.image_id) +
                                 " sees under half the footprint; widen the lens or fly higher");
  }
  return scene;
}

RenderedView render_view(const SyntheticScene& scene, const CameraView& view) {
  const SceneSpec& spec = scene.spec;
  RenderedView out;
  out.raster = Raster8(view.width, view.height, 0);
  out.gt_depth.kind = Dmap::Depth;
  out.gt_depth.width = view.width;
  out.gt_depth.height = view.height;
  out.gt_depth.values.assign((size_t)view.width * view.height, kInvalid);

  // Surface height bounds give the bisection bracket along each ray.
  double z_lo = spec.elevation, z_hi = spec.elevation;
  if (spec.surface == "plane") {
    const double swing = (std::abs(spec.slope_x) + std::abs(spec.slope_y)) * spec.extent / 2;
    z_lo -= swing;
    z_hi += swing;
  } else {
    z_lo -= spec.hill_amp;
    z_hi += spec.hill_amp;
  }

  std::mt19937_64 noise_rng(scene.seed ^ (uint64_t)view.image_id * 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> noise(0.0, spec.sensor_noise > 0 ? spec.sensor_noise : 1.0);

  size_t hits = 0;
  for (int y = 0; y < view.height; ++y)
    for (int x = 0; x < view.width; ++x) {
      const double dn = spec.sensor_noise > 0 ? noise(noise_rng) : 0.0;
      // Noise lands on every pixel, background included: hallucinated matches
      // over uniform dark regions would otherwise agree across views and slip
      // through the depth-consistency gate.
      auto write = [&](double signal) {
        out.raster.at(x, y) = (uint8_t)std::clamp((long)std::lround(signal + dn), 0l, 255l);
      };
      write(0.0);
      const Eigen::Vector3d d_cam((x - view.cx) / view.fx, (y - view.cy) / view.fy, 1.0);
      const Eigen::Vector3d dir = view.rotation.transpose() * d_cam;
      if (dir.z() >= -1e-9) continue;

      double t0 = (z_hi - view.center.z()) / dir.z();
      double t1 = (z_lo - view.center.z()) / dir.z();
      if (t0 < 0) t0 = 0;
      auto g = [&](double t) {
        const Eigen::Vector3d p = view.center + t * dir;
        return p.z() - scene.surface_z(p.x(), p.y());
      };
      if (g(t0) < 0 || g(t1) > 0) continue;
      for (int it = 0; it < 64; ++it) {
        const double tm = 0.5 * (t0 + t1);
        (g(tm) >= 0 ? t0 : t1) = tm;
      }
      const double t = 0.5 * (t0 + t1);
      const Eigen::Vector3d p = view.center + t * dir;
      if (p.x() < 0 || p.x() > spec.extent || p.y() < 0 || p.y() > spec.extent) continue;

      // Camera-frame depth equals t because d_cam has unit z.
      out.gt_depth.values[out.gt_depth.idx(x, y)] = (float)t;
      write(scene.texture_at(p.x(), p.y()));
      ++hits;
    }
  if (hits == 0) fail(Err::NoIntersection, "view does not see the footprint");
  return out;
}

PointCloud reference_cloud(const SyntheticScene& scene, double pitch) {
  if (!(pitch > 0)) fail(Err::InvalidSpec, "reference pitch must be positive");
  PointCloud c;
  const int n = (int)std::floor(scene.spec.extent / pitch);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      const double x = i * pitch, y = j * pitch;
      c.xyz.push_back({x, y, scene.surface_z(x, y)});
    }
  return c;
}

}  // namespace mvsuq
