#pragma once

#include <array>
#include <string>
#include <vector>

#include "mvsuq/camera.hpp"
#include "mvsuq/cloud.hpp"
#include "mvsuq/io.hpp"

namespace mvsuq {

// Height-field test scene: a textured surface on a square footprint with a
// ring of nadir and oblique cameras above it. Every knob has a default that
// yields a scene the matcher can solve at desk scale.
struct SceneSpec {
  std::string surface = "plane";  // plane | hills
  double elevation = 0;           // surface base height, m
  double slope_x = 0, slope_y = 0;
  double hill_amp = 1.5;
  double hill_freq = 0.03;  // cycles per meter
  double extent = 60;       // footprint [0, extent]^2, m
  double altitude = 80;     // camera height above `elevation`

  int nadir_count = 5;
  int oblique_count = 6;
  double oblique_tilt_deg = 45;

  int image_width = 96;
  int image_height = 96;
  double focal_px = 80;

  int texture_res = 512;
  int texture_waves = 24;
  double texture_amp = 55;  // DN around mid-gray
  double texture_freq_lo = 0.05, texture_freq_hi = 0.45;
  double textureless_fraction = 0;  // approximate masked area share
  double sensor_noise = 0;          // DN sigma per pixel
};

void validate_spec(const SceneSpec& spec);

struct SyntheticScene {
  SceneSpec spec;
  uint64_t seed = 0;
  std::vector<CameraView> views;  // rasters left empty; render_view fills them
  Grid<float> texture;            // over the footprint, texture_res^2
  std::vector<std::array<double, 4>> masks;  // textureless rects {x0,y0,x1,y1}

  double surface_z(double x, double y) const;
  double texture_at(double x, double y) const;  // bilinear; flat inside masks
  bool masked(double x, double y) const;
};

SyntheticScene generate_scene(uint64_t seed, const SceneSpec& spec);

struct RenderedView {
  Raster8 raster;
  Dmap gt_depth;  // camera-frame depth, INVALID off the footprint
};

RenderedView render_view(const SyntheticScene& scene, const CameraView& view);

// Surface samples on a regular grid, for use as the reference cloud.
PointCloud reference_cloud(const SyntheticScene& scene, double pitch);

}  // namespace mvsuq
