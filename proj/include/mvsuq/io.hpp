#pragma once

#include <string>
#include <vector>

#include "mvsuq/camera.hpp"
#include "mvsuq/cloud.hpp"
#include "mvsuq/common.hpp"

namespace mvsuq {

// Raster of per-pixel disparities (px) or depths (m) with matching
// aggregated-cost energies. NaN marks invalid pixels in both planes.
struct Dmap {
  enum Kind : uint8_t { Disparity = 0, Depth = 1 };
  uint8_t kind = Disparity;
  int width = 0, height = 0;
  float d_min = 0, d_max = 0;
  std::vector<float> values;
  std::vector<float> energies;

  size_t idx(int x, int y) const { return (size_t)y * width + x; }
  bool valid_at(int x, int y) const { return !is_invalid(values[idx(x, y)]); }
};

void write_dmap(const std::string& path, const Dmap& m);
Dmap read_dmap(const std::string& path);

// Binary little-endian PLY. The writer emits x/y/z as f64 plus one property
// per non-empty optional column; the reader fills whichever known columns
// the file carries and skips unknown properties.
void write_ply(const std::string& path, const PointCloud& cloud);
PointCloud read_ply(const std::string& path);

// Camera manifest: JSON list of views with image paths (resolved relative
// to the manifest's directory) and per-view depth priors.
std::vector<CameraView> load_manifest(const std::string& path, bool load_rasters = true);
void save_manifest(const std::string& path, const std::vector<CameraView>& views,
                   const std::vector<std::string>& image_paths);

struct Csv {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const Csv& table);

// Six-significant-digit float formatting used across all reports; NaN
// renders as "null".
std::string fmt_g6(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mvsuq
