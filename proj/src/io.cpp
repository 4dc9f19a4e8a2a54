#include "mvsuq/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "mvsuq/image_io.hpp"

namespace mvsuq {

using nlohmann::json;

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_or_fail(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(Err::IoError, "cannot open " + path);
  return f;
}

template <typename T>
void put(FILE* f, const T& v) {
  if (std::fwrite(&v, sizeof(T), 1, f) != 1) fail(Err::IoError, "short write");
}

template <typename T>
T get(FILE* f, const std::string& path) {
  T v;
  if (std::fread(&v, sizeof(T), 1, f) != 1) fail(Err::BadFormat, "truncated file " + path);
  return v;
}

constexpr char kDmapMagic[5] = {'D', 'M', 'A', 'P', '1'};

}  // namespace

void write_dmap(const std::string& path, const Dmap& m) {
  if ((size_t)m.width * m.height != m.values.size() || m.values.size() != m.energies.size())
    fail(Err::DimensionMismatch, "dmap planes do not match header dims");
  FilePtr f = open_or_fail(path, "wb");
  std::fwrite(kDmapMagic, 1, 5, f.get());
  put(f.get(), (uint32_t)m.width);
  put(f.get(), (uint32_t)m.height);
  put(f.get(), m.kind);
  put(f.get(), m.d_min);
  put(f.get(), m.d_max);
  if (std::fwrite(m.values.data(), 4, m.values.size(), f.get()) != m.values.size() ||
      std::fwrite(m.energies.data(), 4, m.energies.size(), f.get()) != m.energies.size())
    fail(Err::IoError, "short write to " + path);
}

Dmap read_dmap(const std::string& path) {
  FilePtr f = open_or_fail(path, "rb");
  char magic[5];
  if (std::fread(magic, 1, 5, f.get()) != 5 || std::memcmp(magic, kDmapMagic, 5) != 0)
    fail(Err::BadFormat, "not a DMAP1 file: " + path);
  Dmap m;
  m.width = (int)get<uint32_t>(f.get(), path);
  m.height = (int)get<uint32_t>(f.get(), path);
  m.kind = get<uint8_t>(f.get(), path);
  if (m.kind > Dmap::Depth) fail(Err::BadFormat, "unknown dmap kind in " + path);
  m.d_min = get<float>(f.get(), path);
  m.d_max = get<float>(f.get(), path);
  if (m.width < 0 || m.height < 0 || (int64_t)m.width * m.height > (int64_t)1 << 32)
    fail(Err::BadFormat, "implausible dmap dims in " + path);
  const size_t n = (size_t)m.width * m.height;
  m.values.resize(n);
  m.energies.resize(n);
  if (std::fread(m.values.data(), 4, n, f.get()) != n ||
      std::fread(m.energies.data(), 4, n, f.get()) != n)
    fail(Err::BadFormat, "truncated dmap " + path);
  return m;
}

namespace {

enum class PlyType { F32, F64, U8, U16, U32, I32 };

size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::F64: return 8;
    case PlyType::F32:
    case PlyType::U32:
    case PlyType::I32: return 4;
    case PlyType::U16: return 2;
    case PlyType::U8: return 1;
  }
  return 0;
}

PlyType parse_ply_type(const std::string& s, const std::string& path) {
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "int" || s == "int32") return PlyType::I32;
  fail(Err::BadFormat, "unsupported PLY property type '" + s + "' in " + path);
}

const char* ply_type_name(PlyType t) {
  switch (t) {
    case PlyType::F32: return "float";
    case PlyType::F64: return "double";
    case PlyType::U8: return "uchar";
    case PlyType::U16: return "ushort";
    case PlyType::U32: return "uint";
    case PlyType::I32: return "int";
  }
  return "?";
}

double read_ply_value(const uint8_t* p, PlyType t) {
  switch (t) {
    case PlyType::F32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::F64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
    case PlyType::U8: return *p;
    case PlyType::U16: {
      uint16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PlyType::U32: {
      uint32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::I32: {
      int32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
  }
  return 0;
}

}  // namespace

void write_ply(const std::string& path, const PointCloud& cloud) {
  cloud.check();
  struct Col {
    const char* name;
    PlyType type;
    std::function<double(size_t)> value;
    bool present;
  };
  const std::vector<Col> cols = {
      {"x", PlyType::F64, [&](size_t i) { return cloud.xyz[i].x(); }, true},
      {"y", PlyType::F64, [&](size_t i) { return cloud.xyz[i].y(); }, true},
      {"z", PlyType::F64, [&](size_t i) { return cloud.xyz[i].z(); }, true},
      {"source_image", PlyType::U32, [&](size_t i) { return cloud.source_image[i]; },
       !cloud.source_image.empty()},
      {"num_rays", PlyType::U8, [&](size_t i) { return cloud.num_rays[i]; },
       !cloud.num_rays.empty()},
      {"median_angle_deg", PlyType::F32, [&](size_t i) { return cloud.median_angle_deg[i]; },
       !cloud.median_angle_deg.empty()},
      {"dim_energy", PlyType::F32, [&](size_t i) { return cloud.dim_energy[i]; },
       !cloud.dim_energy.empty()},
      {"error_m", PlyType::F32, [&](size_t i) { return cloud.error_m[i]; },
       !cloud.error_m.empty()},
      {"predicted_error_mean_px", PlyType::F32,
       [&](size_t i) { return cloud.predicted_error_mean_px[i]; },
       !cloud.predicted_error_mean_px.empty()},
      {"predicted_error_std_px", PlyType::F32,
       [&](size_t i) { return cloud.predicted_error_std_px[i]; },
       !cloud.predicted_error_std_px.empty()},
      {"source_px_x", PlyType::F32, [&](size_t i) { return cloud.source_px_x[i]; },
       !cloud.source_px_x.empty()},
      {"source_px_y", PlyType::F32, [&](size_t i) { return cloud.source_px_y[i]; },
       !cloud.source_px_y.empty()},
      {"pair_mask", PlyType::U32, [&](size_t i) { return cloud.pair_mask[i]; },
       !cloud.pair_mask.empty()},
  };

  FilePtr f = open_or_fail(path, "wb");
  std::string header = "ply\nformat binary_little_endian 1.0\n";
  header += "comment frame " + cloud.frame + "\n";
  header += "element vertex " + std::to_string(cloud.size()) + "\n";
  for (const Col& c : cols)
    if (c.present) header += std::string("property ") + ply_type_name(c.type) + " " + c.name + "\n";
  header += "end_header\n";
  if (std::fwrite(header.data(), 1, header.size(), f.get()) != header.size())
    fail(Err::IoError, "short write to " + path);

  std::vector<uint8_t> row;
  for (size_t i = 0; i < cloud.size(); ++i) {
    row.clear();
    for (const Col& c : cols) {
      if (!c.present) continue;
      const double v = c.value(i);
      uint8_t buf[8];
      switch (c.type) {
        case PlyType::F64: {
          std::memcpy(buf, &v, 8);
          break;
        }
        case PlyType::F32: {
          const float x = (float)v;
          std::memcpy(buf, &x, 4);
          break;
        }
        case PlyType::U32: {
          const uint32_t x = (uint32_t)v;
          std::memcpy(buf, &x, 4);
          break;
        }
        case PlyType::I32: {
          const int32_t x = (int32_t)v;
          std::memcpy(buf, &x, 4);
          break;
        }
        case PlyType::U16: {
          const uint16_t x = (uint16_t)v;
          std::memcpy(buf, &x, 2);
          break;
        }
        case PlyType::U8: {
          buf[0] = (uint8_t)v;
          break;
        }
      }
      row.insert(row.end(), buf, buf + ply_type_size(c.type));
    }
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      fail(Err::IoError, "short write to " + path);
  }
}

PointCloud read_ply(const std::string& path) {
  FilePtr f = open_or_fail(path, "rb");
  auto read_line = [&]() {
    std::string line;
    int c;
    while ((c = std::fgetc(f.get())) != EOF && c != '\n') line.push_back((char)c);
    if (c == EOF && line.empty()) fail(Err::BadFormat, "truncated PLY header in " + path);
    return line;
  };
  if (read_line() != "ply") fail(Err::BadFormat, "not a PLY file: " + path);

  PointCloud cloud;
  size_t count = 0;
  bool got_format = false, in_vertex = false;
  std::vector<std::pair<std::string, PlyType>> props;
  for (;;) {
    const std::string line = read_line();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "end_header") break;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian")
        fail(Err::BadFormat, "unsupported PLY format '" + fmt + "' in " + path);
      got_format = true;
    } else if (tok == "comment") {
      std::string key;
      ss >> key;
      if (key == "frame") ss >> cloud.frame;
    } else if (tok == "element") {
      std::string name;
      size_t n = 0;
      ss >> name >> n;
      if (name == "vertex") {
        count = n;
        in_vertex = true;
      } else {
        if (n > 0) fail(Err::BadFormat, "unsupported PLY element '" + name + "' in " + path);
        in_vertex = false;
      }
    } else if (tok == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ss >> type;
      if (type == "list") fail(Err::BadFormat, "list properties unsupported in " + path);
      ss >> name;
      props.emplace_back(name, parse_ply_type(type, path));
    }
  }
  if (!got_format) fail(Err::BadFormat, "PLY missing format line: " + path);

  size_t row_size = 0;
  for (const auto& [name, type] : props) row_size += ply_type_size(type);
  std::vector<uint8_t> row(row_size);

  bool has_x = false, has_y = false, has_z = false;
  for (const auto& [name, type] : props) {
    has_x |= name == "x";
    has_y |= name == "y";
    has_z |= name == "z";
  }
  if (count > 0 && (!has_x || !has_y || !has_z))
    fail(Err::BadFormat, "PLY lacks xyz properties: " + path);

  cloud.xyz.resize(count);
  auto reserve_if = [&](const char* n, auto& col) {
    for (const auto& [name, type] : props)
      if (name == n) {
        col.resize(count);
        return;
      }
  };
  reserve_if("source_image", cloud.source_image);
  reserve_if("num_rays", cloud.num_rays);
  reserve_if("median_angle_deg", cloud.median_angle_deg);
  reserve_if("dim_energy", cloud.dim_energy);
  reserve_if("error_m", cloud.error_m);
  reserve_if("predicted_error_mean_px", cloud.predicted_error_mean_px);
  reserve_if("predicted_error_std_px", cloud.predicted_error_std_px);
  reserve_if("source_px_x", cloud.source_px_x);
  reserve_if("source_px_y", cloud.source_px_y);
  reserve_if("pair_mask", cloud.pair_mask);

  for (size_t i = 0; i < count; ++i) {
    if (std::fread(row.data(), 1, row_size, f.get()) != row_size)
      fail(Err::BadFormat, "truncated PLY body in " + path);
    size_t off = 0;
    for (const auto& [name, type] : props) {
      const double v = read_ply_value(row.data() + off, type);
      off += ply_type_size(type);
      if (name == "x")
        cloud.xyz[i].x() = v;
      else if (name == "y")
        cloud.xyz[i].y() = v;
      else if (name == "z")
        cloud.xyz[i].z() = v;
      else if (name == "source_image")
        cloud.source_image[i] = (uint32_t)v;
      else if (name == "num_rays")
        cloud.num_rays[i] = (uint8_t)v;
      else if (name == "median_angle_deg")
        cloud.median_angle_deg[i] = (float)v;
      else if (name == "dim_energy")
        cloud.dim_energy[i] = (float)v;
      else if (name == "error_m")
        cloud.error_m[i] = (float)v;
      else if (name == "predicted_error_mean_px")
        cloud.predicted_error_mean_px[i] = (float)v;
      else if (name == "predicted_error_std_px")
        cloud.predicted_error_std_px[i] = (float)v;
      else if (name == "source_px_x")
        cloud.source_px_x[i] = (float)v;
      else if (name == "source_px_y")
        cloud.source_px_y[i] = (float)v;
      else if (name == "pair_mask")
        cloud.pair_mask[i] = (uint32_t)v;
    }
  }
  return cloud;
}

std::vector<CameraView> load_manifest(const std::string& path, bool load_rasters) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(Err::BadFormat, "manifest parse error in " + path + ": " + e.what());
  }
  if (!doc.contains("views") || !doc["views"].is_array())
    fail(Err::ConfigError, "manifest lacks a views array: " + path);
  const auto dir = std::filesystem::path(path).parent_path();

  std::vector<CameraView> views;
  for (const auto& jv : doc["views"]) {
    CameraView v;
    try {
      v.image_id = jv.at("image_id").get<int>();
      v.width = jv.at("width").get<int>();
      v.height = jv.at("height").get<int>();
      v.fx = jv.at("fx").get<double>();
      v.fy = jv.at("fy").get<double>();
      v.cx = jv.at("cx").get<double>();
      v.cy = jv.at("cy").get<double>();
      const auto rot = jv.at("rotation").get<std::vector<double>>();
      const auto ctr = jv.at("center").get<std::vector<double>>();
      const auto prior = jv.at("depth_prior").get<std::vector<double>>();
      if (rot.size() != 9 || ctr.size() != 3 || prior.size() != 2)
        fail(Err::ConfigError, "bad rotation/center/depth_prior arity in " + path);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v.rotation(r, c) = rot[r * 3 + c];
      v.center = {ctr[0], ctr[1], ctr[2]};
      v.z_near = prior[0];
      v.z_far = prior[1];
      if (load_rasters) {
        const std::string img = jv.at("image_path").get<std::string>();
        v.raster = read_image_gray((dir / img).string());
        if (v.raster.width != v.width || v.raster.height != v.height)
          fail(Err::BadFormat, "raster dims disagree with manifest for image " +
                                   std::to_string(v.image_id));
      }
    } catch (const json::exception& e) {
      fail(Err::ConfigError, "manifest view entry malformed in " + path + ": " + e.what());
    }
    validate_view(v);
    if (!(v.z_near > 0) || !(v.z_far >= v.z_near))
      fail(Err::ConfigError, "bad depth prior for image " + std::to_string(v.image_id));
    views.push_back(std::move(v));
  }
  return views;
}

void save_manifest(const std::string& path, const std::vector<CameraView>& views,
                   const std::vector<std::string>& image_paths) {
  if (views.size() != image_paths.size())
    fail(Err::DimensionMismatch, "one image path per view required");
  json jviews = json::array();
  for (size_t i = 0; i < views.size(); ++i) {
    const CameraView& v = views[i];
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[r * 3 + c] = v.rotation(r, c);
    jviews.push_back({{"image_id", v.image_id},
                      {"image_path", image_paths[i]},
                      {"width", v.width},
                      {"height", v.height},
                      {"fx", v.fx},
                      {"fy", v.fy},
                      {"cx", v.cx},
                      {"cy", v.cy},
                      {"rotation", rot},
                      {"center", {v.center.x(), v.center.y(), v.center.z()}},
                      {"depth_prior", {v.z_near, v.z_far}}});
  }
  write_text_file(path, json{{"views", jviews}}.dump(2) + "\n");
}

void write_csv(const std::string& path, const Csv& table) {
  std::string out;
  for (const auto& c : table.comments) out += "# " + c + "\n";
  for (size_t i = 0; i < table.columns.size(); ++i)
    out += table.columns[i] + (i + 1 < table.columns.size() ? "," : "");
  out += "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      fail(Err::DimensionMismatch, "csv row width mismatch for " + path);
    for (size_t i = 0; i < row.size(); ++i)
      out += row[i] + (i + 1 < row.size() ? "," : "");
    out += "\n";
  }
  write_text_file(path, out);
}

std::string fmt_g6(double v) {
  if (std::isnan(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::IoError, "cannot write " + path);
  f.write(content.data(), (std::streamsize)content.size());
  if (!f) fail(Err::IoError, "short write to " + path);
}

}  // namespace mvsuq
