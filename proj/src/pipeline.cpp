#include "mvsuq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>

#include "mvsuq/io.hpp"

namespace mvsuq {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string strip_code(const Error& e) {
  std::string w = e.what();
  const std::string prefix = std::string(err_name(e.code())) + ": ";
  if (w.rfind(prefix, 0) == 0) w = w.substr(prefix.size());
  return w;
}

[[noreturn]] void stage_rethrow(const std::string& where, const Error& e) {
  throw Error(e.code(), where + ": " + strip_code(e));
}

const CameraView& view_by_id(const std::vector<CameraView>& views, int id) {
  for (const auto& v : views)
    if (v.image_id == id) return v;
  fail(Err::ConfigError, "image id " + std::to_string(id) + " not in the view list");
}

Dmap disparity_as_dmap(const DisparityMap& d) {
  Dmap m;
  m.kind = Dmap::Disparity;
  m.width = d.width;
  m.height = d.height;
  m.d_min = (float)d.d_min;
  m.d_max = (float)d.d_max;
  m.values = d.disp.data;
  m.energies = d.energy.data;
  return m;
}

DisparityMap dmap_as_disparity(const Dmap& m) {
  DisparityMap d;
  d.width = m.width;
  d.height = m.height;
  d.d_min = (int)std::lround(m.d_min);
  d.d_max = (int)std::lround(m.d_max);
  d.disp.width = d.energy.width = m.width;
  d.disp.height = d.energy.height = m.height;
  d.disp.data = m.values;
  d.energy.data = m.energies;
  return d;
}

std::string join(const std::string& dir, const std::string& rel) {
  return (fs::path(dir) / rel).string();
}

json rotation_to_json(const Eigen::Matrix3d& r) {
  std::vector<double> v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[i * 3 + j] = r(i, j);
  return json(v);
}

Eigen::Matrix3d rotation_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 9) fail(Err::BadFormat, "rotation needs 9 entries");
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i)
    for (int j2 = 0; j2 < 3; ++j2) r(i, j2) = v[i * 3 + j2];
  return r;
}

PairComposition composition_from_name(const std::string& s) {
  if (s == "NN") return PairComposition::NN;
  if (s == "NO") return PairComposition::NO;
  if (s == "OO") return PairComposition::OO;
  fail(Err::BadFormat, "unknown pair composition " + s);
}

}  // namespace

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  const auto& sa = a.sgm;
  const auto& sb = b.sgm;
  return a.n_neighbors == b.n_neighbors && a.k_consistency == b.k_consistency &&
         a.eps_rel == b.eps_rel && a.d_range_margin == b.d_range_margin &&
         a.tilt_threshold_deg == b.tilt_threshold_deg && a.uq_bin_size == b.uq_bin_size &&
         a.uq_min_samples == b.uq_min_samples && a.uq_min_rays == b.uq_min_rays &&
         a.uq_self_gate_px == b.uq_self_gate_px && a.split_threshold == b.split_threshold &&
         a.angle_bin_deg == b.angle_bin_deg && a.icp == b.icp &&
         a.icp_max_iters == b.icp_max_iters && a.icp_conv_tol == b.icp_conv_tol &&
         a.neighbor_seed == b.neighbor_seed && sa.lambda_p1 == sb.lambda_p1 &&
         sa.lambda_p2 == sb.lambda_p2 && sa.path_count == sb.path_count &&
         sa.pyramid_levels == sb.pyramid_levels && sa.search_band == sb.search_band &&
         sa.adaptive_p2 == sb.adaptive_p2 && sa.census_w == sb.census_w &&
         sa.census_h == sb.census_h;
}

std::string serialize_config(const PipelineConfig& c) {
  json sgm{{"adaptive_p2", c.sgm.adaptive_p2}, {"census_h", c.sgm.census_h},
           {"census_w", c.sgm.census_w},       {"lambda_p1", c.sgm.lambda_p1},
           {"lambda_p2", c.sgm.lambda_p2},     {"path_count", c.sgm.path_count},
           {"pyramid_levels", c.sgm.pyramid_levels}, {"search_band", c.sgm.search_band}};
  json doc{{"angle_bin_deg", c.angle_bin_deg},
           {"d_range_margin", c.d_range_margin},
           {"eps_rel", c.eps_rel},
           {"icp", c.icp},
           {"icp_conv_tol", c.icp_conv_tol},
           {"icp_max_iters", c.icp_max_iters},
           {"k_consistency", c.k_consistency},
           {"n_neighbors", c.n_neighbors},
           {"neighbor_seed", c.neighbor_seed},
           {"sgm", sgm},
           {"split_threshold", c.split_threshold},
           {"tilt_threshold_deg", c.tilt_threshold_deg},
           {"uq_bin_size", c.uq_bin_size},
           {"uq_min_rays", c.uq_min_rays},
           {"uq_min_samples", c.uq_min_samples},
           {"uq_self_gate_px", c.uq_self_gate_px}};
  return doc.dump(2);
}

PipelineConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(Err::ConfigError, std::string("config parse error: ") + e.what());
  }
  if (!doc.is_object()) fail(Err::ConfigError, "config must be a JSON object");

  PipelineConfig c;
  try {
    for (const auto& [key, val] : doc.items()) {
      if (key == "angle_bin_deg") c.angle_bin_deg = val.get<double>();
      else if (key == "d_range_margin") c.d_range_margin = val.get<int>();
      else if (key == "eps_rel") c.eps_rel = val.get<double>();
      else if (key == "icp") c.icp = val.get<bool>();
      else if (key == "icp_conv_tol") c.icp_conv_tol = val.get<double>();
      else if (key == "icp_max_iters") c.icp_max_iters = val.get<int>();
      else if (key == "k_consistency") c.k_consistency = val.get<int>();
      else if (key == "n_neighbors") c.n_neighbors = val.get<int>();
      else if (key == "neighbor_seed") c.neighbor_seed = val.get<uint64_t>();
      else if (key == "split_threshold") c.split_threshold = val.get<double>();
      else if (key == "tilt_threshold_deg") c.tilt_threshold_deg = val.get<double>();
      else if (key == "uq_bin_size") c.uq_bin_size = val.get<double>();
      else if (key == "uq_min_rays") c.uq_min_rays = val.get<int>();
      else if (key == "uq_min_samples") c.uq_min_samples = val.get<int>();
      else if (key == "uq_self_gate_px") c.uq_self_gate_px = val.get<double>();
      else if (key == "sgm") {
        if (!val.is_object()) fail(Err::ConfigError, "sgm must be an object");
        for (const auto& [sk, sv] : val.items()) {
          if (sk == "adaptive_p2") c.sgm.adaptive_p2 = sv.get<bool>();
          else if (sk == "census_h") c.sgm.census_h = sv.get<int>();
          else if (sk == "census_w") c.sgm.census_w = sv.get<int>();
          else if (sk == "lambda_p1") c.sgm.lambda_p1 = sv.get<int>();
          else if (sk == "lambda_p2") c.sgm.lambda_p2 = sv.get<int>();
          else if (sk == "path_count") c.sgm.path_count = sv.get<int>();
          else if (sk == "pyramid_levels") c.sgm.pyramid_levels = sv.get<int>();
          else if (sk == "search_band") c.sgm.search_band = sv.get<int>();
          else fail(Err::ConfigError, "unknown sgm key: " + sk);
        }
      } else {
        fail(Err::ConfigError, "unknown config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    fail(Err::ConfigError, std::string("config value error: ") + e.what());
  }
  return c;
}

std::vector<BasePairs> stage_match(const PipelineConfig& config,
                                   const std::vector<CameraView>& views, int threads) {
  SgmParams params = config.sgm;
  params.threads = std::max(1, threads);
  validate_params(params);

  std::vector<BasePairs> out;
  out.reserve(views.size());
  for (const auto& base : views) {
    try {
      BasePairs bp;
      bp.base_id = base.image_id;
      bp.neighbors =
          select_neighbors(views, base.image_id, config.n_neighbors, config.k_consistency,
                           config.neighbor_seed);
      bp.maps = pair_depth_maps(base, views, bp.neighbors, params, config.d_range_margin,
                                config.tilt_threshold_deg, &bp.rejected);
      out.push_back(std::move(bp));
    } catch (const Error& e) {
      stage_rethrow("match: image " + std::to_string(base.image_id), e);
    }
  }
  return out;
}

FuseOutput stage_fuse(const PipelineConfig& config, const std::vector<CameraView>& views,
                      const std::vector<BasePairs>& matches, int threads) {
  FuseOutput out;
  out.per_base.reserve(matches.size());
  for (const auto& bp : matches) {
    try {
      out.per_base.push_back(fuse_image(view_by_id(views, bp.base_id), bp.maps,
                                        config.k_consistency, config.eps_rel,
                                        std::max(1, threads)));
    } catch (const Error& e) {
      stage_rethrow("fuse: image " + std::to_string(bp.base_id), e);
    }
  }

  size_t off = 0;
  std::vector<PointCloud> clouds;
  for (const auto& fr : out.per_base) {
    out.offsets.push_back(off);
    off += fr.cloud.size();
    if (!fr.cloud.empty()) clouds.push_back(fr.cloud);
  }
  try {
    out.merged = clouds.empty() ? PointCloud{} : merge_clouds(clouds);
  } catch (const Error& e) {
    stage_rethrow("fuse: merge", e);
  }
  return out;
}

std::vector<StereoPairCloud> pair_clouds(const std::vector<CameraView>& views,
                                         const std::vector<BasePairs>& matches,
                                         double tilt_threshold_deg) {
  (void)tilt_threshold_deg;  // compositions were fixed at match time
  std::vector<StereoPairCloud> out;
  for (const auto& bp : matches) {
    const CameraView& base = view_by_id(views, bp.base_id);
    for (const auto& m : bp.maps) {
      StereoPairCloud pc;
      pc.left_id = bp.base_id;
      pc.right_id = m.neighbor_id;
      pc.composition = m.composition;
      for (int y = 0; y < m.depth.height; ++y)
        for (int x = 0; x < m.depth.width; ++x) {
          const size_t i = m.depth.idx(x, y);
          if (is_invalid(m.depth.values[i])) continue;
          const Eigen::Vector3d p =
              back_project(base, {(double)x, (double)y}, m.depth.values[i]);
          pc.cloud.xyz.push_back(p);
          pc.cloud.median_angle_deg.push_back(
              (float)rad2deg(intersection_angle(p, base.center, m.neighbor_center)));
          pc.cloud.dim_energy.push_back(m.depth.energies[i]);
        }
      out.push_back(std::move(pc));
    }
  }
  return out;
}

EvalOutput stage_evaluate(const PipelineConfig& config, FuseOutput& fuse,
                          const std::vector<StereoPairCloud>& pairs,
                          const PointCloud& reference, int threads) {
  EvalOutput ev;
  PointCloud& merged = fuse.merged;
  if (merged.empty()) fail(Err::EmptyCloud, "no fused points to evaluate");

  // Alignment is an evaluation detail: errors come from aligned copies while
  // the stored clouds stay in the camera frame, which the uq stages need for
  // reprojection.
  const PointCloud* eval_cloud = &merged;
  const std::vector<StereoPairCloud>* eval_pairs = &pairs;
  PointCloud aligned;
  std::vector<StereoPairCloud> aligned_pairs;
  if (config.icp) {
    ev.icp = icp_register(merged, reference, config.icp_max_iters, config.icp_conv_tol,
                          std::max(1, threads));
    ev.icp_applied = true;
    aligned = merged;
    apply_transform(aligned, ev.icp.transform);
    eval_cloud = &aligned;
    aligned_pairs = pairs;
    for (auto& pc : aligned_pairs)
      if (!pc.cloud.empty()) apply_transform(pc.cloud, ev.icp.transform);
    eval_pairs = &aligned_pairs;
  }

  const std::vector<double> errs =
      per_point_error(*eval_cloud, reference, std::max(1, threads));
  merged.error_m.assign(errs.begin(), errs.end());
  ev.overall = mean_std(errs);

  std::vector<double> rays(merged.size()), angles(merged.size()), energy(merged.size());
  for (size_t i = 0; i < merged.size(); ++i) {
    rays[i] = merged.num_rays[i];
    angles[i] = merged.median_angle_deg[i];
    energy[i] = merged.dim_energy[i];
  }

  const int rays_hi = std::max(config.n_neighbors + 1, 4);
  ev.by_rays = bin_by_metric(rays, errs, "num_rays", uniform_edges(3, rays_hi, 1), true);
  ev.by_angle = bin_by_metric(angles, errs, "median_angle_deg",
                              uniform_edges(0, 60, config.angle_bin_deg), true);

  double e_max = 0;
  for (double e : energy)
    if (std::isfinite(e) && e > e_max) e_max = e;
  const double bin = config.uq_bin_size;
  const int nbins = (int)std::floor(e_max / bin) + 1;
  ev.by_energy =
      bin_by_metric(energy, errs, "dim_energy", uniform_edges(0, nbins * bin, bin), false);

  std::vector<double> cx, cy;
  for (const auto& b : ev.by_energy.bins)
    if (b.count > 0 && std::isfinite(b.hi)) {
      cx.push_back((b.lo + b.hi) / 2);
      cy.push_back(b.mae);
    }
  if (cx.size() >= 3) {
    try {
      ev.energy_fit = ols_fit(cx, cy);
    } catch (const Error&) {
    }
  }

  const ErrorSplit split = split_by_error(merged, config.split_threshold);
  ev.low_count = split.low.size();
  ev.high_count = split.high.size();
  ev.low_angles = split.low_angles;
  ev.high_angles = split.high_angles;

  ev.compositions =
      pair_composition_stats(*eval_pairs, *eval_cloud, reference, std::max(1, threads));
  return ev;
}

UqOutput stage_fit_uq(const PipelineConfig& config, const std::vector<CameraView>& views,
                      const std::vector<BasePairs>& matches, const FuseOutput& fuse,
                      int threads) {
  UqOutput out;
  std::vector<ReprojectionSample> all;
  for (size_t i = 0; i < matches.size(); ++i) {
    const PointCloud& cloud = fuse.per_base[i].cloud;
    if (cloud.empty()) continue;
    try {
      const CameraView& base = view_by_id(views, matches[i].base_id);
      const PseudoGtSelection sel =
          select_pseudo_gt(cloud, base, config.uq_min_rays, config.uq_self_gate_px);
      out.pseudo_gt_points += sel.points.size();
      const auto samples =
          collect_samples(sel.points, base, views, matches[i].maps, std::max(1, threads));
      all.insert(all.end(), samples.begin(), samples.end());
    } catch (const Error& e) {
      stage_rethrow("fit-uq: image " + std::to_string(matches[i].base_id), e);
    }
  }
  out.low_count = out.pseudo_gt_points < 1000;
  out.sample_count = all.size();
  try {
    out.table = build_uq_table(all, config.uq_bin_size, (size_t)config.uq_min_samples);
  } catch (const Error& e) {
    stage_rethrow("fit-uq", e);
  }
  return out;
}

void stage_annotate(const UqTable& table, const std::vector<BasePairs>& matches,
                    FuseOutput& fuse) {
  try {
    for (size_t i = 0; i < fuse.per_base.size(); ++i) {
      PointCloud& cloud = fuse.per_base[i].cloud;
      if (cloud.empty()) continue;
      annotate_cloud(cloud, table, matches[i].maps);
    }
    PointCloud& m = fuse.merged;
    m.predicted_error_mean_px.assign(m.size(), kInvalid);
    m.predicted_error_std_px.assign(m.size(), kInvalid);
    for (size_t i = 0; i < fuse.per_base.size(); ++i) {
      const PointCloud& c = fuse.per_base[i].cloud;
      for (size_t r = 0; r < c.size(); ++r) {
        m.predicted_error_mean_px[fuse.offsets[i] + r] = c.predicted_error_mean_px[r];
        m.predicted_error_std_px[fuse.offsets[i] + r] = c.predicted_error_std_px[r];
      }
    }
  } catch (const Error& e) {
    stage_rethrow("annotate", e);
  }
}

std::string uq_table_json(const UqTable& table) {
  json bins = json::array();
  for (const auto& m : table.models) {
    bins.push_back({{"count", m.sample_count},
                    {"e_hi", m.e_hi},
                    {"e_lo", m.e_lo},
                    {"mean_px", m.mean()},
                    {"merged", m.e_hi - m.e_lo > table.bin_size * (1 + 1e-9)},
                    {"scale", m.theta},
                    {"shape", m.k},
                    {"std_px", m.stddev()}});
  }
  json doc{{"bin_size", table.bin_size},
           {"bins", bins},
           {"min_samples", table.min_samples}};
  return doc.dump(2);
}

UqTable parse_uq_table(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(Err::BadFormat, std::string("uq table parse error: ") + e.what());
  }
  UqTable t;
  try {
    t.bin_size = doc.at("bin_size").get<double>();
    t.min_samples = doc.at("min_samples").get<size_t>();
    for (const auto& jb : doc.at("bins")) {
      GammaModel m;
      m.k = jb.at("shape").get<double>();
      m.theta = jb.at("scale").get<double>();
      m.e_lo = jb.at("e_lo").get<double>();
      m.e_hi = jb.at("e_hi").get<double>();
      m.sample_count = jb.at("count").get<size_t>();
      t.models.push_back(m);
    }
  } catch (const json::exception& e) {
    fail(Err::BadFormat, std::string("uq table field error: ") + e.what());
  }
  return t;
}

namespace {

std::string fmt_count(size_t n) { return std::to_string(n); }

Csv binned_csv(const BinnedErrorStats& s, const char* lo_name, const char* hi_name) {
  Csv t;
  t.comments = {"MAE and std in meters; std is the population form"};
  t.columns = {lo_name, hi_name, "count", "mae_m", "std_m", "proportion"};
  for (const auto& b : s.bins)
    t.rows.push_back({fmt_g6(b.lo), fmt_g6(b.hi), fmt_count(b.count), fmt_g6(b.mae),
                      fmt_g6(b.stddev), fmt_g6(b.proportion)});
  return t;
}

json eval_json(const EvalOutput& ev, const PipelineConfig& config) {
  json comps;
  const char* names[3] = {"NN", "NO", "OO"};
  for (int i = 0; i < 3; ++i) {
    const CompositionRow& r = ev.compositions.rows[i];
    comps[names[i]] = {{"count", r.count},
                       {"mean_vs_mvs", r.mean_vs_mvs},
                       {"std_vs_mvs", r.std_vs_mvs},
                       {"mean_vs_ref", r.mean_vs_ref},
                       {"std_vs_ref", r.std_vs_ref}};
  }
  json icp;
  if (ev.icp_applied) {
    icp = {{"rms", ev.icp.rms},
           {"iterations", ev.icp.iterations},
           {"rotation", rotation_to_json(ev.icp.transform.rotation)},
           {"translation",
            {ev.icp.transform.translation.x(), ev.icp.transform.translation.y(),
             ev.icp.transform.translation.z()}}};
  }
  return json{{"count", ev.overall.count},
              {"mean_m", ev.overall.mean},
              {"std_m", ev.overall.stddev},
              {"energy_fit",
               {{"slope", ev.energy_fit.slope},
                {"intercept", ev.energy_fit.intercept},
                {"r2", ev.energy_fit.r2}}},
              {"split",
               {{"threshold_m", config.split_threshold},
                {"low", ev.low_count},
                {"high", ev.high_count}}},
              {"icp", icp},
              {"compositions", comps}};
}

}  // namespace

std::vector<std::string> write_reports(const PipelineConfig& config, const PointCloud& merged,
                                       const std::optional<EvalOutput>& eval,
                                       const std::string& out_dir) {
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const Csv& t) {
    write_csv(join(out_dir, name), t);
    files.push_back(name);
  };

  {
    std::vector<double> rays(merged.size());
    for (size_t i = 0; i < merged.size(); ++i) rays[i] = merged.num_rays[i];
    const int hi = std::max(config.n_neighbors + 2, 5);
    const Histogram h = histogram(rays, uniform_edges(3, hi, 1), false);
    Csv t;
    t.columns = {"rays", "count", "fraction"};
    for (size_t i = 0; i < h.counts.size(); ++i)
      t.rows.push_back({fmt_g6(h.edges[i]), fmt_count(h.counts[i]),
                        fmt_g6(h.total ? (double)h.counts[i] / h.total : 0.0)});
    put("fig4_hist.csv", t);
  }

  if (!eval) return files;
  const EvalOutput& ev = *eval;

  put("fig3_rays.csv", binned_csv(ev.by_rays, "rays_lo", "rays_hi"));
  put("fig3_angles.csv", binned_csv(ev.by_angle, "angle_lo_deg", "angle_hi_deg"));

  {
    Csv t = binned_csv(ev.by_energy, "e_lo", "e_hi");
    t.comments.push_back("ols slope=" + fmt_g6(ev.energy_fit.slope) +
                         " intercept=" + fmt_g6(ev.energy_fit.intercept) +
                         " r2=" + fmt_g6(ev.energy_fit.r2));
    put("fig7_energy.csv", t);
  }

  {
    Csv t;
    t.comments = {"median intersection angle split at error " +
                  fmt_g6(config.split_threshold) + " m"};
    t.columns = {"angle_lo_deg", "angle_hi_deg", "low_count", "low_fraction",
                 "high_count", "high_fraction"};
    const Histogram& lo = ev.low_angles;
    const Histogram& hi = ev.high_angles;
    for (size_t i = 0; i < lo.counts.size(); ++i) {
      const double a0 = lo.edges[i];
      const double a1 = i + 1 < lo.edges.size()
                            ? lo.edges[i + 1]
                            : std::numeric_limits<double>::infinity();
      t.rows.push_back({fmt_g6(a0), fmt_g6(a1), fmt_count(lo.counts[i]),
                        fmt_g6(lo.total ? (double)lo.counts[i] / lo.total : 0.0),
                        fmt_count(hi.counts[i]),
                        fmt_g6(hi.total ? (double)hi.counts[i] / hi.total : 0.0)});
    }
    put("fig6_angles.csv", t);
  }

  {
    Csv t;
    t.comments = {"distances in meters vs the merged cloud and the reference"};
    t.columns = {"composition", "points", "mean_vs_mvs_m", "std_vs_mvs_m", "mean_vs_ref_m",
                 "std_vs_ref_m"};
    const char* names[3] = {"NN", "NO", "OO"};
    for (int i = 0; i < 3; ++i) {
      const CompositionRow& r = ev.compositions.rows[i];
      t.rows.push_back({names[i], fmt_count(r.count), fmt_g6(r.mean_vs_mvs),
                        fmt_g6(r.std_vs_mvs), fmt_g6(r.mean_vs_ref), fmt_g6(r.std_vs_ref)});
    }
    put("table3.csv", t);
  }

  if (!merged.predicted_error_mean_px.empty() && !merged.error_m.empty()) {
    Csv t;
    t.columns = {"predicted_mean_px", "predicted_std_px", "error_m"};
    for (size_t i = 0; i < merged.size(); ++i) {
      if (is_invalid(merged.predicted_error_mean_px[i])) continue;
      t.rows.push_back({fmt_g6(merged.predicted_error_mean_px[i]),
                        fmt_g6(merged.predicted_error_std_px[i]), fmt_g6(merged.error_m[i])});
    }
    put("fig8_pred.csv", t);
  }
  return files;
}

void save_match(const std::string& out_dir, const std::string& manifest_path,
                const PipelineConfig& config, const std::vector<BasePairs>& matches,
                std::vector<std::string>* written) {
  fs::create_directories(out_dir);
  auto note = [&](const std::string& rel) {
    if (written) written->push_back(rel);
  };

  write_text_file(join(out_dir, "config.json"), serialize_config(config) + "\n");
  note("config.json");

  std::vector<int> base_ids;
  for (const auto& bp : matches) base_ids.push_back(bp.base_id);
  write_text_file(join(out_dir, "run.json"),
                  json{{"bases", base_ids}, {"manifest", manifest_path}}.dump(2) + "\n");
  note("run.json");

  json jbases = json::array();
  for (const auto& bp : matches) {
    json jpairs = json::array();
    for (const auto& m : bp.maps) {
      const std::string suffix =
          std::to_string(bp.base_id) + "_" + std::to_string(m.neighbor_id) + ".dmap";
      write_dmap(join(out_dir, "rect_" + suffix), disparity_as_dmap(m.rect_disp));
      note("rect_" + suffix);
      write_dmap(join(out_dir, "pair_" + suffix), m.depth);
      note("pair_" + suffix);
      jpairs.push_back({{"neighbor", m.neighbor_id},
                        {"neighbor_center",
                         {m.neighbor_center.x(), m.neighbor_center.y(), m.neighbor_center.z()}},
                        {"composition", composition_name(m.composition)},
                        {"left", m.pair.left_id},
                        {"right", m.pair.right_id},
                        {"left_rot", rotation_to_json(m.pair.left_rectify_rot)},
                        {"right_rot", rotation_to_json(m.pair.right_rectify_rot)},
                        {"rect_rot", rotation_to_json(m.pair.rect_rotation)},
                        {"rectified_focal", m.pair.rectified_focal},
                        {"rect_cx", m.pair.rect_cx},
                        {"rect_cx_right", m.pair.rect_cx_right},
                        {"rect_cy", m.pair.rect_cy},
                        {"baseline", m.pair.baseline},
                        {"width", m.pair.width},
                        {"height", m.pair.height},
                        {"d_min", m.pair.d_min},
                        {"d_max", m.pair.d_max},
                        {"rect_file", "rect_" + suffix},
                        {"depth_file", "pair_" + suffix}});
    }
    json jrej = json::array();
    for (const auto& r : bp.rejected)
      jrej.push_back({{"id", r.neighbor_id}, {"reason", r.reason}});
    jbases.push_back({{"base", bp.base_id},
                      {"neighbors", bp.neighbors.neighbor_ids},
                      {"scores", bp.neighbors.scores},
                      {"rejected", jrej},
                      {"pairs", jpairs}});
  }
  write_text_file(join(out_dir, "pairs.json"), json{{"bases", jbases}}.dump(2) + "\n");
  note("pairs.json");
}

std::vector<BasePairs> load_match(const std::string& dir, std::vector<CameraView>& views,
                                  PipelineConfig* config) {
  json run;
  try {
    run = json::parse(read_text_file(join(dir, "run.json")));
  } catch (const json::exception& e) {
    fail(Err::BadFormat, std::string("run.json parse error: ") + e.what());
  }
  std::string manifest = run.at("manifest").get<std::string>();
  if (!fs::path(manifest).is_absolute() && fs::exists(join(dir, manifest)))
    manifest = join(dir, manifest);
  views = load_manifest(manifest, false);
  if (config) *config = parse_config(read_text_file(join(dir, "config.json")));

  json pairs;
  try {
    pairs = json::parse(read_text_file(join(dir, "pairs.json")));
  } catch (const json::exception& e) {
    fail(Err::BadFormat, std::string("pairs.json parse error: ") + e.what());
  }

  std::vector<BasePairs> out;
  try {
    for (const auto& jb : pairs.at("bases")) {
      BasePairs bp;
      bp.base_id = jb.at("base").get<int>();
      bp.neighbors.base_id = bp.base_id;
      bp.neighbors.neighbor_ids = jb.at("neighbors").get<std::vector<int>>();
      bp.neighbors.scores = jb.at("scores").get<std::vector<double>>();
      for (const auto& jr : jb.at("rejected"))
        bp.rejected.push_back({jr.at("id").get<int>(), jr.at("reason").get<std::string>()});
      for (const auto& jp : jb.at("pairs")) {
        PairDepthMap m;
        m.neighbor_id = jp.at("neighbor").get<int>();
        const auto nc = jp.at("neighbor_center").get<std::vector<double>>();
        if (nc.size() != 3) fail(Err::BadFormat, "neighbor_center needs 3 entries");
        m.neighbor_center = {nc[0], nc[1], nc[2]};
        m.composition = composition_from_name(jp.at("composition").get<std::string>());
        m.pair.left_id = jp.at("left").get<int>();
        m.pair.right_id = jp.at("right").get<int>();
        m.pair.left_rectify_rot = rotation_from_json(jp.at("left_rot"));
        m.pair.right_rectify_rot = rotation_from_json(jp.at("right_rot"));
        m.pair.rect_rotation = rotation_from_json(jp.at("rect_rot"));
        m.pair.rectified_focal = jp.at("rectified_focal").get<double>();
        m.pair.rect_cx = jp.at("rect_cx").get<double>();
        m.pair.rect_cx_right = jp.at("rect_cx_right").get<double>();
        m.pair.rect_cy = jp.at("rect_cy").get<double>();
        m.pair.baseline = jp.at("baseline").get<double>();
        m.pair.width = jp.at("width").get<int>();
        m.pair.height = jp.at("height").get<int>();
        m.pair.d_min = jp.at("d_min").get<int>();
        m.pair.d_max = jp.at("d_max").get<int>();
        m.rect_disp = dmap_as_disparity(read_dmap(join(dir, jp.at("rect_file").get<std::string>())));
        m.depth = read_dmap(join(dir, jp.at("depth_file").get<std::string>()));
        bp.maps.push_back(std::move(m));
      }
      out.push_back(std::move(bp));
    }
  } catch (const json::exception& e) {
    fail(Err::BadFormat, std::string("pairs.json field error: ") + e.what());
  }
  return out;
}

void write_hashes(const std::string& dir, std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  json doc;
  for (const auto& f : files) {
    const std::string bytes = read_text_file(join(dir, f));
    doc[f] = hex64(fnv1a64(bytes.data(), bytes.size()));
  }
  write_text_file(join(dir, "hashes.json"), doc.dump(2) + "\n");
}

PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<CameraView>& views,
                            const PointCloud* reference, const std::string& out_dir,
                            int threads) {
  PipelineResult res;
  res.config = config;
  res.bases = stage_match(config, views, threads);
  res.fuse = stage_fuse(config, views, res.bases, threads);

  std::vector<StereoPairCloud> pcs;
  if (reference && !reference->empty()) {
    try {
      pcs = pair_clouds(views, res.bases, config.tilt_threshold_deg);
      res.eval = stage_evaluate(config, res.fuse, pcs, *reference, threads);
    } catch (const Error& e) {
      stage_rethrow("evaluate", e);
    }
  }

  res.uq = stage_fit_uq(config, views, res.bases, res.fuse, threads);
  stage_annotate(res.uq->table, res.bases, res.fuse);

  if (!out_dir.empty()) {
    try {
      fs::create_directories(out_dir);
      save_manifest(join(out_dir, "manifest.json"), views,
                    std::vector<std::string>(views.size()));
      res.written.push_back("manifest.json");
      save_match(out_dir, "manifest.json", config, res.bases, &res.written);

      for (size_t i = 0; i < res.bases.size(); ++i) {
        const std::string id = std::to_string(res.bases[i].base_id);
        write_dmap(join(out_dir, "fused_" + id + ".dmap"), res.fuse.per_base[i].fused);
        res.written.push_back("fused_" + id + ".dmap");
        write_ply(join(out_dir, "cloud_" + id + ".ply"), res.fuse.per_base[i].cloud);
        res.written.push_back("cloud_" + id + ".ply");
      }
      write_ply(join(out_dir, "cloud.ply"), res.fuse.merged);
      res.written.push_back("cloud.ply");

      if (res.eval) {
        write_text_file(join(out_dir, "eval.json"),
                        eval_json(*res.eval, config).dump(2) + "\n");
        res.written.push_back("eval.json");
      }
      write_text_file(join(out_dir, "uq.json"), uq_table_json(res.uq->table) + "\n");
      res.written.push_back("uq.json");

      const auto reports = write_reports(config, res.fuse.merged, res.eval, out_dir);
      res.written.insert(res.written.end(), reports.begin(), reports.end());

      write_hashes(out_dir, res.written);
      res.written.push_back("hashes.json");
    } catch (const Error& e) {
      stage_rethrow("report", e);
    }
  }
  return res;
}

}  // namespace mvsuq
