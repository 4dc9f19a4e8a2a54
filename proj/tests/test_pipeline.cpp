#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <map>
#include <json.hpp>
#include <random>

#include "mvsuq/io.hpp"
#include "mvsuq/pipeline.hpp"
#include "mvsuq/synth.hpp"

using namespace mvsuq;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  std::vector<CameraView> views;
  PointCloud reference;
};

// Two nadir + three oblique views at a 25 degree tilt: every base ends up
// with 3 or 4 usable pairs (nadir-nadir pairs have parallel axes and score
// zero). Built once per surface.
const Fixture& five_view_scene(const char* surface = "plane") {
  static std::map<std::string, Fixture> cache;
  auto it = cache.find(surface);
  if (it == cache.end()) {
    SceneSpec spec;
    spec.surface = surface;
    spec.nadir_count = 2;
    spec.oblique_count = 3;
    spec.oblique_tilt_deg = 25;
    // Long enough that frames stay footprint-dominated; a wide lens mostly
    // sees past the footprint edge and fills the cloud with edge extrapolation.
    spec.focal_px = 110;
    SyntheticScene s = generate_scene(77, spec);
    Fixture fx;
    fx.views = s.views;
    for (auto& v : fx.views) v.raster = render_view(s, v).raster;
    fx.reference = reference_cloud(s, 0.5);
    it = cache.emplace(surface, std::move(fx)).first;
  }
  return it->second;
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.eps_rel = 0.02;   // depth quantization at this scale is ~1% of depth
  c.uq_min_rays = 4;  // five views cap num_rays at 5
  c.uq_min_samples = 50;
  return c;
}

// Bitwise equality; the usual operator== is useless on buffers that hold NaN.
template <typename T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

std::string tmp_dir(const char* name) {
  const fs::path p = fs::path("/tmp/mvsuq_test_pipeline") / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("config snapshot round-trips and rejects junk") {
  PipelineConfig c;
  CHECK(parse_config(serialize_config(c)) == c);

  c.n_neighbors = 7;
  c.k_consistency = 3;
  c.eps_rel = 0.02;
  c.d_range_margin = 9;
  c.tilt_threshold_deg = 25;
  c.uq_bin_size = 50;
  c.uq_min_samples = 12;
  c.uq_min_rays = 4;
  c.uq_self_gate_px = 0.75;
  c.split_threshold = 0.25;
  c.angle_bin_deg = 10;
  c.icp = true;
  c.icp_max_iters = 17;
  c.icp_conv_tol = 1e-5;
  c.neighbor_seed = (1ull << 63) | 12345u;
  c.sgm.lambda_p1 = 4;
  c.sgm.lambda_p2 = 96;
  c.sgm.path_count = 4;
  c.sgm.pyramid_levels = 2;
  c.sgm.search_band = 6;
  c.sgm.adaptive_p2 = false;
  c.sgm.census_w = 7;
  c.sgm.census_h = 5;
  CHECK(parse_config(serialize_config(c)) == c);
  CHECK(parse_config(serialize_config(c)) != PipelineConfig{});

  const PipelineConfig partial = parse_config("{\"k_consistency\": 3}");
  CHECK(partial.k_consistency == 3);
  CHECK(partial.n_neighbors == 10);

  CHECK_THROWS_AS(parse_config("{\"nope\": 1}"), Error);
  CHECK_THROWS_AS(parse_config("{\"sgm\": {\"bogus\": 2}}"), Error);
  CHECK_THROWS_AS(parse_config("{\"n_neighbors\": \"ten\"}"), Error);
  CHECK_THROWS_AS(parse_config("[1, 2]"), Error);
  CHECK_THROWS_AS(parse_config("not json"), Error);
  try {
    parse_config("{\"nope\": 1}");
  } catch (const Error& e) {
    CHECK(e.code() == Err::ConfigError);
  }
}

TEST_CASE("uq table json round-trips byte for byte") {
  std::mt19937_64 rng(505);
  std::gamma_distribution<double> g(2.0, 0.4);
  std::uniform_real_distribution<double> u(0, 2500);
  std::vector<ReprojectionSample> samples(3000);
  for (auto& s : samples) {
    s.energy = u(rng);
    s.r = g(rng);
  }
  const UqTable table = build_uq_table(samples, 1000, 100);
  REQUIRE(table.models.size() == 3);

  const std::string s1 = uq_table_json(table);
  const UqTable back = parse_uq_table(s1);
  REQUIRE(back.models.size() == table.models.size());
  CHECK(back.bin_size == table.bin_size);
  for (size_t i = 0; i < back.models.size(); ++i) {
    CHECK(back.models[i].k == table.models[i].k);
    CHECK(back.models[i].theta == table.models[i].theta);
    CHECK(back.models[i].e_lo == table.models[i].e_lo);
    CHECK(back.models[i].sample_count == table.models[i].sample_count);
  }
  CHECK(uq_table_json(back) == s1);

  const auto doc = nlohmann::json::parse(s1);
  for (const auto& jb : doc.at("bins"))
    CHECK(jb.at("merged").get<bool>() ==
          (jb.at("e_hi").get<double>() - jb.at("e_lo").get<double>() > 1000.0 * (1 + 1e-9)));

  CHECK_THROWS_AS(parse_uq_table("nope"), Error);
  CHECK_THROWS_AS(parse_uq_table("{\"bin_size\": 1}"), Error);
}

TEST_CASE("uq table marks widened bins as merged") {
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> g(2.0, 0.4);
  std::vector<ReprojectionSample> samples;
  for (int i = 0; i < 300; ++i) samples.push_back({0, 0, 0, 200.0 + (i % 500), g(rng)});
  for (int i = 0; i < 40; ++i) samples.push_back({0, 0, 0, 1100.0 + i, g(rng)});
  const UqTable t = build_uq_table(samples, 1000, 100);  // trailing bin merges left
  REQUIRE(t.models.size() == 1);
  const auto doc = nlohmann::json::parse(uq_table_json(t));
  CHECK(doc.at("bins").at(0).at("merged").get<bool>());
}

TEST_CASE("five-view smoke run produces annotated artifacts") {
  const Fixture& fx = five_view_scene();
  const PipelineConfig cfg = small_config();
  const std::string dir = tmp_dir("smoke");

  const PipelineResult res = run_pipeline(cfg, fx.views, &fx.reference, dir, 1);

  REQUIRE(!res.fuse.merged.empty());
  REQUIRE(res.eval.has_value());
  REQUIRE(res.uq.has_value());
  CHECK(!res.uq->table.models.empty());
  CHECK(res.uq->sample_count > 0);

  const PointCloud& m = res.fuse.merged;
  REQUIRE(m.error_m.size() == m.size());
  REQUIRE(m.predicted_error_mean_px.size() == m.size());
  size_t predicted = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    CHECK(m.num_rays[i] >= 3);
    CHECK(m.num_rays[i] <= 5);
    predicted += !is_invalid(m.predicted_error_mean_px[i]);
  }
  CHECK(predicted > 0);

  for (const char* f :
       {"config.json", "manifest.json", "run.json", "pairs.json", "cloud.ply", "uq.json",
        "eval.json", "fig4_hist.csv", "fig3_rays.csv", "fig3_angles.csv", "fig6_angles.csv",
        "fig7_energy.csv", "table3.csv", "fig8_pred.csv", "hashes.json"})
    CHECK_MESSAGE(fs::exists(fs::path(dir) / f), f);

  CHECK(read_text_file(dir + "/config.json") == serialize_config(cfg) + "\n");

  const auto hashes = nlohmann::json::parse(read_text_file(dir + "/hashes.json"));
  const std::string cloud_bytes = read_text_file(dir + "/cloud.ply");
  CHECK(hashes.at("cloud.ply").get<std::string>() ==
        hex64(fnv1a64(cloud_bytes.data(), cloud_bytes.size())));
  for (const auto& rel : res.written)
    if (rel != "hashes.json") CHECK(hashes.contains(rel));

  const PointCloud round = read_ply(dir + "/cloud.ply");
  REQUIRE(round.size() == m.size());
  CHECK(same_bits(round.xyz, m.xyz));
  CHECK(same_bits(round.error_m, m.error_m));

  // The annotated per-base clouds carry predictions too.
  const PointCloud base0 = read_ply(dir + "/cloud_" + std::to_string(res.bases[0].base_id) +
                                    ".ply");
  CHECK(base0.predicted_error_mean_px.size() == base0.size());
}

TEST_CASE("rerun and thread count leave every byte unchanged") {
  const Fixture& fx = five_view_scene();
  const PipelineConfig cfg = small_config();
  const std::string a = tmp_dir("rerun_a");
  const std::string b = tmp_dir("rerun_b");
  const std::string c = tmp_dir("rerun_c");

  const PipelineResult ra = run_pipeline(cfg, fx.views, &fx.reference, a, 1);
  const PipelineResult rb = run_pipeline(cfg, fx.views, &fx.reference, b, 1);
  const PipelineResult rc = run_pipeline(cfg, fx.views, &fx.reference, c, 3);

  REQUIRE(ra.written == rb.written);
  REQUIRE(ra.written == rc.written);
  for (const auto& rel : ra.written) {
    const std::string bytes = read_text_file(a + "/" + rel);
    CHECK_MESSAGE(bytes == read_text_file(b + "/" + rel), rel << " differs on rerun");
    CHECK_MESSAGE(bytes == read_text_file(c + "/" + rel), rel << " differs with 3 workers");
  }
}

TEST_CASE("single image fails at neighbor selection") {
  const Fixture& fx = five_view_scene();
  const std::vector<CameraView> one{fx.views[0]};
  try {
    run_pipeline(small_config(), one, nullptr, "", 1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Err::InsufficientViews);
    CHECK(std::string(e.what()).find("match: image") != std::string::npos);
  }
}

TEST_CASE("reference-free run skips evaluation but still fits") {
  const Fixture& fx = five_view_scene();
  const std::string dir = tmp_dir("noref");
  const PipelineResult res = run_pipeline(small_config(), fx.views, nullptr, dir, 1);

  CHECK(!res.eval.has_value());
  REQUIRE(res.uq.has_value());
  CHECK(!res.uq->table.models.empty());
  CHECK(res.fuse.merged.error_m.empty());
  CHECK(res.fuse.merged.predicted_error_mean_px.size() == res.fuse.merged.size());

  CHECK(fs::exists(fs::path(dir) / "uq.json"));
  CHECK(fs::exists(fs::path(dir) / "fig4_hist.csv"));
  CHECK(fs::exists(fs::path(dir) / "cloud.ply"));
  CHECK(!fs::exists(fs::path(dir) / "eval.json"));
  CHECK(!fs::exists(fs::path(dir) / "fig3_rays.csv"));
  CHECK(!fs::exists(fs::path(dir) / "fig8_pred.csv"));
}

TEST_CASE("match directory round-trips through disk") {
  const Fixture& fx = five_view_scene();
  const PipelineConfig cfg = small_config();
  const std::string dir = tmp_dir("matchdir");

  const auto matches = stage_match(cfg, fx.views, 1);
  fs::create_directories(dir);
  save_manifest(dir + "/manifest.json", fx.views, std::vector<std::string>(fx.views.size()));
  save_match(dir, "manifest.json", cfg, matches);

  std::vector<CameraView> views2;
  PipelineConfig cfg2;
  const auto loaded = load_match(dir, views2, &cfg2);

  CHECK(cfg2 == cfg);
  REQUIRE(views2.size() == fx.views.size());
  REQUIRE(loaded.size() == matches.size());
  for (size_t i = 0; i < matches.size(); ++i) {
    CHECK(loaded[i].base_id == matches[i].base_id);
    CHECK(loaded[i].neighbors.neighbor_ids == matches[i].neighbors.neighbor_ids);
    REQUIRE(loaded[i].maps.size() == matches[i].maps.size());
    for (size_t j = 0; j < matches[i].maps.size(); ++j) {
      const PairDepthMap& x = matches[i].maps[j];
      const PairDepthMap& y = loaded[i].maps[j];
      CHECK(y.neighbor_id == x.neighbor_id);
      CHECK(y.composition == x.composition);
      CHECK(y.pair.left_rectify_rot == x.pair.left_rectify_rot);
      CHECK(y.pair.right_rectify_rot == x.pair.right_rectify_rot);
      CHECK(y.pair.rectified_focal == x.pair.rectified_focal);
      CHECK(y.pair.baseline == x.pair.baseline);
      CHECK(y.pair.d_min == x.pair.d_min);
      CHECK(same_bits(y.rect_disp.disp.data, x.rect_disp.disp.data));
      CHECK(same_bits(y.rect_disp.energy.data, x.rect_disp.energy.data));
      CHECK(same_bits(y.depth.values, x.depth.values));
      CHECK(same_bits(y.depth.energies, x.depth.energies));
    }
  }

  // Fusing the reloaded stage reproduces the in-memory result exactly.
  const FuseOutput f1 = stage_fuse(cfg, fx.views, matches, 1);
  const FuseOutput f2 = stage_fuse(cfg, views2, loaded, 1);
  REQUIRE(f2.merged.size() == f1.merged.size());
  CHECK(same_bits(f2.merged.xyz, f1.merged.xyz));
  CHECK(same_bits(f2.merged.dim_energy, f1.merged.dim_energy));
}

TEST_CASE("icp alignment path runs on a curved scene") {
  const Fixture& fx = five_view_scene("hills");
  PipelineConfig cfg = small_config();
  cfg.icp = true;
  const std::string dir = tmp_dir("icp");

  const PipelineResult res = run_pipeline(cfg, fx.views, &fx.reference, dir, 1);
  REQUIRE(res.eval.has_value());
  CHECK(res.eval->icp_applied);

  // Clouds already share the world frame, so the alignment is near identity.
  const Eigen::Matrix3d& r = res.eval->icp.transform.rotation;
  const double angle = std::acos(std::clamp((r.trace() - 1) / 2, -1.0, 1.0));
  CHECK(rad2deg(angle) < 1.0);
  CHECK(res.eval->icp.transform.translation.norm() < 1.0);

  const auto doc = nlohmann::json::parse(read_text_file(dir + "/eval.json"));
  CHECK(!doc.at("icp").is_null());
  CHECK(doc.at("icp").at("iterations").get<int>() >= 1);
}
