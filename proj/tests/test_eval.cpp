#include <doctest.h>

#include <random>

#include "mvsuq/evaluation.hpp"
#include "mvsuq/kdtree.hpp"
#include "test_helpers.hpp"

using namespace mvsuq;
using namespace mvsuq::testutil;

namespace {

PointCloud random_cloud(std::mt19937& rng, size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  for (size_t i = 0; i < n; ++i) c.xyz.push_back({u(rng), u(rng), u(rng)});
  return c;
}

Eigen::Vector3d centroid(const PointCloud& c) {
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (const auto& p : c.xyz) s += p;
  return s / (double)c.size();
}

// Rotation about the cloud centroid plus a shift, so the displacement
// stays small relative to point spacing.
RigidTransform about_centroid(const PointCloud& c, const Eigen::Vector3d& axis, double angle_deg,
                              const Eigen::Vector3d& shift) {
  const Eigen::Vector3d ctr = centroid(c);
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(deg2rad(angle_deg), axis.normalized()).toRotationMatrix();
  t.translation = ctr - t.rotation * ctr + shift;
  return t;
}

double rotation_angle_deg(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return rad2deg(std::acos(c));
}

}  // namespace

TEST_CASE("kd-tree nearest matches linear scan") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({u(rng), u(rng), u(rng)});
  // Duplicates force the index tie-break.
  for (int i = 0; i < 20; ++i) pts.push_back(pts[(size_t)i * 7]);
  const KdTree tree(pts);
  for (int q = 0; q < 400; ++q) {
    Eigen::Vector3d probe{u(rng), u(rng), u(rng)};
    if (q % 5 == 0) probe = pts[(size_t)q];  // exact hits
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < pts.size(); ++i) {
      const double d = (pts[i] - probe).squaredNorm();
      if (d < bd || (d == bd && (int)i < best)) {
        bd = d;
        best = (int)i;
      }
    }
    const auto [idx, d2] = tree.nearest(probe);
    CHECK(idx == best);
    CHECK(d2 == bd);
  }
}

TEST_CASE("estimate_rigid") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<Eigen::Vector3d> src;
  for (int i = 0; i < 40; ++i) src.push_back({u(rng), u(rng), u(rng)});

  SUBCASE("aligned pairs give identity") {
    const RigidTransform t = estimate_rigid(src, src);
    CHECK((t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.translation.norm() < 1e-12);
  }
  SUBCASE("pure translation recovered exactly") {
    const Eigen::Vector3d shift(0.4, -1.1, 2.5);
    std::vector<Eigen::Vector3d> dst;
    for (const auto& p : src) dst.push_back(p + shift);
    const RigidTransform t = estimate_rigid(src, dst);
    CHECK((t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((t.translation - shift).norm() < 1e-12);
  }
  SUBCASE("noiseless rigid motion recovered within 1e-9") {
    for (int trial = 0; trial < 20; ++trial) {
      RigidTransform truth;
      truth.rotation = random_rotation(rng);
      truth.translation = {u(rng), u(rng), u(rng)};
      std::vector<Eigen::Vector3d> dst;
      for (const auto& p : src) dst.push_back(truth.apply(p));
      const RigidTransform t = estimate_rigid(src, dst);
      CHECK((t.rotation - truth.rotation).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((t.translation - truth.translation).norm() < 1e-9);
    }
  }
  SUBCASE("colinear pairs are degenerate") {
    std::vector<Eigen::Vector3d> line;
    for (int i = 0; i < 10; ++i) line.push_back({(double)i, 2.0 * i, -1.0 * i});
    try {
      estimate_rigid(line, line, 3);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::DegenerateGeometry);
    }
    // Planar sets pass at the default rank requirement.
    std::vector<Eigen::Vector3d> plane;
    for (int i = 0; i < 12; ++i) plane.push_back({u(rng), u(rng), 0.0});
    const RigidTransform t = estimate_rigid(plane, plane);
    CHECK((t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("composition and inversion") {
    RigidTransform a, b;
    a.rotation = random_rotation(rng);
    a.translation = {1, 2, 3};
    b.rotation = random_rotation(rng);
    b.translation = {-0.5, 0.25, 4};
    const Eigen::Vector3d p{0.3, -0.7, 1.9};
    CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    const RigidTransform ident = a.compose(a.inverse());
    CHECK((ident.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ident.translation.norm() < 1e-12);
  }
}

TEST_CASE("icp_register") {
  std::mt19937 rng(11);

  SUBCASE("identical clouds give identity and zero rms") {
    const PointCloud c = random_cloud(rng, 800, 0, 4);
    const IcpResult r = icp_register(c, c);
    CHECK((r.transform.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.transform.translation.norm() < 1e-9);
    CHECK(r.rms < 1e-9);
  }
  SUBCASE("recovers a 5 degree / 0.3 m motion on 10k points") {
    const PointCloud src = random_cloud(rng, 10000, 0, 4);
    std::uniform_real_distribution<double> u(-1, 1);
    const Eigen::Vector3d axis{u(rng), u(rng), u(rng)};
    const RigidTransform truth =
        about_centroid(src, axis, 5.0, Eigen::Vector3d(0.2, -0.1, 0.2).normalized() * 0.3);
    PointCloud dst = src;
    apply_transform(dst, truth);
    const IcpResult r = icp_register(src, dst, 50, 1e-9);
    CHECK(rotation_angle_deg(r.transform.rotation * truth.rotation.transpose()) < 0.1);
    CHECK((r.transform.translation - truth.translation).norm() < 1e-3);
    CHECK(r.iterations <= 50);
  }
  SUBCASE("pre-applied motion composes away") {
    const PointCloud base = random_cloud(rng, 3000, 0, 3);
    const RigidTransform t =
        about_centroid(base, {0.2, 1, -0.4}, 1.0, Eigen::Vector3d(0.02, 0.01, -0.015));
    PointCloud moved = base;
    apply_transform(moved, t);
    const IcpResult reg = icp_register(moved, base, 50, 1e-12);
    const RigidTransform round = reg.transform.compose(t);
    CHECK((round.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(round.translation.norm() < 1e-4);
  }
  SUBCASE("colinear source is degenerate") {
    PointCloud line;
    for (int i = 0; i < 50; ++i) line.xyz.push_back({0.1 * i, 0.2 * i, 0});
    try {
      icp_register(line, line);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::DegenerateGeometry);
    }
  }
  SUBCASE("empty cloud rejected") {
    try {
      icp_register(PointCloud{}, random_cloud(rng, 10, 0, 1));
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyCloud);
    }
  }
}

TEST_CASE("per_point_error") {
  std::mt19937 rng(23);

  SUBCASE("subset of the reference has zero error") {
    const PointCloud ref = random_cloud(rng, 300, 0, 5);
    std::vector<size_t> rows;
    for (size_t i = 0; i < ref.size(); i += 3) rows.push_back(i);
    const PointCloud sub = select_rows(ref, rows);
    for (double e : per_point_error(sub, ref)) CHECK(e == 0.0);
  }
  SUBCASE("offset above a sampled plane") {
    PointCloud ref;
    for (int i = 0; i <= 50; ++i)
      for (int j = 0; j <= 50; ++j) ref.xyz.push_back({0.1 * i, 0.1 * j, 0.0});
    PointCloud cloud;
    std::uniform_real_distribution<double> u(1.0, 4.0);
    for (int i = 0; i < 200; ++i) cloud.xyz.push_back({u(rng), u(rng), 0.2});
    const double hi = std::sqrt(0.2 * 0.2 + 2 * 0.05 * 0.05);
    for (double e : per_point_error(cloud, ref)) {
      CHECK(e >= 0.2);
      CHECK(e <= hi + 1e-12);
    }
  }
  SUBCASE("invariant under a common rigid motion") {
    const PointCloud ref = random_cloud(rng, 500, 0, 3);
    const PointCloud cloud = random_cloud(rng, 200, 0.5, 2.5);
    const auto before = per_point_error(cloud, ref);
    RigidTransform t;
    t.rotation = random_rotation(rng);
    t.translation = {10, -3, 7};
    PointCloud ref2 = ref, cloud2 = cloud;
    apply_transform(ref2, t);
    apply_transform(cloud2, t);
    const auto after = per_point_error(cloud2, ref2);
    for (size_t i = 0; i < before.size(); ++i)
      CHECK(std::abs(before[i] - after[i]) < 1e-9);
  }
  SUBCASE("deterministic across workers and reruns") {
    const PointCloud ref = random_cloud(rng, 400, 0, 2);
    const PointCloud cloud = random_cloud(rng, 333, 0, 2);
    const auto a = per_point_error(cloud, ref, 1);
    const auto b = per_point_error(cloud, ref, 4);
    CHECK(a == b);
  }
  SUBCASE("empty reference rejected") {
    try {
      per_point_error(random_cloud(rng, 5, 0, 1), PointCloud{});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyReference);
    }
  }
}

TEST_CASE("bin_by_metric") {
  SUBCASE("single bin reproduces global stats") {
    const std::vector<double> metric{1, 2, 3, 4}, errors{0.1, 0.4, 0.2, 0.3};
    const auto s = bin_by_metric(metric, errors, "m", {0, 10}, false);
    REQUIRE(s.bins.size() == 1);
    CHECK(s.bins[0].mae == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.bins[0].proportion == 1.0);
    CHECK(s.bins[0].count == 4);
  }
  SUBCASE("hand-split means") {
    const std::vector<double> metric{0, 0, 1, 1}, errors{1, 2, 3, 4};
    const auto s = bin_by_metric(metric, errors, "m", {0, 1, 2}, false);
    REQUIRE(s.bins.size() == 2);
    CHECK(s.bins[0].mae == doctest::Approx(1.5));
    CHECK(s.bins[1].mae == doctest::Approx(3.5));
  }
  SUBCASE("counts partition and weighted MAE matches the union") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> um(3, 12), ue(0, 1);
    std::vector<double> metric, errors;
    for (int i = 0; i < 5000; ++i) {
      metric.push_back(std::floor(um(rng)));
      errors.push_back(ue(rng));
    }
    const auto s = bin_by_metric(metric, errors, "rays", uniform_edges(3, 11, 1), true);
    size_t total = 0;
    double weighted = 0, psum = 0;
    for (const auto& b : s.bins) {
      total += b.count;
      if (b.count) {
        weighted += b.mae * (double)b.count;
        psum += b.proportion;
      }
    }
    CHECK(total == metric.size());
    const auto global = mean_std(errors);
    CHECK(weighted / (double)total == doctest::Approx(global.mean).epsilon(1e-12));
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("empty bins report null MAE") {
    const auto s = bin_by_metric({0.5, 2.5}, {1.0, 2.0}, "m", {0, 1, 2, 3}, false);
    CHECK(s.bins[1].count == 0);
    CHECK(std::isnan(s.bins[1].mae));
    CHECK(s.bins[1].proportion == 0.0);
  }
  SUBCASE("open last bin catches overflow; closed drops it") {
    const auto open = bin_by_metric({5.0}, {1.0}, "m", {0, 1}, true);
    CHECK(open.bins.back().count == 1);
    CHECK(std::isinf(open.bins.back().hi));
    const auto closed = bin_by_metric({5.0}, {1.0}, "m", {0, 1}, false);
    CHECK(closed.total == 0);
  }
  SUBCASE("edges must increase") {
    try {
      bin_by_metric({1.0}, {1.0}, "m", {0, 1, 1}, false);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::NonMonotonicEdges);
    }
  }
}

TEST_CASE("split_by_error") {
  PointCloud c;
  const std::vector<float> errs{0.0f, 0.4f, 0.5f, 0.6f};
  const std::vector<uint8_t> rays{3, 5, 7, 11};
  for (size_t i = 0; i < errs.size(); ++i) {
    c.xyz.push_back({(double)i, 0, 0});
    c.error_m.push_back(errs[i]);
    c.num_rays.push_back(rays[i]);
    c.median_angle_deg.push_back(10.0f * (float)(i + 1));
  }
  SUBCASE("boundary goes high") {
    const ErrorSplit s = split_by_error(c, 0.5);
    CHECK(s.low.size() == 2);
    CHECK(s.high.size() == 2);
    CHECK(s.high.error_m[0] == 0.5f);
    CHECK(s.low_rays.total == 2);
    CHECK(s.high_rays.counts.back() == 1);  // 11 rays in the open bin
    CHECK(s.low_angles.total == 2);
  }
  SUBCASE("all below threshold empties the high group") {
    const ErrorSplit s = split_by_error(c, 10.0);
    CHECK(s.high.empty());
    CHECK(s.low.size() == 4);
  }
  SUBCASE("missing errors rejected") {
    PointCloud bare;
    bare.xyz.push_back({0, 0, 0});
    try {
      split_by_error(bare, 0.5);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::DimensionMismatch);
    }
  }
}

TEST_CASE("pair_composition_stats") {
  PointCloud mvs;
  mvs.xyz = {{0, 0, 0}, {1, 0, 0}};
  PointCloud ref;
  ref.xyz = {{0, 0, 1}};

  StereoPairCloud pair;
  pair.composition = PairComposition::NN;
  pair.cloud.xyz = {{0, 0, 0.3}, {1, 0, 0.4}};

  SUBCASE("hand distances") {
    const PairCompositionStats s = pair_composition_stats({pair}, mvs, ref);
    const auto& nn = s.rows[(int)PairComposition::NN];
    CHECK(nn.count == 2);
    CHECK(nn.mean_vs_mvs == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(nn.std_vs_mvs == doctest::Approx(0.05).epsilon(1e-12));
    const double d0 = 0.7, d1 = std::sqrt(1.0 + 0.36);
    CHECK(nn.mean_vs_ref == doctest::Approx((d0 + d1) / 2).epsilon(1e-12));
    // Other classes stay null.
    CHECK(s.rows[(int)PairComposition::NO].count == 0);
    CHECK(std::isnan(s.rows[(int)PairComposition::OO].mean_vs_mvs));
  }
  SUBCASE("stereo cloud equal to the dense cloud scores zero") {
    StereoPairCloud same;
    same.composition = PairComposition::OO;
    same.cloud.xyz = mvs.xyz;
    const PairCompositionStats s = pair_composition_stats({same}, mvs, ref);
    CHECK(s.rows[(int)PairComposition::OO].mean_vs_mvs == 0.0);
    CHECK(s.rows[(int)PairComposition::OO].std_vs_mvs == 0.0);
  }
}

TEST_CASE("intersection_angle_histogram") {
  SUBCASE("single spike") {
    const Histogram h = intersection_angle_histogram(std::vector<double>(100, 17.0));
    CHECK(h.counts[3] == 100);  // [15, 20)
    CHECK(h.total == 100);
  }
  SUBCASE("angles past 60 land in the overflow bin") {
    const Histogram h = intersection_angle_histogram({90.0, 61.0, 59.9});
    CHECK(h.counts.back() == 2);
    CHECK(h.counts[11] == 1);
  }
  SUBCASE("filtered pair gather matches direct recount") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0, 70);
    std::vector<StereoPairCloud> pairs(4);
    std::vector<double> no_angles;
    for (size_t i = 0; i < pairs.size(); ++i) {
      pairs[i].composition = (i % 2) ? PairComposition::NO : PairComposition::NN;
      for (int j = 0; j < 50; ++j) {
        const double a = u(rng);
        pairs[i].cloud.xyz.push_back({0, 0, 0});
        pairs[i].cloud.median_angle_deg.push_back((float)a);
        if (i % 2) no_angles.push_back((double)(float)a);
      }
    }
    const Histogram filt = intersection_angle_histogram(pairs, PairComposition::NO);
    const Histogram direct = intersection_angle_histogram(no_angles);
    CHECK(filt.counts == direct.counts);
    const Histogram all = intersection_angle_histogram(pairs, std::nullopt);
    CHECK(all.total == 200);
  }
}

TEST_CASE("correlation_r2") {
  SUBCASE("perfect line") {
    const std::vector<double> x{1, 2, 3, 4};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    CHECK(correlation_r2(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    const OlsFit f = ols_fit(x, y);
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand OLS value") {
    CHECK(correlation_r2({1, 2, 3}, {1, 2, 2}) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("flat y has no defined fit quality") {
    CHECK(std::isnan(correlation_r2({1, 2, 3}, {5, 5, 5})));
  }
  SUBCASE("null bins are dropped before the count check") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(correlation_r2({1, 2, 3, 4}, {1, 2, 2, nan}) == doctest::Approx(0.75));
    try {
      correlation_r2({1, 2, nan}, {1, 2, 3});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::InsufficientBins);
    }
  }
}

TEST_CASE("mean_std and uniform_edges") {
  const MeanStd ms = mean_std({1, 2, 3, 4});
  CHECK(ms.mean == doctest::Approx(2.5));
  CHECK(ms.stddev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
  CHECK(std::isnan(mean_std({}).mean));

  const auto e = uniform_edges(0, 60, 5);
  CHECK(e.size() == 13);
  CHECK(e.front() == 0);
  CHECK(e.back() == 60);
  const auto ragged = uniform_edges(0, 1, 0.3);
  CHECK(ragged.size() == 5);
  CHECK(ragged.back() == doctest::Approx(1.2));
}
