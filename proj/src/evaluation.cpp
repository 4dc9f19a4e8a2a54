#include "mvsuq/evaluation.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvsuq/kdtree.hpp"
#include "mvsuq/parallel.hpp"

namespace mvsuq {

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

void apply_transform(PointCloud& cloud, const RigidTransform& t) {
  for (auto& p : cloud.xyz) p = t.apply(p);
}

RigidTransform estimate_rigid(const std::vector<Eigen::Vector3d>& src,
                              const std::vector<Eigen::Vector3d>& dst, int min_rank) {
  if (src.size() != dst.size()) fail(Err::DimensionMismatch, "pair lists differ in length");
  const size_t n = src.size();
  if (n < 3) fail(Err::DegenerateGeometry, "rigid fit needs at least 3 pairs");

  Eigen::Vector3d sc = Eigen::Vector3d::Zero(), dc = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    sc += src[i];
    dc += dst[i];
  }
  sc /= (double)n;
  dc /= (double)n;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) cov += (src[i] - sc) * (dst[i] - dc).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < 3; ++i)
    if (sv[i] > 1e-12 * std::max(sv[0], 1e-300)) ++rank;
  if (rank < min_rank) fail(Err::DegenerateGeometry, "cross-covariance rank below " +
                                                         std::to_string(min_rank));

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = dc - t.rotation * sc;
  return t;
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target, int max_iters,
                       double conv_tol, int threads) {
  if (source.empty() || target.empty()) fail(Err::EmptyCloud, "icp needs two non-empty clouds");

  const KdTree tree(target.xyz);
  const size_t n = source.size();
  std::vector<Eigen::Vector3d> moved(n);
  std::vector<int> corr(n);
  std::vector<double> dist2(n);
  std::vector<size_t> order(n);

  IcpResult res;
  double prev_rms = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    parallel_for(0, (int64_t)n, threads, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) {
        moved[i] = res.transform.apply(source.xyz[i]);
        const auto [idx, d2] = tree.nearest(moved[i]);
        corr[i] = idx;
        dist2[i] = d2;
      }
    });

    const size_t keep = n - n / 10;
    std::iota(order.begin(), order.end(), (size_t)0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return dist2[a] != dist2[b] ? dist2[a] < dist2[b] : a < b;
    });

    std::vector<Eigen::Vector3d> s, d;
    s.reserve(keep);
    d.reserve(keep);
    for (size_t i = 0; i < keep; ++i) {
      s.push_back(source.xyz[order[i]]);
      d.push_back(target.xyz[(size_t)corr[order[i]]]);
    }

    res.transform = estimate_rigid(s, d, 3);
    double sq = 0;
    for (size_t i = 0; i < keep; ++i) sq += (res.transform.apply(s[i]) - d[i]).squaredNorm();
    res.rms = std::sqrt(sq / (double)keep);
    res.iterations = iter + 1;
    if (std::abs(prev_rms - res.rms) < conv_tol) break;
    prev_rms = res.rms;
  }
  return res;
}

std::vector<double> per_point_error(const PointCloud& cloud, const PointCloud& reference,
                                    int threads) {
  if (reference.empty()) fail(Err::EmptyReference, "reference cloud is empty");
  std::vector<double> err(cloud.size());
  if (cloud.empty()) return err;
  const KdTree tree(reference.xyz);
  parallel_for(0, (int64_t)cloud.size(), threads, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) err[i] = std::sqrt(tree.nearest(cloud.xyz[i]).second);
  });
  return err;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd ms;
  ms.count = values.size();
  if (values.empty()) return ms;
  double sum = 0;
  for (double v : values) sum += v;
  ms.mean = sum / (double)values.size();
  double sq = 0;
  for (double v : values) sq += (v - ms.mean) * (v - ms.mean);
  ms.stddev = std::sqrt(sq / (double)values.size());
  return ms;
}

namespace {

void check_edges(const std::vector<double>& edges, bool open_last) {
  const size_t least = open_last ? 1 : 2;
  if (edges.size() < least) fail(Err::NonMonotonicEdges, "too few bin edges");
  for (size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) fail(Err::NonMonotonicEdges, "edges must strictly increase");
}

// -1 when the value falls outside every bin.
int find_bin(const std::vector<double>& edges, bool open_last, double v) {
  if (!std::isfinite(v) || v < edges.front()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const int idx = (int)(it - edges.begin()) - 1;
  if (idx == (int)edges.size() - 1 && !open_last) return -1;
  return idx;
}

}  // namespace

BinnedErrorStats bin_by_metric(const std::vector<double>& metric,
                               const std::vector<double>& errors, const std::string& metric_name,
                               const std::vector<double>& edges, bool open_last) {
  if (metric.size() != errors.size()) fail(Err::DimensionMismatch, "metric/error length mismatch");
  check_edges(edges, open_last);

  const size_t nbins = edges.size() - 1 + (open_last ? 1 : 0);
  BinnedErrorStats out;
  out.metric_name = metric_name;
  out.bins.resize(nbins);
  for (size_t b = 0; b < nbins; ++b) {
    out.bins[b].lo = edges[b];
    out.bins[b].hi = b + 1 < edges.size() ? edges[b + 1] : std::numeric_limits<double>::infinity();
  }

  std::vector<double> sum(nbins, 0), sq(nbins, 0);
  for (size_t i = 0; i < metric.size(); ++i) {
    if (!std::isfinite(errors[i])) continue;
    const int b = find_bin(edges, open_last, metric[i]);
    if (b < 0) continue;
    out.bins[b].count++;
    sum[b] += errors[i];
    sq[b] += errors[i] * errors[i];
  }
  for (size_t b = 0; b < nbins; ++b) out.total += out.bins[b].count;
  for (size_t b = 0; b < nbins; ++b) {
    auto& bin = out.bins[b];
    if (bin.count == 0) continue;
    bin.mae = sum[b] / (double)bin.count;
    bin.stddev = std::sqrt(std::max(0.0, sq[b] / (double)bin.count - bin.mae * bin.mae));
    bin.proportion = (double)bin.count / (double)out.total;
  }
  return out;
}

std::vector<double> uniform_edges(double lo, double hi, double width) {
  if (!(width > 0) || !(hi > lo)) fail(Err::ConfigError, "bad uniform bin request");
  std::vector<double> edges;
  const int n = (int)std::ceil((hi - lo) / width - 1e-12);
  for (int i = 0; i <= n; ++i) edges.push_back(lo + width * i);
  return edges;
}

Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges,
                    bool open_last) {
  check_edges(edges, open_last);
  Histogram h;
  h.edges = edges;
  h.open_last = open_last;
  h.counts.assign(edges.size() - 1 + (open_last ? 1 : 0), 0);
  for (double v : values) {
    const int b = find_bin(edges, open_last, v);
    if (b < 0) continue;
    h.counts[(size_t)b]++;
    h.total++;
  }
  return h;
}

ErrorSplit split_by_error(const PointCloud& cloud, double threshold) {
  if (!(threshold > 0)) fail(Err::ConfigError, "split threshold must be positive");
  if (cloud.error_m.size() != cloud.size())
    fail(Err::DimensionMismatch, "cloud has no per-point errors");

  std::vector<size_t> lo, hi;
  for (size_t i = 0; i < cloud.size(); ++i)
    (cloud.error_m[i] < threshold ? lo : hi).push_back(i);

  ErrorSplit out;
  out.low = select_rows(cloud, lo);
  out.high = select_rows(cloud, hi);

  const std::vector<double> ray_edges = uniform_edges(3, 11, 1);
  const std::vector<double> ang_edges = uniform_edges(0, 60, 5);
  auto rays_of = [](const PointCloud& c) {
    return std::vector<double>(c.num_rays.begin(), c.num_rays.end());
  };
  auto angles_of = [](const PointCloud& c) {
    return std::vector<double>(c.median_angle_deg.begin(), c.median_angle_deg.end());
  };
  out.low_rays = histogram(rays_of(out.low), ray_edges, true);
  out.high_rays = histogram(rays_of(out.high), ray_edges, true);
  out.low_angles = histogram(angles_of(out.low), ang_edges, true);
  out.high_angles = histogram(angles_of(out.high), ang_edges, true);
  return out;
}

PairCompositionStats pair_composition_stats(const std::vector<StereoPairCloud>& pairs,
                                            const PointCloud& mvs, const PointCloud& reference,
                                            int threads) {
  if (mvs.empty()) fail(Err::EmptyCloud, "dense cloud is empty");
  if (reference.empty()) fail(Err::EmptyReference, "reference cloud is empty");
  const KdTree mvs_tree(mvs.xyz);
  const KdTree ref_tree(reference.xyz);

  std::vector<double> to_mvs[3], to_ref[3];
  for (const auto& pair : pairs) {
    const int c = (int)pair.composition;
    const size_t n = pair.cloud.size();
    const size_t at = to_mvs[c].size();
    to_mvs[c].resize(at + n);
    to_ref[c].resize(at + n);
    parallel_for(0, (int64_t)n, threads, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) {
        to_mvs[c][at + i] = std::sqrt(mvs_tree.nearest(pair.cloud.xyz[i]).second);
        to_ref[c][at + i] = std::sqrt(ref_tree.nearest(pair.cloud.xyz[i]).second);
      }
    });
  }

  PairCompositionStats out;
  for (int c = 0; c < 3; ++c) {
    const MeanStd m = mean_std(to_mvs[c]);
    const MeanStd r = mean_std(to_ref[c]);
    out.rows[c].count = m.count;
    if (m.count == 0) continue;  // empty class stays a null row
    out.rows[c].mean_vs_mvs = m.mean;
    out.rows[c].std_vs_mvs = m.stddev;
    out.rows[c].mean_vs_ref = r.mean;
    out.rows[c].std_vs_ref = r.stddev;
  }
  return out;
}

Histogram intersection_angle_histogram(const std::vector<double>& angles_deg) {
  return histogram(angles_deg, uniform_edges(0, 60, 5), true);
}

Histogram intersection_angle_histogram(const std::vector<StereoPairCloud>& pairs,
                                       std::optional<PairComposition> filter) {
  std::vector<double> angles;
  for (const auto& pair : pairs) {
    if (filter && pair.composition != *filter) continue;
    if (pair.cloud.median_angle_deg.size() != pair.cloud.size())
      fail(Err::DimensionMismatch, "stereo pair cloud lacks intersection angles");
    angles.insert(angles.end(), pair.cloud.median_angle_deg.begin(),
                  pair.cloud.median_angle_deg.end());
  }
  return intersection_angle_histogram(angles);
}

OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(Err::DimensionMismatch, "x/y length mismatch");
  std::vector<double> xs, ys;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    xs.push_back(x[i]);
    ys.push_back(y[i]);
  }
  if (xs.size() < 3) fail(Err::InsufficientBins, "line fit needs at least 3 finite bins");

  const double n = (double)xs.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }

  OlsFit fit;
  if (sxx <= 0) return fit;  // vertical data: no line of y on x
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy > 0) fit.r2 = (sxy * sxy) / (sxx * syy);
  return fit;
}

double correlation_r2(const std::vector<double>& x, const std::vector<double>& y) {
  return ols_fit(x, y).r2;
}

}  // namespace mvsuq
