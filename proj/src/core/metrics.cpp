#include "metrics.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "parallel.hpp"
#include "sampling.hpp"

namespace boneforge {

std::vector<double> nn_distances(std::span<const Vec3> from, const KdTree& to_index) {
  std::vector<double> out(from.size());
  parallel_for(from.size(), [&](std::size_t i) { out[i] = std::sqrt(to_index.nearest(from[i]).squared_distance); });
  return out;
}

namespace {

double ordered_mean(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw ArgumentError("chamfer distance needs two nonempty point sets");
  const KdTree ta(a);
  const KdTree tb(b);
  return 0.5 * (ordered_mean(nn_distances(a, tb)) + ordered_mean(nn_distances(b, ta)));
}

double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(a.points, b.points); }

FScore f_score(const PointCloud& predicted, const PointCloud& ground_truth, const Aabb& gt_box, double ratio) {
  if (predicted.points.empty() || ground_truth.points.empty()) throw ArgumentError("f-score needs nonempty point sets");
  FScore out;
  out.threshold = ratio * gt_box.longest_edge();
  const KdTree tp(predicted.points);
  const KdTree tg(ground_truth.points);
  auto fraction_within = [&](const std::vector<double>& d) {
    const auto hits = std::count_if(d.begin(), d.end(), [&](double x) { return x < out.threshold; });
    return static_cast<double>(hits) / static_cast<double>(d.size());
  };
  out.precision = fraction_within(nn_distances(predicted.points, tg));
  out.recall = fraction_within(nn_distances(ground_truth.points, tp));
  const double denom = out.precision + out.recall;
  out.f = denom > 0.0 ? 100.0 * 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

Similarity fit_similarity(std::span<const Vec3> from, std::span<const Vec3> to, bool with_scale) {
  if (from.size() != to.size() || from.empty()) throw ArgumentError("fit_similarity needs matched nonempty sets");
  Eigen::Matrix3Xd a(3, static_cast<Eigen::Index>(from.size()));
  Eigen::Matrix3Xd b(3, static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i) {
    a.col(static_cast<Eigen::Index>(i)) = from[i];
    b.col(static_cast<Eigen::Index>(i)) = to[i];
  }
  const Mat4 m = Eigen::umeyama(a, b, with_scale);
  Similarity s;
  const Mat3 sr = m.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = m.topRightCorner<3, 1>();
  return s;
}

IcpResult icp_align(const PointCloud& src, const PointCloud& dst, const IcpOptions& options) {
  const auto& sp = src.points;
  if (sp.size() < 3) throw DataError("ICP needs at least 3 source points");
  if (dst.points.empty()) throw DataError("ICP needs a nonempty destination");
  if (options.max_iters < 1) throw ArgumentError("ICP max_iters must be positive");
  if (options.trim_fraction < 0.0 || options.trim_fraction >= 1.0) throw ArgumentError("trim_fraction must be in [0,1)");

  // Degeneracy: the centered source must span at least a plane.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : sp) mean += p;
  mean /= static_cast<double>(sp.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : sp) cov += (p - mean) * (p - mean).transpose();
  const Vec3 sv = Eigen::JacobiSVD<Mat3>(cov).singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) throw DataError("ICP source points are collinear or coincident");

  IcpResult result;
  if (options.prealign) {
    Vec3 dmean = Vec3::Zero();
    for (const auto& p : dst.points) dmean += p;
    dmean /= static_cast<double>(dst.points.size());
    double s = 1.0;
    if (options.estimate_scale) {
      double rs = 0.0;
      double rd = 0.0;
      for (const auto& p : sp) rs += (p - mean).squaredNorm();
      for (const auto& p : dst.points) rd += (p - dmean).squaredNorm();
      rs /= static_cast<double>(sp.size());
      rd /= static_cast<double>(dst.points.size());
      if (rs > 0.0 && rd > 0.0) s = std::sqrt(rd / rs);
    }
    result.transform = Similarity{Mat3::Identity(), dmean - s * mean, s};
  }

  const KdTree tree(dst.points);
  std::vector<Vec3> moved(sp.size());
  std::vector<Neighbor> match(sp.size());
  std::vector<std::size_t> order(sp.size());
  for (int iter = 0; iter < options.max_iters; ++iter) {
    for (std::size_t i = 0; i < sp.size(); ++i) moved[i] = result.transform.apply(sp[i]);
    parallel_for(sp.size(), [&](std::size_t i) { match[i] = tree.nearest(moved[i]); });

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t keep = sp.size();
    if (options.trim_fraction > 0.0) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return match[a].squared_distance < match[b].squared_distance;
      });
      keep = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil((1.0 - options.trim_fraction) * sp.size())));
    }
    double residual = 0.0;
    std::vector<Vec3> from;
    std::vector<Vec3> to;
    from.reserve(keep);
    to.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const std::size_t i = order[k];
      residual += match[i].squared_distance;
      from.push_back(sp[i]);
      to.push_back(dst.points[match[i].index]);
    }
    residual /= static_cast<double>(keep);
    result.residuals.push_back(residual);
    result.iterations = iter + 1;

    const std::size_t n = result.residuals.size();
    if (n >= 2) {
      const double prev = result.residuals[n - 2];
      if (prev - residual <= options.tol * std::max(prev, 1e-300)) break;
    }
    if (residual <= 1e-30) break;
    result.transform = fit_similarity(from, to, options.estimate_scale);
  }
  result.aligned.resize(sp.size());
  for (std::size_t i = 0; i < sp.size(); ++i) result.aligned[i] = result.transform.apply(sp[i]);
  return result;
}

namespace {

PointCloud eval_points(const TriMesh& mesh, const EvalOptions& options) {
  if (mesh.triangles.empty() || surface_area(mesh) <= 0.0) return PointCloud{mesh.vertices, std::nullopt};
  return sample_surface(mesh, options.samples, options.seed);
}

}  // namespace

EvalResult evaluate_meshes(const TriMesh& predicted, const TriMesh& ground_truth, const EvalOptions& options) {
  if (options.samples == 0) throw ArgumentError("eval needs at least one sample");
  if (predicted.vertices.empty() || ground_truth.vertices.empty()) throw ArgumentError("eval meshes must be nonempty");
  PointCloud src = eval_points(predicted, options);
  const PointCloud dst = eval_points(ground_truth, options);
  if (options.icp) src.points = icp_align(src, dst).aligned;
  EvalResult r;
  r.cd = chamfer(src, dst);
  r.f = f_score(src, dst, bounds_of(ground_truth.vertices), options.fscore_ratio);
  r.n_src = src.points.size();
  r.n_dst = dst.points.size();
  return r;
}

}  // namespace boneforge
