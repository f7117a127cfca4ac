#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kdtree.hpp"
#include "mesh.hpp"

namespace boneforge {

// Nearest-neighbor distance from every point of `from` into `to_index`.
std::vector<double> nn_distances(std::span<const Vec3> from, const KdTree& to_index);

// Symmetric Chamfer distance: (mean_a d(a,B) + mean_b d(b,A)) / 2, with
// Euclidean (not squared) distances. Throws ArgumentError for empty inputs.
double chamfer(const PointCloud& a, const PointCloud& b);
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

// F-score in percent at threshold = ratio * longest edge of `gt_box`.
// Precision counts predicted points within the threshold of the ground
// truth, recall the reverse; a point counts when its distance is < threshold.
struct FScore {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};
FScore f_score(const PointCloud& predicted, const PointCloud& ground_truth, const Aabb& gt_box, double ratio = 0.02);

// x -> scale * R x + t.
struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Similarity then(const Similarity& next) const {
    return {next.rotation * rotation, next.scale * (next.rotation * translation) + next.translation,
            next.scale * scale};
  }
};

struct IcpOptions {
  int max_iters = 50;
  double tol = 1e-10;            // stop when the residual improves by less than this (relative)
  bool estimate_scale = true;
  double trim_fraction = 0.0;    // drop this fraction of worst correspondences per iteration
  bool prealign = true;          // centroid and RMS-radius alignment before iterating
};

struct IcpResult {
  Similarity transform;          // maps the original source onto the destination
  std::vector<Vec3> aligned;
  std::vector<double> residuals; // mean squared correspondence distance, one per iteration
  int iterations = 0;
};

// Point-to-point ICP with closed-form similarity updates. Throws DataError
// for sources with fewer than 3 points or with collinear/coincident points.
IcpResult icp_align(const PointCloud& src, const PointCloud& dst, const IcpOptions& options = {});

// Least-squares similarity mapping `from[i]` onto `to[i]`.
Similarity fit_similarity(std::span<const Vec3> from, std::span<const Vec3> to, bool with_scale);

struct EvalOptions {
  std::size_t samples = 10000;  // per mesh; meshes without faces use their vertices
  std::uint64_t seed = 0;
  bool icp = true;
  double fscore_ratio = 0.02;
};

struct EvalResult {
  double cd = 0.0;
  FScore f;
  std::size_t n_src = 0;
  std::size_t n_dst = 0;
};

// Surface samples of both meshes (same seed), optional ICP alignment of the
// prediction onto the ground truth, then Chamfer distance and F-score with
// the threshold taken from the ground-truth mesh box.
EvalResult evaluate_meshes(const TriMesh& predicted, const TriMesh& ground_truth, const EvalOptions& options = {});

}  // namespace boneforge
