#pragma once

// Random instances and brute-force reference implementations shared by the
// unit and acceptance tests. The references deliberately avoid the library's
// own helpers: dense 4x4 matrices, explicit loops, no spatial index.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "losses.hpp"
#include "occupancy.hpp"
#include "random.hpp"
#include "rig.hpp"
#include "skinning.hpp"

namespace bft {

using namespace boneforge;

Mat3 random_rotation(Rng& rng);
RigidTransform random_transform(Rng& rng, double translation = 1.0);

// Random tree of `n` bones with depth <= max_depth; ids 0..n-1 in creation order.
Rig random_rig(Rng& rng, int n, int max_depth, double scale_lo = 0.2, double scale_hi = 0.8);
Pose random_pose(Rng& rng, const Rig& rig, double translation = 1.0);

// Leaves with world frames spread in a box of half-size `spread`.
std::vector<LeafFrame> random_leaves(Rng& rng, int n, double spread, double scale_lo, double scale_hi);

std::vector<Vec3> random_points(Rng& rng, int n, double half_size, const Vec3& center = Vec3::Zero());

// ---- oracles ----------------------------------------------------------------

// Product of dense 4x4 local matrices from the root down to `id`.
Mat4 dense_world(const Rig& rig, const Pose& pose, BoneId id);

// sqrt((x - t)^T R S R^T (x - t)) with S = diag(1 / s^2), as a dense quadratic form.
double dense_mahalanobis(const Vec3& x, const Mat4& world, const Vec3& scale);

// Plain softmax of -d_M (+ delta) without shifting.
std::vector<double> plain_softmax_weights(const Vec3& x, std::span<const Mat4> worlds, std::span<const Vec3> scales,
                                          std::span<const double> delta = {});

// Blends the 4x4 per-leaf maps to[b] * inverse(from[b]) with weights evaluated
// at x under `weight_worlds` and applies the blended matrix to x.
Vec3 dense_lbs(const Vec3& x, std::span<const Mat4> from, std::span<const Mat4> to, std::span<const Mat4> weight_worlds,
               std::span<const Vec3> scales);

// Leaf-order dense worlds and scales for a rig pose.
std::vector<Mat4> dense_leaf_worlds(const Rig& rig, const Pose& pose);
std::vector<Vec3> leaf_scales(const Rig& rig);

// Exhaustive minimum of d_M - gamma over the given frames.
double brute_unified(const Vec3& x, std::span<const Mat4> worlds, std::span<const Vec3> scales, double gamma);

// Symmetric mean nearest distance by a double loop.
double brute_chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

// Lloyd iterations written from scratch: nearest center (lowest index on
// ties), mean update, empty clusters keep their center.
std::vector<Vec3> brute_lloyd(std::span<const Vec3> points, std::vector<Vec3> centers, int max_iters);

// ---- finite differences ---------------------------------------------------

// Leaf parameters in the loss gradient chart: 9 per leaf (center, world
// rotation increment, scale).
std::vector<LeafFrame> perturb_leaf(std::span<const LeafFrame> leaves, std::size_t leaf, int param, double h);
Eigen::VectorXd flatten(const std::vector<BoneGradient>& g);
Eigen::VectorXd central_difference(std::size_t dim, const std::function<double(std::size_t, double)>& f, double h);
// max |a - b| / max(|b|_inf, floor).
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor = 1e-8);

// ---- misc -------------------------------------------------------------------

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);
std::string read_file(const std::filesystem::path& p);

}  // namespace bft
