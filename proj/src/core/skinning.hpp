#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mesh.hpp"
#include "rig.hpp"

namespace boneforge {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// World placement of one leaf bone at some pose.
struct LeafFrame {
  BoneId id;
  RigidTransform world;
  Vec3 scale;
};

// Leaf bones in Rig::leaf_bones order, composed at `pose`.
std::vector<LeafFrame> leaf_frames(const Rig& rig, const Pose& pose);

// Ellipsoid-normalized distance: |diag(1/s) R^T (x - t)|, where (R, t) is
// the bone's world rotation and center. Equals 1 on the ellipsoid surface.
double mahalanobis(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale);

// Distance plus its derivatives with respect to the bone center, a
// world-frame rotation increment w (R -> exp(hat(w)) R, at w = 0), and the
// semi-axis lengths. Derivatives are zero at the center, where d is not
// differentiable.
struct MahalanobisGrad {
  double distance = 0.0;
  Vec3 d_center = Vec3::Zero();
  Vec3 d_rotation = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
};
MahalanobisGrad mahalanobis_grad(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale);

// Optional per-vertex log-domain offsets added before the softmax.
struct DeltaWeights {
  RowMatrix table;  // vertex x leaf
};

// Softmax of -d_M + delta over leaves, shifted by the max for stability.
// `delta` may be empty (all zeros) or hold one entry per leaf.
Eigen::VectorXd skinning_weights(const Vec3& x, std::span<const LeafFrame> leaves,
                                 std::span<const double> delta = {});
Eigen::VectorXd skinning_weights(const Vec3& x, const Rig& rig, const Pose& pose,
                                 std::span<const double> delta = {});

// Per-leaf maps between two poses: to.world * from.world^-1.
std::vector<RigidTransform> warp_transforms(std::span<const LeafFrame> from, std::span<const LeafFrame> to);

// Weighted linear blend of rigid transforms, applied to x.
Vec3 blend_apply(std::span<const RigidTransform> transforms, const Eigen::Ref<const Eigen::VectorXd>& weights,
                 const Vec3& x);

// Frame-space point to canonical space; weights evaluated at x under pose_t.
Vec3 backward_warp(const Vec3& x, const Rig& rig, const Pose& pose_t, const Pose& pose_c);
// Canonical point to frame space; weights evaluated at x_c under pose_c.
Vec3 forward_warp(const Vec3& x_c, const Rig& rig, const Pose& pose_c, const Pose& pose_t);

// |forward(backward(x)) - x|.
double cycle_error(const Vec3& x, const Rig& rig, const Pose& pose_t, const Pose& pose_c);

// Canonical mesh with skinning weights cached against the rig's leaves at
// the rig's canonical pose.
struct SkinnedSurface {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<BoneId> leaves;
  RowMatrix weights;  // vertex x leaf, rows on the simplex
};

SkinnedSurface bind_surface(const Rig& rig, const TriMesh& mesh, const DeltaWeights* delta = nullptr);
SkinnedSurface bind_points(const Rig& rig, const std::vector<Vec3>& points, const DeltaWeights* delta = nullptr);

// Throws DataError if the cached weights were computed for a different leaf set.
void check_surface_matches(const SkinnedSurface& surface, const Rig& rig);

// Forward-warps every cached vertex from the rig's canonical pose to pose_t.
// Vertices are processed in index order in fixed chunks; each output depends
// only on its own row, so the result is independent of the thread count.
std::vector<Vec3> deform(const SkinnedSurface& surface, const Rig& rig, const Pose& pose_t);
TriMesh deformed_mesh(const SkinnedSurface& surface, const Rig& rig, const Pose& pose_t);

}  // namespace boneforge
