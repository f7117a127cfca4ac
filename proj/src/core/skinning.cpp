#include "skinning.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"

namespace boneforge {

std::vector<LeafFrame> leaf_frames(const Rig& rig, const Pose& pose) {
  const auto world = compose_world(rig, pose);
  std::vector<LeafFrame> out;
  for (BoneId id : rig.leaf_bones()) out.push_back({id, world.at(id), rig.bone(id).scale});
  return out;
}

double mahalanobis(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale) {
  const Vec3 local = bone_world.rotation.transpose() * (x - bone_world.translation);
  return local.cwiseQuotient(scale).norm();
}

MahalanobisGrad mahalanobis_grad(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale) {
  MahalanobisGrad g;
  const Vec3 v = x - bone_world.translation;
  const Vec3 y = bone_world.rotation.transpose() * v;
  const Vec3 z = y.cwiseQuotient(scale);
  g.distance = z.norm();
  if (g.distance <= 1e-300) return g;
  const Vec3 rdz = bone_world.rotation * z.cwiseQuotient(scale);  // R D z
  g.d_center = -rdz / g.distance;
  g.d_rotation = rdz.cross(v) / g.distance;
  g.d_scale = -(z.array().square() / scale.array()).matrix() / g.distance;
  return g;
}

Eigen::VectorXd skinning_weights(const Vec3& x, std::span<const LeafFrame> leaves, std::span<const double> delta) {
  const auto n = static_cast<Eigen::Index>(leaves.size());
  if (!delta.empty() && delta.size() != leaves.size()) throw ArgumentError("delta weights do not match leaf count");
  Eigen::VectorXd logits(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    logits[b] = -mahalanobis(x, leaves[b].world, leaves[b].scale) + (delta.empty() ? 0.0 : delta[b]);
  }
  const double shift = n > 0 ? logits.maxCoeff() : 0.0;
  Eigen::VectorXd w = (logits.array() - shift).exp().matrix();
  return w / w.sum();
}

Eigen::VectorXd skinning_weights(const Vec3& x, const Rig& rig, const Pose& pose, std::span<const double> delta) {
  const auto frames = leaf_frames(rig, pose);
  return skinning_weights(x, frames, delta);
}

std::vector<RigidTransform> warp_transforms(std::span<const LeafFrame> from, std::span<const LeafFrame> to) {
  std::vector<RigidTransform> out;
  out.reserve(from.size());
  for (std::size_t b = 0; b < from.size(); ++b) out.push_back(to[b].world * from[b].world.inverse());
  return out;
}

Vec3 blend_apply(std::span<const RigidTransform> transforms, const Eigen::Ref<const Eigen::VectorXd>& weights,
                 const Vec3& x) {
  Mat3 r = Mat3::Zero();
  Vec3 t = Vec3::Zero();
  for (std::size_t b = 0; b < transforms.size(); ++b) {
    const double w = weights[static_cast<Eigen::Index>(b)];
    r += w * transforms[b].rotation;
    t += w * transforms[b].translation;
  }
  return r * x + t;
}

Vec3 backward_warp(const Vec3& x, const Rig& rig, const Pose& pose_t, const Pose& pose_c) {
  const auto frames_t = leaf_frames(rig, pose_t);
  const auto frames_c = leaf_frames(rig, pose_c);
  const auto to_canonical = warp_transforms(frames_t, frames_c);
  return blend_apply(to_canonical, skinning_weights(x, frames_t), x);
}

Vec3 forward_warp(const Vec3& x_c, const Rig& rig, const Pose& pose_c, const Pose& pose_t) {
  const auto frames_c = leaf_frames(rig, pose_c);
  const auto frames_t = leaf_frames(rig, pose_t);
  const auto to_frame = warp_transforms(frames_c, frames_t);
  return blend_apply(to_frame, skinning_weights(x_c, frames_c), x_c);
}

double cycle_error(const Vec3& x, const Rig& rig, const Pose& pose_t, const Pose& pose_c) {
  const Vec3 x_c = backward_warp(x, rig, pose_t, pose_c);
  return (forward_warp(x_c, rig, pose_c, pose_t) - x).norm();
}

SkinnedSurface bind_points(const Rig& rig, const std::vector<Vec3>& points, const DeltaWeights* delta) {
  SkinnedSurface s;
  s.vertices = points;
  s.leaves = rig.leaf_bones();
  const auto frames = leaf_frames(rig, rig.canonical_pose());
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto l = static_cast<Eigen::Index>(s.leaves.size());
  if (delta && (delta->table.rows() != n || delta->table.cols() != l)) {
    throw ArgumentError("delta weight table must be vertex x leaf");
  }
  if (delta && !delta->table.allFinite()) throw DataError("delta weights must be finite");
  s.weights.resize(n, l);
  parallel_for(points.size(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::span<const double> d;
    if (delta) d = std::span<const double>(delta->table.row(row).data(), static_cast<std::size_t>(l));
    s.weights.row(row) = skinning_weights(points[i], frames, d).transpose();
  });
  return s;
}

SkinnedSurface bind_surface(const Rig& rig, const TriMesh& mesh, const DeltaWeights* delta) {
  validate(mesh);
  SkinnedSurface s = bind_points(rig, mesh.vertices, delta);
  s.triangles = mesh.triangles;
  return s;
}

void check_surface_matches(const SkinnedSurface& surface, const Rig& rig) {
  if (surface.leaves != rig.leaf_bones()) throw DataError("skinned surface was bound to a different leaf set");
}

std::vector<Vec3> deform(const SkinnedSurface& surface, const Rig& rig, const Pose& pose_t) {
  check_surface_matches(surface, rig);
  const auto frames_c = leaf_frames(rig, rig.canonical_pose());
  const auto frames_t = leaf_frames(rig, pose_t);
  const auto to_frame = warp_transforms(frames_c, frames_t);
  std::vector<Vec3> out(surface.vertices.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = blend_apply(to_frame, surface.weights.row(static_cast<Eigen::Index>(i)).transpose(), surface.vertices[i]);
  });
  return out;
}

TriMesh deformed_mesh(const SkinnedSurface& surface, const Rig& rig, const Pose& pose_t) {
  return TriMesh{deform(surface, rig, pose_t), surface.triangles, std::nullopt};
}

}  // namespace boneforge
