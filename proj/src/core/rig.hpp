#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transform.hpp"

namespace boneforge {

struct BoneId {
  std::uint32_t value = 0;
  friend auto operator<=>(const BoneId&, const BoneId&) = default;
};

std::string to_string(BoneId id);

// An ellipsoidal bone. `local` is the canonical transform relative to the
// parent frame (world for roots); its translation is the bone center and
// `scale` holds the semi-axis lengths along the bone's local axes.
struct Bone {
  BoneId id;
  RigidTransform local;
  Vec3 scale = Vec3::Ones();
  std::optional<BoneId> parent;
  std::vector<BoneId> children;
};

// Per-bone local transforms for one frame, or the canonical pose when
// `frame` is empty.
struct Pose {
  std::optional<std::int64_t> frame;
  std::map<BoneId, RigidTransform> locals;

  bool is_canonical() const { return !frame.has_value(); }
};

// Parameters for a bone created by add_child_bones. `center` is in world
// coordinates of the parent's canonical frame chain; `rotation` is local.
struct ChildInit {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 scale = Vec3::Ones();
};

// Immutable bone tree. Edits return new rigs.
class Rig {
 public:
  // Validates ids, parent links, acyclicity, scales and rotations. The order
  // of `bones` fixes root order and per-parent child order.
  static Rig from_bones(std::vector<Bone> bones, std::optional<BoneId> next_id = std::nullopt);

  const Bone& bone(BoneId id) const;
  bool contains(BoneId id) const { return bones_.count(id) != 0; }
  std::size_t size() const { return bones_.size(); }
  int depth_of(BoneId id) const;
  int max_depth() const;
  const std::vector<BoneId>& roots() const { return roots_; }
  const std::map<BoneId, Bone>& bones() const { return bones_; }

  // Depth-first, roots in order, children in stored order.
  std::vector<BoneId> depth_first() const;
  std::vector<BoneId> leaf_bones() const;
  bool is_leaf(BoneId id) const { return bone(id).children.empty(); }
  // Ancestor chain from the root down to `id`, inclusive.
  std::vector<BoneId> chain_to(BoneId id) const;
  std::vector<BoneId> subtree(BoneId id) const;

  BoneId next_id() const { return next_id_; }

  // The rig's own canonical locals as a pose.
  Pose canonical_pose() const;

  // Same topology, different canonical locals or scales (ids unchanged).
  Rig with_local(BoneId id, const RigidTransform& local) const;
  Rig with_scale(BoneId id, const Vec3& scale) const;

  friend bool operator==(const Rig& a, const Rig& b);

 private:
  Rig() = default;
  std::map<BoneId, Bone> bones_;
  std::vector<BoneId> roots_;
  std::map<BoneId, int> depth_;
  BoneId next_id_{0};
};

bool operator==(const Bone& a, const Bone& b);

// Throws DataError unless pose holds exactly the rig's bone ids.
void check_pose_covers(const Rig& rig, const Pose& pose);

// World transform of every bone: root local left-multiplied down the chain.
std::map<BoneId, RigidTransform> compose_world(const Rig& rig, const Pose& pose);

Rig add_child_bones(const Rig& rig, BoneId parent, std::span<const ChildInit> init);

// Removes `id` and its descendants. Throws DataError if nothing would remain.
Rig delete_subtree(const Rig& rig, BoneId id);

std::vector<BoneId> leaf_bones(const Rig& rig);

// Pose restricted/extended to the rig: bones missing from `pose` take their
// canonical local, bones no longer in the rig are dropped.
Pose conform_pose(const Rig& rig, const Pose& pose);

}  // namespace boneforge

template <>
struct std::hash<boneforge::BoneId> {
  std::size_t operator()(boneforge::BoneId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
