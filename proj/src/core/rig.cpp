#include "rig.hpp"

#include <algorithm>
#include <set>

#include "errors.hpp"

namespace boneforge {

std::string to_string(BoneId id) { return std::to_string(id.value); }

bool operator==(const Bone& a, const Bone& b) {
  return a.id == b.id && a.local == b.local && a.scale == b.scale && a.parent == b.parent &&
         a.children == b.children;
}

bool operator==(const Rig& a, const Rig& b) {
  return a.bones_ == b.bones_ && a.roots_ == b.roots_;
}

Rig Rig::from_bones(std::vector<Bone> bones, std::optional<BoneId> next_id) {
  Rig rig;
  if (bones.empty()) throw DataError("rig has no bones");

  std::uint32_t max_id = 0;
  for (auto& b : bones) {
    if (rig.bones_.count(b.id)) throw DataError("duplicate bone id " + to_string(b.id));
    if (!(b.scale.array() > 0.0).all() || !b.scale.allFinite()) {
      throw DataError("bone " + to_string(b.id) + " has nonpositive scale");
    }
    if (!is_finite(b.local)) throw DataError("bone " + to_string(b.id) + " has non-finite transform");
    if (!is_rotation(b.local.rotation)) {
      throw DataError("bone " + to_string(b.id) + " rotation is not orthonormal");
    }
    max_id = std::max(max_id, b.id.value);
    b.children.clear();
    rig.bones_.emplace(b.id, b);
  }

  // Children follow the input order; parents must exist.
  for (const auto& b : bones) {
    if (b.parent) {
      auto it = rig.bones_.find(*b.parent);
      if (it == rig.bones_.end()) {
        throw DataError("bone " + to_string(b.id) + " references missing parent " + to_string(*b.parent));
      }
      if (*b.parent == b.id) throw DataError("cycle in parent links at bone " + to_string(b.id));
      it->second.children.push_back(b.id);
    } else {
      rig.roots_.push_back(b.id);
    }
  }

  // Walking down from the roots must reach every bone exactly once; anything
  // unreached sits on a parent cycle.
  std::vector<std::pair<BoneId, int>> stack;
  for (auto it = rig.roots_.rbegin(); it != rig.roots_.rend(); ++it) stack.emplace_back(*it, 1);
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    rig.depth_[id] = depth;
    const auto& ch = rig.bones_.at(id).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.emplace_back(*it, depth + 1);
  }
  if (rig.depth_.size() != rig.bones_.size()) {
    for (const auto& [id, b] : rig.bones_) {
      if (!rig.depth_.count(id)) throw DataError("cycle in parent links involving bone " + to_string(id));
    }
  }

  const BoneId minimum_next{max_id + 1};
  rig.next_id_ = next_id ? std::max(*next_id, minimum_next) : minimum_next;
  return rig;
}

const Bone& Rig::bone(BoneId id) const {
  auto it = bones_.find(id);
  if (it == bones_.end()) throw DataError("unknown bone id " + to_string(id));
  return it->second;
}

int Rig::depth_of(BoneId id) const {
  auto it = depth_.find(id);
  if (it == depth_.end()) throw DataError("unknown bone id " + to_string(id));
  return it->second;
}

int Rig::max_depth() const {
  int d = 0;
  for (const auto& [id, depth] : depth_) d = std::max(d, depth);
  return d;
}

std::vector<BoneId> Rig::depth_first() const {
  std::vector<BoneId> order;
  order.reserve(bones_.size());
  std::vector<BoneId> stack(roots_.rbegin(), roots_.rend());
  while (!stack.empty()) {
    BoneId id = stack.back();
    stack.pop_back();
    order.push_back(id);
    const auto& ch = bones_.at(id).children;
    stack.insert(stack.end(), ch.rbegin(), ch.rend());
  }
  return order;
}

std::vector<BoneId> Rig::leaf_bones() const {
  std::vector<BoneId> leaves;
  for (BoneId id : depth_first()) {
    if (bones_.at(id).children.empty()) leaves.push_back(id);
  }
  return leaves;
}

std::vector<BoneId> Rig::chain_to(BoneId id) const {
  std::vector<BoneId> chain;
  std::optional<BoneId> cur = id;
  while (cur) {
    chain.push_back(*cur);
    cur = bone(*cur).parent;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

std::vector<BoneId> Rig::subtree(BoneId id) const {
  std::vector<BoneId> out;
  std::vector<BoneId> stack{id};
  bone(id);
  while (!stack.empty()) {
    BoneId cur = stack.back();
    stack.pop_back();
    out.push_back(cur);
    const auto& ch = bones_.at(cur).children;
    stack.insert(stack.end(), ch.rbegin(), ch.rend());
  }
  return out;
}

Pose Rig::canonical_pose() const {
  Pose pose;
  for (const auto& [id, b] : bones_) pose.locals.emplace(id, b.local);
  return pose;
}

Rig Rig::with_local(BoneId id, const RigidTransform& local) const {
  Rig copy = *this;
  auto it = copy.bones_.find(id);
  if (it == copy.bones_.end()) throw DataError("unknown bone id " + to_string(id));
  it->second.local = local;
  return copy;
}

Rig Rig::with_scale(BoneId id, const Vec3& scale) const {
  if (!(scale.array() > 0.0).all()) throw DataError("nonpositive scale for bone " + to_string(id));
  Rig copy = *this;
  auto it = copy.bones_.find(id);
  if (it == copy.bones_.end()) throw DataError("unknown bone id " + to_string(id));
  it->second.scale = scale;
  return copy;
}

void check_pose_covers(const Rig& rig, const Pose& pose) {
  for (const auto& [id, b] : rig.bones()) {
    if (!pose.locals.count(id)) throw DataError("pose is missing bone " + to_string(id));
  }
  if (pose.locals.size() != rig.size()) {
    for (const auto& [id, t] : pose.locals) {
      if (!rig.contains(id)) throw DataError("pose references unknown bone " + to_string(id));
    }
  }
}

std::map<BoneId, RigidTransform> compose_world(const Rig& rig, const Pose& pose) {
  check_pose_covers(rig, pose);
  std::map<BoneId, RigidTransform> world;
  for (BoneId id : rig.depth_first()) {
    const Bone& b = rig.bone(id);
    const RigidTransform& local = pose.locals.at(id);
    world[id] = b.parent ? world.at(*b.parent) * local : local;
  }
  return world;
}

namespace {

// Bones in depth-first order, which is the order from_bones needs to
// reproduce the same root and child ordering.
std::vector<Bone> ordered_bones(const Rig& rig) {
  std::vector<Bone> out;
  for (BoneId id : rig.depth_first()) out.push_back(rig.bone(id));
  return out;
}

}  // namespace

Rig add_child_bones(const Rig& rig, BoneId parent, std::span<const ChildInit> init) {
  if (!rig.contains(parent)) throw DataError("unknown parent bone id " + to_string(parent));
  if (init.empty()) throw ArgumentError("add_child_bones needs at least one child");

  const RigidTransform parent_world = compose_world(rig, rig.canonical_pose()).at(parent);
  const RigidTransform to_parent = parent_world.inverse();

  std::vector<Bone> bones = ordered_bones(rig);
  std::uint32_t next = rig.next_id().value;
  for (const auto& c : init) {
    Bone b;
    b.id = BoneId{next++};
    b.parent = parent;
    b.local = RigidTransform{c.rotation, to_parent.apply(c.center)};
    b.scale = c.scale;
    bones.push_back(b);
  }
  return Rig::from_bones(std::move(bones), BoneId{next});
}

Rig delete_subtree(const Rig& rig, BoneId id) {
  const std::vector<BoneId> doomed = rig.subtree(id);
  if (doomed.size() == rig.size()) throw DataError("deleting bone " + to_string(id) + " would leave the rig empty");
  std::set<BoneId> drop(doomed.begin(), doomed.end());
  std::vector<Bone> bones;
  for (auto& b : ordered_bones(rig)) {
    if (!drop.count(b.id)) bones.push_back(std::move(b));
  }
  return Rig::from_bones(std::move(bones), rig.next_id());
}

std::vector<BoneId> leaf_bones(const Rig& rig) { return rig.leaf_bones(); }

Pose conform_pose(const Rig& rig, const Pose& pose) {
  Pose out;
  out.frame = pose.frame;
  for (const auto& [id, b] : rig.bones()) {
    auto it = pose.locals.find(id);
    out.locals.emplace(id, it != pose.locals.end() ? it->second : b.local);
  }
  return out;
}

}  // namespace boneforge
