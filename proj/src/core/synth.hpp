#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "occupancy.hpp"
#include "skinning.hpp"

namespace boneforge {

enum class SynthKind { Chain, Quadruped, Dumbbell };

std::string to_string(SynthKind kind);
// Accepts "chain-<k>", "quadruped", "dumbbell". Throws ArgumentError.
std::pair<SynthKind, int> parse_synth_kind(const std::string& name);

struct SynthSpec {
  SynthKind kind = SynthKind::Chain;
  int chain_k = 3;
  int n_frames = 1;
  std::uint64_t seed = 0;
  double noise = 0.0;           // per-frame vertex jitter sigma
  double max_bend_deg = 30.0;   // 0 gives rest poses on every frame
  bool flat = false;            // quadruped only: leaves promoted to roots
  int mask_size = 48;
  bool render_masks = true;
  OccupancyConfig occupancy;

  void validate() const;
};

struct SynthScenario {
  SynthSpec spec;
  Rig rig;
  std::vector<Pose> poses;  // one per frame
  TriMesh canonical;
  SkinnedSurface skinned;
  std::vector<TriMesh> frames;
  std::vector<Camera> cameras;
  std::vector<std::vector<MaskImage>> masks;  // frame x view
};

SynthScenario make_scenario(const SynthSpec& spec);

// Closed tube of radius r from a to b with hemispherical caps.
TriMesh capsule_mesh(const Vec3& a, const Vec3& b, double radius, int rings = 12, int segments = 16);
// Surface d_M = 1 of an ellipsoid.
TriMesh ellipsoid_mesh(const RigidTransform& frame, const Vec3& scale, int stacks = 12, int slices = 16);
// Axis-aligned box with every face split into n x n quads.
TriMesh box_mesh(const Vec3& lo, const Vec3& hi, int n = 6);

// Each leaf becomes a root at its canonical world transform; ids and scales
// are kept, so skinning weights are unchanged.
Rig flatten_rig(const Rig& rig);
// Pose for flatten_rig(rig) that puts every leaf at its world transform.
Pose flatten_pose(const Rig& rig, const Pose& pose);

// Every bone's local gets a random-axis rotation of exactly `magnitude`
// radians (left-multiplied) and a random-direction translation of length
// magnitude * largest semi-axis.
Pose perturb_pose(const Rig& rig, const Pose& pose, double magnitude, std::uint64_t seed);

// Front, side and top views framing `box`.
std::vector<Camera> default_cameras(const Aabb& box, int size);

}  // namespace boneforge
