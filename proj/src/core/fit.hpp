#pragma once

#include <span>
#include <string>
#include <vector>

#include "descent.hpp"
#include "losses.hpp"
#include "retarget.hpp"

namespace boneforge {

struct FitConfig {
  OccupancyConfig occupancy;
  // When render.volume is empty, the surface box inflated by a quarter of
  // its diagonal on every side is used and held fixed for the whole run.
  RenderSettings render;
  LossWeights weights;
  int max_steps = 200;
  double step_size = 1.0;
  double convergence_tol = 0.0;
  OptimizerKind optimizer = OptimizerKind::GradientDescent;

  void validate() const;
};

struct FitTerms {
  double bone_mask = 0.0;
  double overlap = 0.0;
  double cover = 0.0;
  double total = 0.0;
};

// Weighted objective at the given leaves, each term unweighted in FitTerms.
FitTerms fit_objective(std::span<const LeafFrame> leaves, std::span<const Vec3> surface,
                       std::span<const MaskImage> gt_views, const FitConfig& cfg);

struct FitResult {
  Rig rig;
  Pose pose;
  std::vector<DescentRecord> trace;  // weighted total per accepted step
  FitTerms initial;
  FitTerms final;
  std::string stop_reason;
};

// Gradient descent on the leaves' world centers, rotations and log-scales
// minimizing the weighted sum of bone mask, overlap and coverage losses.
// Non-leaf bones stay fixed. Canonical poses update the rig's locals, other
// poses update the pose's locals; scales always live on the rig. Throws
// ArgumentError for an empty surface or no views.
FitResult fit_bones(const Rig& rig, const Pose& pose, std::span<const Vec3> surface,
                    std::span<const MaskImage> gt_views, const FitConfig& cfg, const DescentObserver& observer = {});

struct GrowResult {
  Rig rig;
  std::vector<Pose> poses;
  std::vector<BoneId> new_bones;
  std::vector<BoneId> skipped;  // leaves owning fewer than k vertices
};

// Adds up to k children under every current leaf. Each leaf's vertices are
// those whose largest cached weight selects it; their canonical positions
// are clustered (k-means++ then Lloyd, seeded) and the cluster centers
// become child centers. Children get identity local rotations and half the
// parent's scale; existing poses give them their canonical locals.
GrowResult grow_depth(const Rig& rig, std::span<const Pose> poses, const SkinnedSurface& skinned,
                      std::size_t k_children, std::uint64_t seed);

// Adds k children under one bone, clustering the vertices whose largest
// cached weight selects a leaf of that bone's subtree. Same child
// initialization as grow_depth. Throws DataError when fewer than k vertices
// qualify.
GrowResult spawn_children(const Rig& rig, std::span<const Pose> poses, const SkinnedSurface& skinned, BoneId parent,
                          std::size_t k, std::uint64_t seed);

// Roots at k-means centers of `surface` with identity rotations and one
// shared isotropic scale of diagonal / (4 cbrt(n)).
Rig init_roots(std::span<const Vec3> surface, std::size_t n_roots, std::uint64_t seed);

struct DepthSummary {
  int depth = 0;
  std::size_t leaves = 0;
  FitTerms initial;
  FitTerms final;
  int steps = 0;
};

struct CoarseToFineConfig {
  int depths = 1;
  std::size_t k_children = 2;
  int steps_per_depth = 20000;
  std::uint64_t seed = 0;
  FitConfig fit;
};

struct CoarseToFineResult {
  Rig rig;
  Pose pose;
  std::vector<DepthSummary> summary;
};

// Fits at the current depth, grows, and repeats until `depths` levels have
// been fit. Works in the canonical pose against canonical-frame masks.
CoarseToFineResult coarse_to_fine(const Rig& rig, std::span<const Vec3> surface, std::span<const MaskImage> gt_views,
                                  const CoarseToFineConfig& cfg);

}  // namespace boneforge
