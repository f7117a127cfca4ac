#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "descent.hpp"
#include "kdtree.hpp"
#include "skinning.hpp"

namespace boneforge {

struct LossWeights {
  double bone_mask = 0.1;
  double overlap = 0.001;
  double cover = 0.001;
  double data = 1.0;
};

struct OptimConfig {
  double step_size = 1.0;
  int max_steps = 200;
  LossWeights loss_weights;
  double convergence_tol = 1e-6;  // absolute objective threshold for early stop
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::GradientDescent;
  // Retargeting: optimize leaf locals only instead of every bone.
  bool leaves_only = false;

  void validate() const;
};

// Tangent chart over pose locals: six numbers per variable bone, [w, dt],
// moving the local (R, t) to (exp(hat(w)) R, t + dt).
Pose apply_pose_step(const Pose& pose, std::span<const BoneId> variables, const Eigen::VectorXd& step);

// Chamfer distance between the forward-warped skinned surface and a fixed
// target, with its gradient in the chart above. Nearest-neighbor
// correspondences are recomputed on every evaluation and held fixed for
// the gradient.
class ChamferPoseObjective {
 public:
  ChamferPoseObjective(const Rig& rig, const SkinnedSurface& surface, std::span<const Vec3> target,
                       std::vector<BoneId> variables);

  double evaluate(const Pose& pose, Eigen::VectorXd* grad) const;
  std::vector<Vec3> warp(const Pose& pose) const;
  // Diagonal scaling per variable bone from the canonical weight mass m it
  // drives and the spread l of that mass about its center: 1/(m l^2) for
  // rotation entries and 1/m for translation entries.
  Eigen::VectorXd preconditioner() const;
  const std::vector<BoneId>& variables() const { return variables_; }

 private:
  const Rig& rig_;
  const SkinnedSurface& surface_;
  std::vector<Vec3> target_;
  KdTree target_index_;
  std::vector<BoneId> variables_;
  std::vector<RigidTransform> canonical_inverse_;  // per leaf
};

struct RetargetStep {
  int step = 0;
  double cd = 0.0;
  double loss = 0.0;
};

struct RetargetReport {
  std::vector<RetargetStep> trace;
  Pose final_pose;
  double wall_seconds = 0.0;
  std::string stop_reason;
};

// Chamfer value recorded at the last trace step <= `step`.
double cd_at_step(const RetargetReport& report, int step);
// First step whose cd is <= threshold, or -1.
int steps_to_threshold(const RetargetReport& report, double threshold);

using RetargetObserver = std::function<bool(const RetargetStep&)>;

// Optimizes pose locals (scales and canonical shape stay fixed) to minimize
// the Chamfer distance to `target`. Throws DataError if the surface's cached
// weights do not match the rig, ArgumentError for an empty target, and
// NumericalError on divergence.
RetargetReport retarget(const Rig& rig, const SkinnedSurface& surface, const Pose& pose_init,
                        std::span<const Vec3> target, const OptimConfig& cfg, const RetargetObserver& observer = {});

}  // namespace boneforge
