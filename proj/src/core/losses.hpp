#pragma once

#include <span>
#include <vector>

#include "occupancy.hpp"

namespace boneforge {

// Derivatives for one leaf: world center, world-frame rotation increment
// (R -> exp(hat(w)) R at w = 0), and semi-axis lengths.
struct BoneGradient {
  Vec3 center = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  Vec3 scale = Vec3::Zero();

  BoneGradient& operator+=(const BoneGradient& o) {
    center += o.center;
    rotation += o.rotation;
    scale += o.scale;
    return *this;
  }
  BoneGradient& operator*=(double s) {
    center *= s;
    rotation *= s;
    scale *= s;
    return *this;
  }
};

struct LossValue {
  double value = 0.0;
  std::vector<BoneGradient> grad;  // one entry per leaf, empty if not requested
};

enum class Want { Value, ValueAndGradient };

// Mean squared pixel difference. Throws ArgumentError on size mismatch.
double bone_mask_loss(const MaskImage& pred, const MaskImage& gt);

// Renders every leaf set against each ground-truth view's camera and returns
// the mean of the per-view bone_mask_loss values with analytic gradients.
// The sampling volume is held fixed when differentiating; pass
// settings.volume to pin it across evaluations.
LossValue bone_mask_loss(std::span<const LeafFrame> leaves, std::span<const MaskImage> gt_views,
                         const OccupancyConfig& cfg, const RenderSettings& settings, Want want = Want::ValueAndGradient);

// (1/|V|) sum_x max(0, sum_b sigmoid(-g_b(x)/tau) - lambda).
LossValue overlap_loss(std::span<const Vec3> surface, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg,
                       Want want = Want::ValueAndGradient);

// sum_b sum over the n_cover Mahalanobis-nearest points of max(0, g_b(x)).
// Nearest sets are recomputed on every call; ties go to the lower index.
// Throws ArgumentError when |surface| < n_cover.
LossValue coverage_loss(std::span<const Vec3> surface, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg,
                        Want want = Want::ValueAndGradient);

}  // namespace boneforge
