#include "occupancy.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"

namespace boneforge {

void OccupancyConfig::validate() const {
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  if (n_cover < 1) throw ArgumentError("n_cover must be at least 1");
  if (!(density_scale > 0.0)) throw ArgumentError("density_scale must be positive");
  if (!(lambda_max >= 0.0)) throw ArgumentError("lambda must be nonnegative");
  if (!std::isfinite(gamma)) throw ArgumentError("gamma must be finite");
  if (smooth_min && !(smooth_min_sharpness > 0.0)) throw ArgumentError("smooth_min_sharpness must be positive");
}

double bone_occ(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale, const OccupancyConfig& cfg) {
  return mahalanobis(x, bone_world, scale) - cfg.gamma;
}

std::size_t argmin_leaf(const Vec3& x, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg) {
  if (leaves.empty()) throw ArgumentError("unified occupancy needs at least one leaf bone");
  std::size_t best = 0;
  double best_g = bone_occ(x, leaves[0].world, leaves[0].scale, cfg);
  for (std::size_t b = 1; b < leaves.size(); ++b) {
    const double g = bone_occ(x, leaves[b].world, leaves[b].scale, cfg);
    if (g < best_g) {
      best_g = g;
      best = b;
    }
  }
  return best;
}

double unified_occ(const Vec3& x, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg) {
  if (leaves.empty()) throw ArgumentError("unified occupancy needs at least one leaf bone");
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& leaf : leaves) lo = std::min(lo, bone_occ(x, leaf.world, leaf.scale, cfg));
  if (!cfg.smooth_min) return lo;
  const double beta = cfg.smooth_min_sharpness;
  double sum = 0.0;
  for (const auto& leaf : leaves) sum += std::exp(-beta * (bone_occ(x, leaf.world, leaf.scale, cfg) - lo));
  return lo - std::log(sum) / beta;
}

double unified_occ(const Vec3& x, const Rig& rig, const Pose& pose, const OccupancyConfig& cfg) {
  const auto frames = leaf_frames(rig, pose);
  return unified_occ(x, frames, cfg);
}

double occ_density(double g, const OccupancyConfig& cfg) { return sigmoid(-g / cfg.tau); }

Aabb occupancy_bounds(std::span<const LeafFrame> leaves, const OccupancyConfig& cfg) {
  Aabb box;
  const double reach = std::max(cfg.gamma + 10.0 * cfg.tau, 0.0);
  for (const auto& leaf : leaves) {
    // Half extent of a rotated ellipsoid along world axis i: |row_i(R diag(s))|.
    const Mat3 rs = leaf.world.rotation * leaf.scale.asDiagonal();
    const Vec3 half = rs.rowwise().norm() * reach;
    box.extend(leaf.world.translation - half);
    box.extend(leaf.world.translation + half);
  }
  return box;
}

MaskImage render_bone_mask(std::span<const LeafFrame> leaves, const Camera& camera, const OccupancyConfig& cfg,
                           const RenderSettings& settings) {
  camera.validate();
  cfg.validate();
  if (settings.samples_per_ray < 2) throw ArgumentError("samples_per_ray must be at least 2");
  if (leaves.empty()) throw ArgumentError("rendering needs at least one leaf bone");
  const Aabb volume = settings.volume ? *settings.volume : occupancy_bounds(leaves, cfg);

  MaskImage mask;
  mask.width = camera.width;
  mask.height = camera.height;
  mask.camera = camera;
  mask.values.assign(static_cast<std::size_t>(camera.width) * camera.height, 0.0);
  const int n = settings.samples_per_ray;

  parallel_for(mask.values.size(), [&](std::size_t p) {
    const int px = static_cast<int>(p % camera.width);
    const int py = static_cast<int>(p / camera.width);
    const Ray ray = camera.pixel_ray(px, py);
    const auto span = clip_ray(ray, volume);
    if (!span) return;
    const double delta = (span->second - span->first) / n;
    double optical_depth = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec3 x = ray.origin + (span->first + (i + 0.5) * delta) * ray.direction;
      optical_depth += cfg.density_scale * occ_density(unified_occ(x, leaves, cfg), cfg) * delta;
    }
    mask.values[p] = std::clamp(-std::expm1(-optical_depth), 0.0, 1.0);
  }, 64);
  return mask;
}

MaskImage render_bone_mask(const Rig& rig, const Pose& pose, const Camera& camera, const OccupancyConfig& cfg,
                           const RenderSettings& settings) {
  const auto frames = leaf_frames(rig, pose);
  return render_bone_mask(frames, camera, cfg, settings);
}

double mask_iou(const MaskImage& a, const MaskImage& b, double threshold) {
  if (a.width != b.width || a.height != b.height) throw ArgumentError("mask dimensions differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool ia = a.values[i] >= threshold;
    const bool ib = b.values[i] >= threshold;
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace boneforge
