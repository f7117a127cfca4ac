#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "camera.hpp"
#include "skinning.hpp"

namespace boneforge {

struct OccupancyConfig {
  double gamma = 1.0;           // zero level of g_b, Mahalanobis units
  double tau = 0.1;             // sigmoid temperature, Mahalanobis units
  double lambda_max = 2.0;      // soft bone count allowed per surface point
  std::size_t n_cover = 64;     // Mahalanobis-nearest points each bone must contain
  double density_scale = 20.0;  // opacity per unit length for a fully occupied sample
  // Replace the hard min over bones with -log(sum exp(-beta g)) / beta.
  bool smooth_min = false;
  double smooth_min_sharpness = 50.0;

  void validate() const;
};

// g_b(x) = d_M(x, b) - gamma: negative inside the bone, positive outside.
double bone_occ(const Vec3& x, const RigidTransform& bone_world, const Vec3& scale, const OccupancyConfig& cfg);

// G(x) = min over leaves of g_b(x); the smooth variant when cfg.smooth_min.
// Throws ArgumentError for an empty leaf set.
double unified_occ(const Vec3& x, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg);
double unified_occ(const Vec3& x, const Rig& rig, const Pose& pose, const OccupancyConfig& cfg);

// Index of the leaf attaining the hard minimum, lowest index on ties.
std::size_t argmin_leaf(const Vec3& x, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg);

// sigmoid(-g / tau), evaluated without overflow for any finite g.
double occ_density(double g, const OccupancyConfig& cfg);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  Camera camera;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct RenderSettings {
  int samples_per_ray = 64;
  // Sampling volume. When empty, the box enclosing every leaf out to
  // d_M = gamma + 10 tau is used.
  std::optional<Aabb> volume;
};

// Axis-aligned box of the ellipsoids d_M <= gamma + 10 tau of all leaves.
Aabb occupancy_bounds(std::span<const LeafFrame> leaves, const OccupancyConfig& cfg);

// Per pixel: samples at the midpoints of `samples_per_ray` equal segments of
// the ray's span inside the volume, rho_i = k * occ_density(G(x_i)), and
// M = 1 - exp(-sum rho_i delta).
MaskImage render_bone_mask(std::span<const LeafFrame> leaves, const Camera& camera, const OccupancyConfig& cfg,
                           const RenderSettings& settings = {});
MaskImage render_bone_mask(const Rig& rig, const Pose& pose, const Camera& camera, const OccupancyConfig& cfg,
                           const RenderSettings& settings = {});

// IoU of the {value >= threshold} pixel sets; 1 when both sets are empty.
double mask_iou(const MaskImage& a, const MaskImage& b, double threshold = 0.5);

}  // namespace boneforge
