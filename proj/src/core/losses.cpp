#include "losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "parallel.hpp"

namespace boneforge {

namespace {

struct Partial {
  double value = 0.0;
  std::vector<BoneGradient> grad;
};

Partial combine(Partial acc, const Partial& p) {
  acc.value += p.value;
  if (acc.grad.empty()) {
    acc.grad = p.grad;
  } else {
    for (std::size_t b = 0; b < p.grad.size(); ++b) acc.grad[b] += p.grad[b];
  }
  return acc;
}

void add_scaled(BoneGradient& dst, const MahalanobisGrad& g, double s) {
  dst.center += s * g.d_center;
  dst.rotation += s * g.d_rotation;
  dst.scale += s * g.d_scale;
}

}  // namespace

double bone_mask_loss(const MaskImage& pred, const MaskImage& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.values.size() != gt.values.size()) {
    throw ArgumentError("bone mask loss: mask dimensions differ");
  }
  if (pred.values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double r = pred.values[i] - gt.values[i];
    sum += r * r;
  }
  return sum / static_cast<double>(pred.values.size());
}

LossValue bone_mask_loss(std::span<const LeafFrame> leaves, std::span<const MaskImage> gt_views,
                         const OccupancyConfig& cfg, const RenderSettings& settings, Want want) {
  cfg.validate();
  if (leaves.empty()) throw ArgumentError("bone mask loss needs at least one leaf bone");
  if (gt_views.empty()) throw ArgumentError("bone mask loss needs at least one view");
  if (settings.samples_per_ray < 2) throw ArgumentError("samples_per_ray must be at least 2");
  const bool with_grad = want == Want::ValueAndGradient;
  const std::size_t nl = leaves.size();
  const Aabb volume = settings.volume ? *settings.volume : occupancy_bounds(leaves, cfg);
  const int n = settings.samples_per_ray;
  const double inv_tau = 1.0 / cfg.tau;

  LossValue total;
  if (with_grad) total.grad.assign(nl, {});

  for (const MaskImage& gt : gt_views) {
    const Camera& camera = gt.camera;
    camera.validate();
    if (gt.values.size() != static_cast<std::size_t>(camera.width) * camera.height || gt.width != camera.width ||
        gt.height != camera.height) {
      throw ArgumentError("bone mask loss: ground-truth mask does not match its camera");
    }
    const std::size_t pixels = gt.values.size();
    const double inv_pixels = 1.0 / static_cast<double>(pixels);

    Partial init;
    if (with_grad) init.grad.assign(nl, {});
    const Partial view = parallel_reduce(pixels, 64, init, [&](std::size_t begin, std::size_t end) {
      Partial part;
      if (with_grad) part.grad.assign(nl, {});
      std::vector<BoneGradient> ds(with_grad ? nl : 0);
      std::vector<double> g(nl);
      std::vector<double> soft(nl);
      for (std::size_t p = begin; p < end; ++p) {
        double optical_depth = 0.0;
        std::fill(ds.begin(), ds.end(), BoneGradient{});
        const Ray ray = camera.pixel_ray(static_cast<int>(p % camera.width), static_cast<int>(p / camera.width));
        const auto span = clip_ray(ray, volume);
        if (span) {
          const double delta = (span->second - span->first) / n;
          for (int i = 0; i < n; ++i) {
            const Vec3 x = ray.origin + (span->first + (i + 0.5) * delta) * ray.direction;
            std::size_t best = 0;
            for (std::size_t b = 0; b < nl; ++b) {
              g[b] = mahalanobis(x, leaves[b].world, leaves[b].scale) - cfg.gamma;
              if (g[b] < g[best]) best = b;
            }
            double big_g = g[best];
            if (cfg.smooth_min) {
              const double beta = cfg.smooth_min_sharpness;
              double sum = 0.0;
              for (std::size_t b = 0; b < nl; ++b) sum += (soft[b] = std::exp(-beta * (g[b] - g[best])));
              for (std::size_t b = 0; b < nl; ++b) soft[b] /= sum;
              big_g = g[best] - std::log(sum) / beta;
            }
            const double sigma = sigmoid(-big_g * inv_tau);
            optical_depth += cfg.density_scale * sigma * delta;
            if (!with_grad) continue;
            const double coef = -cfg.density_scale * delta * sigma * (1.0 - sigma) * inv_tau;
            if (coef == 0.0) continue;
            if (cfg.smooth_min) {
              for (std::size_t b = 0; b < nl; ++b) {
                if (soft[b] < 1e-300) continue;
                add_scaled(ds[b], mahalanobis_grad(x, leaves[b].world, leaves[b].scale), coef * soft[b]);
              }
            } else {
              add_scaled(ds[best], mahalanobis_grad(x, leaves[best].world, leaves[best].scale), coef);
            }
          }
        }
        const double m = std::clamp(-std::expm1(-optical_depth), 0.0, 1.0);
        const double r = m - gt.values[p];
        part.value += r * r;
        if (with_grad && r != 0.0) {
          const double dl_ds = 2.0 * r * std::exp(-optical_depth);
          for (std::size_t b = 0; b < nl; ++b) {
            BoneGradient t = ds[b];
            t *= dl_ds;
            part.grad[b] += t;
          }
        }
      }
      return part;
    }, combine);

    total.value += view.value * inv_pixels;
    if (with_grad) {
      for (std::size_t b = 0; b < nl; ++b) {
        BoneGradient t = view.grad[b];
        t *= inv_pixels;
        total.grad[b] += t;
      }
    }
  }

  const double inv_views = 1.0 / static_cast<double>(gt_views.size());
  total.value *= inv_views;
  for (auto& gb : total.grad) gb *= inv_views;
  return total;
}

LossValue overlap_loss(std::span<const Vec3> surface, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg,
                       Want want) {
  cfg.validate();
  if (surface.empty()) throw ArgumentError("overlap loss needs surface points");
  const bool with_grad = want == Want::ValueAndGradient;
  const std::size_t nl = leaves.size();
  const double inv_tau = 1.0 / cfg.tau;

  Partial init;
  if (with_grad) init.grad.assign(nl, {});
  Partial sum = parallel_reduce(surface.size(), kDefaultChunk, init, [&](std::size_t begin, std::size_t end) {
    Partial part;
    if (with_grad) part.grad.assign(nl, {});
    std::vector<double> sig(nl);
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& x = surface[i];
      double soft_count = 0.0;
      for (std::size_t b = 0; b < nl; ++b) {
        sig[b] = sigmoid(-(mahalanobis(x, leaves[b].world, leaves[b].scale) - cfg.gamma) * inv_tau);
        soft_count += sig[b];
      }
      const double excess = soft_count - cfg.lambda_max;
      if (excess <= 0.0) continue;
      part.value += excess;
      if (!with_grad) continue;
      for (std::size_t b = 0; b < nl; ++b) {
        const double coef = -sig[b] * (1.0 - sig[b]) * inv_tau;
        if (coef != 0.0) add_scaled(part.grad[b], mahalanobis_grad(x, leaves[b].world, leaves[b].scale), coef);
      }
    }
    return part;
  }, combine);

  const double inv_n = 1.0 / static_cast<double>(surface.size());
  LossValue out{sum.value * inv_n, std::move(sum.grad)};
  for (auto& gb : out.grad) gb *= inv_n;
  return out;
}

LossValue coverage_loss(std::span<const Vec3> surface, std::span<const LeafFrame> leaves, const OccupancyConfig& cfg,
                        Want want) {
  cfg.validate();
  if (surface.size() < cfg.n_cover) {
    throw ArgumentError("coverage loss needs at least n_cover=" + std::to_string(cfg.n_cover) + " surface points, got " +
                        std::to_string(surface.size()));
  }
  const bool with_grad = want == Want::ValueAndGradient;
  const std::size_t nl = leaves.size();
  std::vector<double> per_bone(nl, 0.0);
  LossValue out;
  if (with_grad) out.grad.assign(nl, {});

  parallel_for(nl, [&](std::size_t b) {
    const LeafFrame& leaf = leaves[b];
    std::vector<double> dist(surface.size());
    for (std::size_t i = 0; i < surface.size(); ++i) dist[i] = mahalanobis(surface[i], leaf.world, leaf.scale);
    std::vector<std::size_t> order(surface.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto closer = [&](std::size_t a, std::size_t c) { return dist[a] < dist[c] || (dist[a] == dist[c] && a < c); };
    const auto nth = order.begin() + static_cast<std::ptrdiff_t>(cfg.n_cover);
    std::nth_element(order.begin(), nth - 1, order.end(), closer);
    std::sort(order.begin(), nth, closer);
    double value = 0.0;
    for (auto it = order.begin(); it != nth; ++it) {
      const double g = dist[*it] - cfg.gamma;
      if (g <= 0.0) continue;
      value += g;
      if (with_grad) add_scaled(out.grad[b], mahalanobis_grad(surface[*it], leaf.world, leaf.scale), 1.0);
    }
    per_bone[b] = value;
  }, 1);

  for (double v : per_bone) out.value += v;
  return out;
}

}  // namespace boneforge
