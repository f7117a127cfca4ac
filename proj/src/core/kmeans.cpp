#include "kmeans.hpp"

#include <limits>

#include "errors.hpp"
#include "random.hpp"

namespace boneforge {

std::vector<Vec3> kmeans_plus_plus(std::span<const Vec3> points, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ArgumentError("k-means needs k >= 1");
  if (points.size() < k) throw ArgumentError("k-means needs at least k points");
  Rng rng(seed);
  std::vector<Vec3> centers;
  centers.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], (points[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < points.size(); ++pick) {
        target -= d2[pick];
        if (target < 0.0 && d2[pick] > 0.0) break;
      }
    } else {
      pick = rng.below(points.size());
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

Clustering lloyd(std::span<const Vec3> points, std::vector<Vec3> centers, int max_iters) {
  if (centers.empty()) throw ArgumentError("lloyd needs at least one center");
  Clustering out;
  out.centers = std::move(centers);
  const std::size_t k = out.centers.size();
  out.assignment.assign(points.size(), std::numeric_limits<std::uint32_t>::max());
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::uint32_t best = 0;
      double best_d = (points[i] - out.centers[0]).squaredNorm();
      for (std::size_t c = 1; c < k; ++c) {
        const double d = (points[i] - out.centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      if (out.assignment[i] != best) {
        out.assignment[i] = best;
        changed = true;
      }
    }
    out.iterations = iter + 1;
    if (!changed && iter > 0) break;
    std::vector<Vec3> sum(k, Vec3::Zero());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sum[out.assignment[i]] += points[i];
      ++count[out.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) out.centers[c] = sum[c] / static_cast<double>(count[c]);
    }
  }
  return out;
}

Clustering kmeans(std::span<const Vec3> points, std::size_t k, std::uint64_t seed, int max_iters) {
  return lloyd(points, kmeans_plus_plus(points, k, seed), max_iters);
}

}  // namespace boneforge
