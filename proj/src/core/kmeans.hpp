#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "transform.hpp"

namespace boneforge {

struct Clustering {
  std::vector<Vec3> centers;
  std::vector<std::uint32_t> assignment;
  int iterations = 0;
};

// k-means++ seeding with a seeded generator. Requires points.size() >= k.
std::vector<Vec3> kmeans_plus_plus(std::span<const Vec3> points, std::size_t k, std::uint64_t seed);

// Lloyd iterations from the given centers until assignments stop changing or
// max_iters is reached. Points go to the nearest center (lowest index on
// ties); a center that loses all its points stays where it was.
Clustering lloyd(std::span<const Vec3> points, std::vector<Vec3> centers, int max_iters = 100);

// kmeans_plus_plus followed by lloyd.
Clustering kmeans(std::span<const Vec3> points, std::size_t k, std::uint64_t seed, int max_iters = 100);

}  // namespace boneforge
