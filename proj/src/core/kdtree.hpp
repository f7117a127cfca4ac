#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "transform.hpp"

namespace boneforge {

struct Neighbor {
  std::uint32_t index = 0;
  double squared_distance = 0.0;
};

// Static 3-d tree over a point set, stored implicitly as a permutation where
// each range's median splits along its widest axis. Equidistant neighbors
// resolve to the lowest point index, matching a linear scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  Neighbor nearest(const Vec3& query) const;
  // Nearest and second-nearest (second is {0, inf} for single-point trees).
  std::pair<Neighbor, Neighbor> nearest_two(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  static constexpr std::size_t kLeafSize = 8;
  void build(std::size_t lo, std::size_t hi);
  template <class Visit>
  void search(std::size_t lo, std::size_t hi, const Vec3& q, Visit& visit, const double& bound) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> perm_;
  std::vector<std::uint8_t> axis_;
};

// O(n) reference scan with the same tie rule.
Neighbor nearest_linear(std::span<const Vec3> points, const Vec3& query);

}  // namespace boneforge
