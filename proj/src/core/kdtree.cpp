#include "kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace boneforge {

namespace {

bool better(const Neighbor& a, const Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("too many points for KdTree");
  perm_.resize(points_.size());
  std::iota(perm_.begin(), perm_.end(), 0u);
  axis_.assign(points_.size(), 0);
  build(0, points_.size());
}

void KdTree::build(std::size_t lo, std::size_t hi) {
  if (hi - lo <= kLeafSize) return;
  Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 mx = -mn;
  for (std::size_t i = lo; i < hi; ++i) {
    mn = mn.cwiseMin(points_[perm_[i]]);
    mx = mx.cwiseMax(points_[perm_[i]]);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(lo), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                   perm_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis];
                     const double pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  axis_[mid] = static_cast<std::uint8_t>(axis);
  build(lo, mid);
  build(mid + 1, hi);
}

template <class Visit>
void KdTree::search(std::size_t lo, std::size_t hi, const Vec3& q, Visit& visit, const double& bound) const {
  if (hi - lo <= kLeafSize) {
    for (std::size_t i = lo; i < hi; ++i) visit(perm_[i], (points_[perm_[i]] - q).squaredNorm());
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  const int axis = axis_[mid];
  const std::uint32_t idx = perm_[mid];
  const double diff = q[axis] - points_[idx][axis];
  visit(idx, (points_[idx] - q).squaredNorm());
  // Left holds coordinates <= split, right >= split.
  if (diff <= 0.0) {
    search(lo, mid, q, visit, bound);
    if (diff * diff <= bound) search(mid + 1, hi, q, visit, bound);
  } else {
    search(mid + 1, hi, q, visit, bound);
    if (diff * diff <= bound) search(lo, mid, q, visit, bound);
  }
}

Neighbor KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw ArgumentError("nearest neighbor query on an empty tree");
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  auto visit = [&](std::uint32_t i, double d2) {
    const Neighbor cand{i, d2};
    if (better(cand, best)) best = cand;
  };
  search(0, points_.size(), query, visit, best.squared_distance);
  return best;
}

std::pair<Neighbor, Neighbor> KdTree::nearest_two(const Vec3& query) const {
  if (points_.empty()) throw ArgumentError("nearest neighbor query on an empty tree");
  const double inf = std::numeric_limits<double>::infinity();
  Neighbor first{0, inf};
  Neighbor second{0, inf};
  auto visit = [&](std::uint32_t i, double d2) {
    const Neighbor cand{i, d2};
    if (better(cand, first)) {
      second = first;
      first = cand;
    } else if (better(cand, second)) {
      second = cand;
    }
  };
  search(0, points_.size(), query, visit, second.squared_distance);
  return {first, second};
}

Neighbor nearest_linear(std::span<const Vec3> points, const Vec3& query) {
  if (points.empty()) throw ArgumentError("nearest neighbor query on an empty set");
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Neighbor cand{static_cast<std::uint32_t>(i), (points[i] - query).squaredNorm()};
    if (better(cand, best)) best = cand;
  }
  return best;
}

}  // namespace boneforge
