#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "transform.hpp"

namespace boneforge {

using Triangle = std::array<std::uint32_t, 3>;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::optional<std::vector<Vec3>> colors;  // per-vertex RGB in [0,1]
};

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<std::vector<Vec3>> normals;
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return !(lo.array() <= hi.array()).all(); }
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return empty() ? 0.0 : extent().norm(); }
  double longest_edge() const { return empty() ? 0.0 : extent().maxCoeff(); }
  Aabb inflated(double margin) const { return {lo - Vec3::Constant(margin), hi + Vec3::Constant(margin)}; }
};

Aabb bounds_of(const std::vector<Vec3>& points);

// Throws DataError on out-of-range indices or non-finite coordinates.
void validate(const TriMesh& mesh);

double triangle_area(const TriMesh& mesh, std::size_t tri);
double surface_area(const TriMesh& mesh);

// Appends `other` to `mesh`, offsetting its indices.
void append(TriMesh& mesh, const TriMesh& other);

}  // namespace boneforge
