#include "sampling.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "random.hpp"

namespace boneforge {

SurfaceSamples sample_surface_traced(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample count must be at least 1");
  validate(mesh);
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += triangle_area(mesh, t);
    cdf[t] = total;
  }
  if (!(total > 0.0)) throw DataError("cannot sample a mesh with zero surface area");

  Rng rng(seed);
  SurfaceSamples out;
  out.cloud.points.reserve(n);
  out.cloud.normals.emplace();
  out.cloud.normals->reserve(n);
  out.triangle.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    // upper_bound never selects a zero-area triangle: its cdf equals its predecessor's.
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const auto t = static_cast<std::size_t>(it - cdf.begin());
    const auto& tri = mesh.triangles[t];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    Vec3 normal = (b - a).cross(c - a);
    const double len = normal.norm();
    out.cloud.normals->push_back(len > 0.0 ? Vec3(normal / len) : Vec3::Zero());
    out.triangle.push_back(static_cast<std::uint32_t>(t));
  }
  return out;
}

PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  return sample_surface_traced(mesh, n, seed).cloud;
}

}  // namespace boneforge
