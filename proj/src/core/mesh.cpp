#include "mesh.hpp"

#include <string>

#include "errors.hpp"

namespace boneforge {

Aabb bounds_of(const std::vector<Vec3>& points) {
  Aabb box;
  for (const auto& p : points) box.extend(p);
  return box;
}

void validate(const TriMesh& mesh) {
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (!mesh.vertices[i].allFinite()) throw DataError("vertex " + std::to_string(i) + " is not finite");
  }
  const auto n = mesh.vertices.size();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (auto idx : mesh.triangles[t]) {
      if (idx >= n) {
        throw DataError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) + " of " +
                        std::to_string(n));
      }
    }
  }
  if (mesh.colors && mesh.colors->size() != n) throw DataError("color count does not match vertex count");
}

double triangle_area(const TriMesh& mesh, std::size_t tri) {
  const auto& t = mesh.triangles[tri];
  const Vec3& a = mesh.vertices[t[0]];
  const Vec3& b = mesh.vertices[t[1]];
  const Vec3& c = mesh.vertices[t[2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

double surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) area += triangle_area(mesh, t);
  return area;
}

void append(TriMesh& mesh, const TriMesh& other) {
  const auto offset = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), other.vertices.begin(), other.vertices.end());
  for (auto t : other.triangles) {
    for (auto& i : t) i += offset;
    mesh.triangles.push_back(t);
  }
}

}  // namespace boneforge
