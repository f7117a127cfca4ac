#pragma once

#include <cstdint>

#include "mesh.hpp"

namespace boneforge {

// Area-weighted uniform samples on the mesh surface. Triangle selection uses
// the cumulative area table; positions use the square-root barycentric map.
// Normals are the face normals of the chosen triangles.
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

// Index of the triangle each sample came from, aligned with sample_surface.
struct SurfaceSamples {
  PointCloud cloud;
  std::vector<std::uint32_t> triangle;
};
SurfaceSamples sample_surface_traced(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

}  // namespace boneforge
