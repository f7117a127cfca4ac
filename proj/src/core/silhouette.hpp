#pragma once

#include "occupancy.hpp"

namespace boneforge {

// Binary mask of pixels whose center ray hits any triangle of `mesh`.
MaskImage render_silhouette(const TriMesh& mesh, const Camera& camera);

// Moller-Trumbore; hit distance along the ray if it hits in front.
std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace boneforge
