#include "silhouette.hpp"

#include "parallel.hpp"

namespace boneforge {

std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = ray.direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

MaskImage render_silhouette(const TriMesh& mesh, const Camera& camera) {
  camera.validate();
  validate(mesh);
  MaskImage m;
  m.width = camera.width;
  m.height = camera.height;
  m.camera = camera;
  m.values.assign(static_cast<std::size_t>(m.width) * m.height, 0.0);
  const Aabb box = bounds_of(mesh.vertices);
  parallel_for(m.values.size(), [&](std::size_t i) {
    const Ray ray = camera.pixel_ray(static_cast<int>(i % m.width), static_cast<int>(i / m.width));
    if (!clip_ray(ray, box.inflated(1e-9))) return;
    for (const auto& t : mesh.triangles) {
      if (intersect_triangle(ray, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]])) {
        m.values[i] = 1.0;
        return;
      }
    }
  }, 64);
  return m;
}

}  // namespace boneforge
