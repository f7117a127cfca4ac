#include "camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace boneforge {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw ArgumentError("camera image size must be positive");
  if (fx == 0.0 || fy == 0.0 || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw ArgumentError("camera focal length must be nonzero and finite");
  }
  if (!is_rotation(world_from_camera.rotation)) throw ArgumentError("camera rotation is not orthonormal");
}

Ray Camera::pixel_ray(int px, int py) const {
  const Vec3 dir_cam((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0);
  return {world_from_camera.translation, (world_from_camera.rotation * dir_cam).normalized()};
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_y_degrees) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_degrees * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.world_from_camera.rotation.col(0) = right;
  cam.world_from_camera.rotation.col(1) = down;
  cam.world_from_camera.rotation.col(2) = forward;
  cam.world_from_camera.translation = eye;
  return cam;
}

std::optional<std::pair<double, double>> clip_ray(const Ray& ray, const Aabb& box) {
  if (box.empty()) return std::nullopt;
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-300) {
      if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - o) / d;
    double tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

}  // namespace boneforge
