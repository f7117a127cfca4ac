#pragma once

#include <optional>
#include <utility>

#include "mesh.hpp"
#include "transform.hpp"

namespace boneforge {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

// Pinhole camera looking down +z of its own frame, x right, y down.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  RigidTransform world_from_camera;

  // Throws ArgumentError for zero focal length or empty image.
  void validate() const;
  Ray pixel_ray(int px, int py) const;

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        double fov_y_degrees);
};

// Parametric interval [t0, t1] where the ray is inside `box`, t0 >= 0.
std::optional<std::pair<double, double>> clip_ray(const Ray& ray, const Aabb& box);

}  // namespace boneforge
