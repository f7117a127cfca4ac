#include "synth.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include "errors.hpp"
#include "random.hpp"

namespace boneforge {

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::Chain: return "chain";
    case SynthKind::Quadruped: return "quadruped";
    case SynthKind::Dumbbell: return "dumbbell";
  }
  return "unknown";
}

std::pair<SynthKind, int> parse_synth_kind(const std::string& name) {
  if (name == "quadruped") return {SynthKind::Quadruped, 0};
  if (name == "dumbbell") return {SynthKind::Dumbbell, 0};
  if (name.rfind("chain-", 0) == 0) {
    const std::string digits = name.substr(6);
    if (!digits.empty() && digits.size() < 4 && digits.find_first_not_of("0123456789") == std::string::npos) {
      const int k = std::stoi(digits);
      if (k >= 1) return {SynthKind::Chain, k};
    }
  }
  throw ArgumentError("unknown scenario kind '" + name + "' (expected chain-<k>, quadruped or dumbbell)");
}

void SynthSpec::validate() const {
  if (n_frames < 1) throw ArgumentError("n_frames must be >= 1");
  if (kind == SynthKind::Chain && (chain_k < 1 || chain_k > 64)) throw ArgumentError("chain_k must be in [1, 64]");
  if (!(noise >= 0.0)) throw ArgumentError("noise must be nonnegative");
  if (!(max_bend_deg >= 0.0) || max_bend_deg > 180.0) throw ArgumentError("max_bend_deg must be in [0, 180]");
  if (mask_size < 1) throw ArgumentError("mask_size must be >= 1");
  occupancy.validate();
}

namespace {

constexpr double kPi = std::numbers::pi;

Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

// Surface of revolution about axis u through `base`. `profile` holds
// (axial offset, radius) rings between two poles.
TriMesh revolve(const Vec3& base, const Vec3& u, double pole_lo, double pole_hi,
                const std::vector<std::pair<double, double>>& profile, int segments) {
  const Vec3 e1 = u.unitOrthogonal();
  const Vec3 e2 = u.cross(e1);
  TriMesh m;
  m.vertices.push_back(base + pole_lo * u);
  for (const auto& [t, rho] : profile) {
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      m.vertices.push_back(base + t * u + rho * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
  }
  m.vertices.push_back(base + pole_hi * u);
  const auto seg = static_cast<std::uint32_t>(segments);
  const auto rings = static_cast<std::uint32_t>(profile.size());
  const std::uint32_t south = 0;
  const auto north = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto at = [&](std::uint32_t ring, std::uint32_t j) { return 1 + ring * seg + (j % seg); };
  for (std::uint32_t j = 0; j < seg; ++j) m.triangles.push_back({south, at(0, j + 1), at(0, j)});
  for (std::uint32_t i = 0; i + 1 < rings; ++i) {
    for (std::uint32_t j = 0; j < seg; ++j) {
      m.triangles.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
      m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
    }
  }
  for (std::uint32_t j = 0; j < seg; ++j) m.triangles.push_back({north, at(rings - 1, j), at(rings - 1, j + 1)});
  return m;
}

struct BoneSpec {
  std::uint32_t id;
  std::optional<std::uint32_t> parent;
  Vec3 center;  // canonical world
  Vec3 scale;
};

Rig rig_from_specs(const std::vector<BoneSpec>& specs) {
  std::map<std::uint32_t, Vec3> centers;
  for (const auto& s : specs) centers[s.id] = s.center;
  std::vector<Bone> bones;
  for (const auto& s : specs) {
    Bone b;
    b.id = BoneId{s.id};
    b.scale = s.scale;
    if (s.parent) {
      b.parent = BoneId{*s.parent};
      b.local = RigidTransform::from_translation(s.center - centers.at(*s.parent));
    } else {
      b.local = RigidTransform::from_translation(s.center);
    }
    bones.push_back(b);
  }
  return Rig::from_bones(std::move(bones));
}

// Local that rotates a bone by `r` about a pivot given in canonical world
// coordinates, for a bone whose parent's canonical world is `parent`.
RigidTransform pivot_local(const Rig& rig, BoneId id, const Mat3& r, const Vec3& pivot_world) {
  const Bone& b = rig.bone(id);
  RigidTransform parent = RigidTransform::identity();
  if (b.parent) parent = compose_world(rig, rig.canonical_pose()).at(*b.parent);
  const Vec3 pivot = parent.inverse().apply(pivot_world);
  return RigidTransform::about_pivot(r, pivot) * b.local;
}

struct Built {
  Rig rig;
  TriMesh mesh;
  std::function<Pose(Rng&)> pose;
};

Built build_chain(const SynthSpec& spec) {
  const int k = spec.chain_k;
  std::vector<BoneSpec> specs;
  for (int i = 0; i < k; ++i) {
    specs.push_back({static_cast<std::uint32_t>(i), std::nullopt, Vec3(i + 0.5, 0.0, 0.0), Vec3(0.6, 0.2, 0.2)});
  }
  Built out{rig_from_specs(specs), capsule_mesh(Vec3::Zero(), Vec3(k, 0.0, 0.0), 0.15, 8 * k, 16), {}};
  const double max_bend = spec.max_bend_deg * kPi / 180.0;
  const Rig rig = out.rig;
  out.pose = [rig, k, max_bend](Rng& rng) {
    Pose p = rig.canonical_pose();
    RigidTransform acc = RigidTransform::identity();
    for (int i = 0; i < k; ++i) {
      if (i > 0) acc = acc * RigidTransform::about_pivot(rot_z(rng.uniform(-max_bend, max_bend)), Vec3(i, 0.0, 0.0));
      const BoneId id{static_cast<std::uint32_t>(i)};
      p.locals[id] = acc * rig.bone(id).local;
    }
    return p;
  };
  return out;
}

Built build_quadruped(const SynthSpec& spec) {
  std::vector<BoneSpec> specs;
  // Roots: torso, four legs, neck.
  specs.push_back({0, std::nullopt, Vec3(0.0, 1.2, 0.0), Vec3(1.2, 0.45, 0.5)});
  const Vec3 hips[4] = {Vec3(0.7, 0.9, 0.25), Vec3(0.7, 0.9, -0.25), Vec3(-0.7, 0.9, 0.25), Vec3(-0.7, 0.9, -0.25)};
  for (std::uint32_t l = 0; l < 4; ++l) {
    specs.push_back({1 + l, std::nullopt, Vec3(hips[l].x(), 0.5, hips[l].z()), Vec3(0.2, 0.6, 0.2)});
  }
  specs.push_back({5, std::nullopt, Vec3(0.85, 1.85, 0.0), Vec3(0.2, 0.5, 0.2)});
  // Leaves.
  specs.push_back({6, 0u, Vec3(0.5, 1.2, 0.0), Vec3(0.65, 0.4, 0.45)});
  specs.push_back({7, 0u, Vec3(-0.5, 1.2, 0.0), Vec3(0.65, 0.4, 0.45)});
  for (std::uint32_t l = 0; l < 4; ++l) {
    specs.push_back({8 + 2 * l, 1 + l, Vec3(hips[l].x(), 0.725, hips[l].z()), Vec3(0.16, 0.32, 0.16)});
    specs.push_back({9 + 2 * l, 1 + l, Vec3(hips[l].x(), 0.25, hips[l].z()), Vec3(0.16, 0.32, 0.16)});
  }
  specs.push_back({16, 5u, Vec3(0.85, 1.675, 0.0), Vec3(0.17, 0.28, 0.17)});
  specs.push_back({17, 5u, Vec3(0.85, 2.025, 0.0), Vec3(0.17, 0.28, 0.17)});

  Built out{rig_from_specs(specs), box_mesh(Vec3(-1.0, 0.9, -0.35), Vec3(1.0, 1.5, 0.35), 8), {}};
  for (const auto& hip : hips) {
    append(out.mesh, capsule_mesh(Vec3(hip.x(), 0.95, hip.z()), Vec3(hip.x(), 0.1, hip.z()), 0.1, 12, 12));
  }
  append(out.mesh, capsule_mesh(Vec3(0.85, 1.45, 0.0), Vec3(0.85, 2.2, 0.0), 0.11, 12, 12));

  const double max_bend = spec.max_bend_deg * kPi / 180.0;
  const Rig rig = out.rig;
  std::vector<Vec3> hip_list(std::begin(hips), std::end(hips));
  out.pose = [rig, max_bend, hip_list](Rng& rng) {
    Pose p = rig.canonical_pose();
    for (std::uint32_t l = 0; l < 4; ++l) {
      const Vec3& hip = hip_list[l];
      const BoneId leg{1 + l};
      const BoneId lower{9 + 2 * l};
      p.locals[leg] = pivot_local(rig, leg, rot_z(rng.uniform(-max_bend, max_bend)), hip);
      p.locals[lower] = pivot_local(rig, lower, rot_z(rng.uniform(0.0, max_bend)), Vec3(hip.x(), 0.5, hip.z()));
    }
    p.locals[BoneId{5}] = pivot_local(rig, BoneId{5}, rot_z(rng.uniform(-0.5, 0.5) * max_bend), Vec3(0.85, 1.5, 0.0));
    p.locals[BoneId{17}] =
        pivot_local(rig, BoneId{17}, rot_z(rng.uniform(-0.5, 0.5) * max_bend), Vec3(0.85, 1.85, 0.0));
    return p;
  };
  return out;
}

Built build_dumbbell(const SynthSpec& spec) {
  std::vector<BoneSpec> specs = {{0, std::nullopt, Vec3(-1.0, 0.0, 0.0), Vec3(0.5, 0.5, 0.5)},
                                 {1, std::nullopt, Vec3(1.0, 0.0, 0.0), Vec3(0.5, 0.5, 0.5)}};
  Built out{rig_from_specs(specs), {}, {}};
  for (const auto& s : specs) {
    append(out.mesh, ellipsoid_mesh(RigidTransform::from_translation(s.center), 0.9 * s.scale));
  }
  const double max_bend = spec.max_bend_deg * kPi / 180.0;
  const Rig rig = out.rig;
  out.pose = [rig, max_bend](Rng& rng) {
    Pose p = rig.canonical_pose();
    for (auto& [id, local] : p.locals) {
      const Vec3 axis = rng.unit_vector();
      const double angle = rng.uniform(-max_bend, max_bend);
      local = RigidTransform::about_pivot(Eigen::AngleAxisd(angle, axis).toRotationMatrix(), local.translation) *
              local;
      local.translation += 0.2 * (angle / (max_bend > 0.0 ? max_bend : 1.0)) * rng.unit_vector();
    }
    return p;
  };
  return out;
}

}  // namespace

TriMesh capsule_mesh(const Vec3& a, const Vec3& b, double radius, int rings, int segments) {
  if (!(radius > 0.0) || rings < 1 || segments < 3) throw ArgumentError("bad capsule parameters");
  const Vec3 axis = b - a;
  const double len = axis.norm();
  if (!(len > 0.0)) throw ArgumentError("capsule endpoints coincide");
  const Vec3 u = axis / len;
  const int cap = 4;
  std::vector<std::pair<double, double>> profile;
  for (int j = 1; j <= cap; ++j) {
    const double th = -0.5 * kPi + 0.5 * kPi * j / cap;
    profile.emplace_back(radius * std::sin(th), radius * std::cos(th));
  }
  for (int j = 1; j <= rings; ++j) profile.emplace_back(len * j / rings, radius);
  for (int j = 1; j < cap; ++j) {
    const double th = 0.5 * kPi * j / cap;
    profile.emplace_back(len + radius * std::sin(th), radius * std::cos(th));
  }
  return revolve(a, u, -radius, len + radius, profile, segments);
}

TriMesh ellipsoid_mesh(const RigidTransform& frame, const Vec3& scale, int stacks, int slices) {
  if (stacks < 2 || slices < 3) throw ArgumentError("bad ellipsoid tessellation");
  std::vector<std::pair<double, double>> profile;
  for (int j = 1; j < stacks; ++j) {
    const double th = -0.5 * kPi + kPi * j / stacks;
    profile.emplace_back(std::sin(th), std::cos(th));
  }
  TriMesh m = revolve(Vec3::Zero(), Vec3::UnitZ(), -1.0, 1.0, profile, slices);
  for (auto& v : m.vertices) v = frame.apply(v.cwiseProduct(scale));
  return m;
}

TriMesh box_mesh(const Vec3& lo, const Vec3& hi, int n) {
  if (n < 1) throw ArgumentError("box subdivision must be >= 1");
  TriMesh m;
  for (int k = 0; k < 3; ++k) {
    const int a = (k + 1) % 3;
    const int b = (k + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const auto base = static_cast<std::uint32_t>(m.vertices.size());
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
          Vec3 p;
          p[k] = side ? hi[k] : lo[k];
          p[a] = lo[a] + (hi[a] - lo[a]) * i / n;
          p[b] = lo[b] + (hi[b] - lo[b]) * j / n;
          m.vertices.push_back(p);
        }
      }
      auto at = [&](int i, int j) { return base + static_cast<std::uint32_t>(i * (n + 1) + j); };
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (side) {
            m.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
          } else {
            m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
            m.triangles.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
          }
        }
      }
    }
  }
  return m;
}

Rig flatten_rig(const Rig& rig) {
  const auto world = compose_world(rig, rig.canonical_pose());
  std::vector<Bone> bones;
  for (BoneId id : rig.leaf_bones()) {
    Bone b;
    b.id = id;
    b.local = world.at(id);
    b.scale = rig.bone(id).scale;
    bones.push_back(b);
  }
  return Rig::from_bones(std::move(bones), rig.next_id());
}

Pose flatten_pose(const Rig& rig, const Pose& pose) {
  const auto world = compose_world(rig, pose);
  Pose out;
  out.frame = pose.frame;
  for (BoneId id : rig.leaf_bones()) out.locals[id] = world.at(id);
  return out;
}

Pose perturb_pose(const Rig& rig, const Pose& pose, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0.0)) throw ArgumentError("perturbation magnitude must be nonnegative");
  check_pose_covers(rig, pose);
  Pose out = pose;
  if (magnitude == 0.0) return out;
  Rng rng(seed);
  for (BoneId id : rig.depth_first()) {
    RigidTransform& local = out.locals.at(id);
    local.rotation = Eigen::AngleAxisd(magnitude, rng.unit_vector()).toRotationMatrix() * local.rotation;
    local.translation += magnitude * rig.bone(id).scale.maxCoeff() * rng.unit_vector();
  }
  return out;
}

std::vector<Camera> default_cameras(const Aabb& box, int size) {
  const Vec3 c = box.center();
  const double r = 0.5 * box.diagonal();
  const double fov = 40.0;
  const double dist = 1.05 * r / std::tan(0.5 * fov * kPi / 180.0);
  return {Camera::look_at(c + Vec3(0.0, 0.0, dist), c, Vec3::UnitY(), size, size, fov),
          Camera::look_at(c + Vec3(dist, 0.0, 0.0), c, Vec3::UnitY(), size, size, fov),
          Camera::look_at(c + Vec3(0.0, dist, 0.0), c, -Vec3::UnitZ(), size, size, fov)};
}

SynthScenario make_scenario(const SynthSpec& spec) {
  spec.validate();
  Built built = spec.kind == SynthKind::Chain       ? build_chain(spec)
                : spec.kind == SynthKind::Quadruped ? build_quadruped(spec)
                                                    : build_dumbbell(spec);
  Rng rng(spec.seed);
  std::vector<Pose> poses;
  for (int f = 0; f < spec.n_frames; ++f) {
    Pose p = built.pose(rng);
    p.frame = f;
    poses.push_back(std::move(p));
  }
  if (spec.flat && spec.kind == SynthKind::Quadruped) {
    for (auto& p : poses) p = flatten_pose(built.rig, p);
    built.rig = flatten_rig(built.rig);
  }

  SynthScenario s{spec, built.rig, std::move(poses), std::move(built.mesh), {}, {}, {}, {}};
  validate(s.canonical);
  s.skinned = bind_surface(s.rig, s.canonical);
  for (std::size_t f = 0; f < s.poses.size(); ++f) {
    TriMesh frame = deformed_mesh(s.skinned, s.rig, s.poses[f]);
    if (spec.noise > 0.0) {
      Rng jitter(spec.seed ^ (0x9e3779b97f4a7c15ull * (f + 1)));
      for (auto& v : frame.vertices) v += spec.noise * Vec3(jitter.normal(), jitter.normal(), jitter.normal());
    }
    s.frames.push_back(std::move(frame));
  }
  const Aabb box = bounds_of(s.canonical.vertices);
  s.cameras = default_cameras(box.inflated(0.15 * box.diagonal()), spec.mask_size);
  if (spec.render_masks) {
    for (const Pose& p : s.poses) {
      std::vector<MaskImage> views;
      for (const Camera& cam : s.cameras) views.push_back(render_bone_mask(s.rig, p, cam, spec.occupancy));
      s.masks.push_back(std::move(views));
    }
  }
  return s;
}

}  // namespace boneforge
