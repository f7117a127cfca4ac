#include <doctest.h>

#include <cmath>
#include <numbers>

#include "errors.hpp"
#include "support.hpp"
#include "synth.hpp"

using namespace bft;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

SynthScenario scenario(SynthKind kind, int frames, std::uint64_t seed, double bend = 30.0) {
  SynthSpec spec;
  spec.kind = kind;
  spec.n_frames = frames;
  spec.seed = seed;
  spec.max_bend_deg = bend;
  spec.mask_size = 16;
  return make_scenario(spec);
}

double point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("scenario kinds parse") {
    CHECK(parse_synth_kind("chain-3") == std::pair{SynthKind::Chain, 3});
    CHECK(parse_synth_kind("chain-12") == std::pair{SynthKind::Chain, 12});
    CHECK(parse_synth_kind("quadruped").first == SynthKind::Quadruped);
    CHECK(parse_synth_kind("dumbbell").first == SynthKind::Dumbbell);
    for (const char* bad : {"chain-", "chain-0", "chain-x", "chain-1234", "biped", ""}) {
      CHECK_THROWS_AS(parse_synth_kind(bad), ArgumentError);
    }
    SynthSpec spec;
    spec.n_frames = 0;
    CHECK_THROWS_AS(make_scenario(spec), ArgumentError);
    spec.n_frames = 1;
    spec.max_bend_deg = 200;
    CHECK_THROWS_AS(make_scenario(spec), ArgumentError);
  }

  TEST_CASE("chain structure") {
    const SynthScenario s = scenario(SynthKind::Chain, 2, 0);
    CHECK(s.rig.size() == 3);
    CHECK(s.rig.roots().size() == 3);
    CHECK(s.poses.size() == 2);
    CHECK(s.frames.size() == 2);
    CHECK(s.masks.size() == 2);
    CHECK(s.masks[0].size() == 3);
    for (const Vec3& v : s.canonical.vertices) CHECK(point_segment(v, Vec3::Zero(), Vec3(3, 0, 0)) == doctest::Approx(0.15));
  }

  TEST_CASE("rest poses reproduce the canonical frame") {
    for (SynthKind kind : {SynthKind::Chain, SynthKind::Quadruped, SynthKind::Dumbbell}) {
      const SynthScenario s = scenario(kind, 3, 4, 0.0);
      const auto canon = compose_world(s.rig, s.rig.canonical_pose());
      for (std::size_t f = 0; f < s.poses.size(); ++f) {
        CHECK(s.poses[f].frame == static_cast<std::int64_t>(f));
        const auto world = compose_world(s.rig, s.poses[f]);
        for (const auto& [id, t] : canon) {
          CHECK((world.at(id).matrix() - t.matrix()).lpNorm<Eigen::Infinity>() < 1e-12);
        }
        for (std::size_t i = 0; i < s.canonical.vertices.size(); ++i) {
          CHECK((s.frames[f].vertices[i] - s.canonical.vertices[i]).norm() < 1e-12);
        }
      }
    }
  }

  TEST_CASE("bent chain stays inside the blend hull") {
    const SynthScenario s = scenario(SynthKind::Chain, 4, 5);
    const auto canon = compose_world(s.rig, s.rig.canonical_pose());
    const auto leaves = s.rig.leaf_bones();
    for (std::size_t f = 0; f < s.poses.size(); ++f) {
      const auto world = compose_world(s.rig, s.poses[f]);
      std::vector<RigidTransform> maps;
      for (BoneId id : leaves) maps.push_back(world.at(id) * canon.at(id).inverse());
      for (std::size_t i = 0; i < s.canonical.vertices.size(); ++i) {
        const Vec3& x = s.canonical.vertices[i];
        const auto w = s.skinned.weights.row(static_cast<Eigen::Index>(i));
        Eigen::Index own = 0;
        w.maxCoeff(&own);
        const Vec3 rigid = maps[static_cast<std::size_t>(own)].apply(x);
        double spread = 0.0;
        for (const auto& m : maps) spread = std::max(spread, (m.apply(x) - rigid).norm());
        CHECK((s.frames[f].vertices[i] - rigid).norm() <= (1.0 - w(own)) * spread + 1e-12);
      }
    }
  }

  TEST_CASE("same seed, same scenario") {
    for (SynthKind kind : {SynthKind::Chain, SynthKind::Quadruped, SynthKind::Dumbbell}) {
      SynthSpec spec;
      spec.kind = kind;
      spec.n_frames = 2;
      spec.seed = 17;
      spec.noise = 0.01;
      spec.mask_size = 12;
      const SynthScenario a = make_scenario(spec);
      const SynthScenario b = make_scenario(spec);
      CHECK(a.rig == b.rig);
      for (std::size_t f = 0; f < 2; ++f) {
        CHECK(a.poses[f].locals == b.poses[f].locals);
        CHECK(a.frames[f].vertices == b.frames[f].vertices);
        for (std::size_t v = 0; v < 3; ++v) CHECK(a.masks[f][v].values == b.masks[f][v].values);
      }
      spec.seed = 18;
      const SynthScenario c = make_scenario(spec);
      CHECK(c.frames[0].vertices != a.frames[0].vertices);
    }
  }

  TEST_CASE("noise jitters frames around the clean deformation") {
    SynthSpec spec;
    spec.seed = 3;
    spec.render_masks = false;
    const SynthScenario clean = make_scenario(spec);
    spec.noise = 0.01;
    const SynthScenario noisy = make_scenario(spec);
    CHECK(noisy.masks.empty());
    double sq = 0.0;
    const auto& a = clean.frames[0].vertices;
    const auto& b = noisy.frames[0].vertices;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]).squaredNorm();
    const double rms = std::sqrt(sq / (3.0 * static_cast<double>(a.size())));
    CHECK(rms == doctest::Approx(0.01).epsilon(0.1));
  }

  TEST_CASE("quadruped hierarchy and its flat counterpart") {
    SynthSpec spec;
    spec.kind = SynthKind::Quadruped;
    spec.n_frames = 2;
    spec.seed = 6;
    spec.render_masks = false;
    const SynthScenario h = make_scenario(spec);
    CHECK(h.rig.size() == 18);
    CHECK(h.rig.roots().size() == 6);
    CHECK(h.rig.leaf_bones().size() == 12);
    CHECK(h.rig.max_depth() == 2);
    spec.flat = true;
    const SynthScenario f = make_scenario(spec);
    CHECK(f.rig.size() == 12);
    CHECK(f.rig.roots().size() == 12);
    CHECK(f.rig.leaf_bones() == h.rig.leaf_bones());
    CHECK((f.skinned.weights - h.skinned.weights).lpNorm<Eigen::Infinity>() < 1e-12);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto hw = compose_world(h.rig, h.poses[k]);
      const auto fw = compose_world(f.rig, f.poses[k]);
      for (BoneId id : f.rig.leaf_bones()) CHECK((hw.at(id).matrix() - fw.at(id).matrix()).norm() < 1e-12);
      for (std::size_t i = 0; i < h.frames[k].vertices.size(); ++i) {
        CHECK((h.frames[k].vertices[i] - f.frames[k].vertices[i]).norm() < 1e-12);
      }
    }
  }

  TEST_CASE("pose perturbation") {
    const SynthScenario s = scenario(SynthKind::Quadruped, 1, 7);
    const Pose& p = s.poses[0];
    CHECK(perturb_pose(s.rig, p, 0.0, 1).locals == p.locals);
    const Pose q = perturb_pose(s.rig, p, 20.0 * kDeg, 1);
    for (const auto& [id, t] : p.locals) {
      CHECK(std::abs(rotation_angle_between(q.locals.at(id).rotation, t.rotation) - 20.0 * kDeg) < 1e-9);
      const double shift = (q.locals.at(id).translation - t.translation).norm();
      CHECK(shift == doctest::Approx(20.0 * kDeg * s.rig.bone(id).scale.maxCoeff()).epsilon(1e-12));
    }
    CHECK(perturb_pose(s.rig, p, 20.0 * kDeg, 1).locals == q.locals);
    CHECK(perturb_pose(s.rig, p, 20.0 * kDeg, 2).locals != q.locals);
    CHECK_THROWS_AS(perturb_pose(s.rig, p, -1.0, 1), ArgumentError);
  }

  TEST_CASE("masks are opaque where the exact depth is large") {
    for (SynthKind kind : {SynthKind::Chain, SynthKind::Quadruped}) {
      SynthSpec spec;
      spec.kind = kind;
      spec.max_bend_deg = 0.0;
      spec.mask_size = 33;
      const SynthScenario s = make_scenario(spec);
      const auto leaves = leaf_frames(s.rig, s.poses[0]);
      const Aabb volume = occupancy_bounds(leaves, s.spec.occupancy);
      int opaque = 0, long_chords = 0;
      for (const MaskImage& m : s.masks[0]) {
        for (int py = 0; py < m.height; ++py) {
          for (int px = 0; px < m.width; ++px) {
            const Ray ray = m.camera.pixel_ray(px, py);
            // optical depth by fine quadrature along the ray
            double depth = 0.0;
            if (const auto span = clip_ray(ray, volume)) {
              const double step = (span->second - span->first) / 2000.0;
              for (int i = 0; i < 2000; ++i) {
                const Vec3 x = ray.origin + (span->first + (i + 0.5) * step) * ray.direction;
                const OccupancyConfig& occ = s.spec.occupancy;
                depth += occ.density_scale * occ_density(unified_occ(x, leaves, occ), occ) * step;
              }
            }
            if (depth > 6.0) {
              ++long_chords;
              if (m.at(px, py) > 0.99) ++opaque;
            }
          }
        }
        CHECK(m.at(0, 0) < 1e-3);
        CHECK(m.at(m.width - 1, m.height - 1) < 1e-3);
      }
      MESSAGE(to_string(kind) << ": " << long_chords << " long chords");
      CHECK(long_chords > 0);
      CHECK(opaque == long_chords);
    }
  }

  TEST_CASE("ground-truth bones satisfy the regularizers") {
    for (SynthKind kind : {SynthKind::Chain, SynthKind::Quadruped, SynthKind::Dumbbell}) {
      SynthSpec spec;
      spec.kind = kind;
      spec.render_masks = false;
      const SynthScenario s = make_scenario(spec);
      const auto leaves = leaf_frames(s.rig, s.rig.canonical_pose());
      const OccupancyConfig cfg;
      const double overlap = overlap_loss(s.canonical.vertices, leaves, cfg, Want::Value).value;
      const double cover = coverage_loss(s.canonical.vertices, leaves, cfg, Want::Value).value;
      MESSAGE(to_string(kind) << ": overlap " << overlap << " cover " << cover);
      CHECK(overlap < 1e-3);
      CHECK(cover < 1e-3);
    }
  }

  TEST_CASE("primitive meshes") {
    Rng rng(8);
    const RigidTransform frame = random_transform(rng);
    const Vec3 scale(0.7, 0.3, 1.1);
    const TriMesh e = ellipsoid_mesh(frame, scale);
    validate(e);
    for (const Vec3& v : e.vertices) CHECK(dense_mahalanobis(v, frame.matrix(), scale) == doctest::Approx(1.0));

    const TriMesh c = capsule_mesh(Vec3(1, 2, 3), Vec3(2, 2, 5), 0.4, 24, 48);
    validate(c);
    for (const Vec3& v : c.vertices) CHECK(point_segment(v, Vec3(1, 2, 3), Vec3(2, 2, 5)) == doctest::Approx(0.4));
    const double len = std::sqrt(5.0);
    const double area = 2.0 * std::numbers::pi * 0.4 * len + 4.0 * std::numbers::pi * 0.16;
    CHECK(surface_area(c) == doctest::Approx(area).epsilon(0.03));
    CHECK_THROWS_AS(capsule_mesh(Vec3::Zero(), Vec3::Zero(), 1.0), ArgumentError);

    const TriMesh b = box_mesh(Vec3(0, 0, 0), Vec3(1, 2, 3), 4);
    validate(b);
    CHECK(surface_area(b) == doctest::Approx(22.0));
    // outward winding: positive signed volume
    double vol = 0.0;
    for (const auto& t : b.triangles) {
      vol += b.vertices[t[0]].dot(b.vertices[t[1]].cross(b.vertices[t[2]])) / 6.0;
    }
    CHECK(vol == doctest::Approx(6.0));
  }

  TEST_CASE("default cameras frame the box") {
    Aabb box{Vec3(-1, -2, -0.5), Vec3(3, 1, 0.5)};
    const auto cams = default_cameras(box, 20);
    REQUIRE(cams.size() == 3);
    for (const Camera& cam : cams) {
      CHECK(cam.width == 20);
      const Ray r = cam.pixel_ray(10, 10);
      CHECK(clip_ray(r, box).has_value());
      for (const Vec3& corner : {box.lo, box.hi}) CHECK((corner - r.origin).norm() > 0.5 * box.diagonal());
    }
  }
}
