#include <doctest.h>

#include <cmath>
#include <numbers>

#include "errors.hpp"
#include "fit.hpp"
#include "kmeans.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "support.hpp"
#include "synth.hpp"

using namespace bft;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

class Quadratic : public DescentProblem {
 public:
  explicit Quadratic(Eigen::VectorXd diag) : d_(std::move(diag)), x_(Eigen::VectorXd::Ones(d_.size())) {}
  double value_and_gradient(Eigen::VectorXd& grad) override {
    grad = d_.cwiseProduct(x_);
    return value(x_);
  }
  double try_step(const Eigen::VectorXd& step) override {
    trial_ = x_ + step;
    return value(trial_);
  }
  void accept() override { x_ = trial_; }
  Eigen::Index dimension() const override { return d_.size(); }
  const Eigen::VectorXd& x() const { return x_; }
  bool poison = false;

 private:
  double value(const Eigen::VectorXd& x) const {
    return poison ? std::nan("") : 0.5 * x.dot(d_.cwiseProduct(x));
  }
  Eigen::VectorXd d_, x_, trial_;
};

std::vector<Vec3> two_blobs(Rng& rng, const Vec3& a, const Vec3& b, int n) {
  auto pa = random_points(rng, n, 0.1, a);
  auto pb = random_points(rng, n, 0.1, b);
  pa.insert(pa.end(), pb.begin(), pb.end());
  return pa;
}

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

SynthScenario chain(int frames, std::uint64_t seed) {
  SynthSpec spec;
  spec.kind = SynthKind::Chain;
  spec.chain_k = 3;
  spec.n_frames = frames;
  spec.seed = seed;
  spec.render_masks = false;
  return make_scenario(spec);
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("gradient descent trace never increases") {
    Eigen::VectorXd d(4);
    d << 1.0, 10.0, 100.0, 0.5;
    Quadratic q(d);
    DescentOptions opt;
    opt.max_steps = 300;
    opt.value_tol = 1e-20;
    const DescentResult r = minimize(q, opt);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].value <= r.trace[i - 1].value);
    CHECK(r.trace.back().value < 1e-4 * r.trace.front().value);
    CHECK(r.trace.front().step == 0);
  }

  TEST_CASE("adam moves toward the minimum") {
    Eigen::VectorXd d(3);
    d << 1.0, 4.0, 9.0;
    Quadratic q(d);
    DescentOptions opt;
    opt.method = OptimizerKind::Adam;
    opt.step_size = 0.05;
    opt.max_steps = 500;
    const DescentResult r = minimize(q, opt);
    CHECK(r.trace.back().value < 1e-3 * r.trace.front().value);
  }

  TEST_CASE("non-finite objective is a numerical error") {
    Eigen::VectorXd d(2);
    d << 1.0, 1.0;
    Quadratic q(d);
    q.poison = true;
    CHECK_THROWS_AS(minimize(q, DescentOptions{}), NumericalError);
  }

  TEST_CASE("lloyd equals the brute-force oracle bit for bit") {
    Rng rng(71);
    for (int trial = 0; trial < 40; ++trial) {
      const auto pts = random_points(rng, 50 + static_cast<int>(rng.below(450)), 1.0);
      const std::size_t k = 1 + rng.below(8);
      const auto seeds = kmeans_plus_plus(pts, k, trial);
      const Clustering c = lloyd(pts, seeds, 100);
      const auto oracle = brute_lloyd(pts, seeds, 100);
      REQUIRE(c.centers.size() == oracle.size());
      for (std::size_t i = 0; i < k; ++i) CHECK(c.centers[i] == oracle[i]);
    }
  }

  TEST_CASE("k-means++ is seeded and picks data points") {
    Rng rng(72);
    const auto pts = random_points(rng, 100, 1.0);
    CHECK(kmeans_plus_plus(pts, 5, 3) == kmeans_plus_plus(pts, 5, 3));
    for (const Vec3& c : kmeans_plus_plus(pts, 5, 3)) CHECK(std::find(pts.begin(), pts.end(), c) != pts.end());
    CHECK_THROWS_AS(kmeans_plus_plus(pts, 101, 0), ArgumentError);
  }

  TEST_CASE("spawning children on two blobs lands on the centroids") {
    Rng rng(73);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), 0);
      const Vec3 b = a + Vec3(2.0, rng.uniform(-1, 1), rng.uniform(-1, 1));
      const auto pts = two_blobs(rng, a, b, 60);
      Bone root;
      root.id = BoneId{0};
      root.local = RigidTransform{rng.rotation(), 0.5 * (a + b)};
      root.scale = Vec3(2, 1, 1);
      const Rig rig = Rig::from_bones({root});
      const SkinnedSurface surf = bind_points(rig, pts);
      const GrowResult g = grow_depth(rig, std::vector<Pose>{rig.canonical_pose()}, surf, 2, trial);
      REQUIRE(g.new_bones.size() == 2);
      const auto world = compose_world(g.rig, g.rig.canonical_pose());
      std::vector<Vec3> got{world.at(g.new_bones[0]).translation, world.at(g.new_bones[1]).translation};
      if ((got[0] - a).norm() > (got[1] - a).norm()) std::swap(got[0], got[1]);
      const std::span<const Vec3> all(pts);
      CHECK((got[0] - centroid(all.subspan(0, 60))).norm() < 1e-6);
      CHECK((got[1] - centroid(all.subspan(60))).norm() < 1e-6);
      // and the independent Lloyd iteration from the same seeds agrees
      const auto oracle = brute_lloyd(pts, kmeans_plus_plus(pts, 2, trial), 100);
      const auto w = compose_world(g.rig, g.rig.canonical_pose());
      for (std::size_t j = 0; j < 2; ++j) CHECK((w.at(g.new_bones[j]).translation - oracle[j]).norm() < 1e-12);
      // children: identity local rotation, half the parent scale
      for (BoneId id : g.new_bones) {
        CHECK(g.rig.bone(id).local.rotation == Mat3::Identity());
        CHECK(g.rig.bone(id).scale == 0.5 * root.scale);
      }
      CHECK(g.poses[0].locals.size() == 3);
    }
  }

  TEST_CASE("growth keeps existing bones and skips starved leaves") {
    Rng rng(74);
    Rig rig = random_rig(rng, 5, 2);
    const SkinnedSurface surf = bind_points(rig, random_points(rng, 200, 1.5));
    const auto before = compose_world(rig, rig.canonical_pose());
    const GrowResult g = grow_depth(rig, {}, surf, 3, 1);
    const auto after = compose_world(g.rig, g.rig.canonical_pose());
    for (const auto& [id, t] : before) CHECK(after.at(id) == t);
    CHECK(g.new_bones.size() + 3 * g.skipped.size() == 3 * rig.leaf_bones().size());

    const GrowResult starved = grow_depth(rig, {}, surf, 1000, 1);
    CHECK(starved.new_bones.empty());
    CHECK(starved.skipped.size() == rig.leaf_bones().size());
  }

  TEST_CASE("spawn_children validates its parent") {
    Rng rng(75);
    Rig rig = random_rig(rng, 3, 1);
    const SkinnedSurface surf = bind_points(rig, random_points(rng, 30, 1.0));
    CHECK_THROWS_AS(spawn_children(rig, {}, surf, BoneId{99}, 2, 0), DataError);
    CHECK_THROWS_AS(spawn_children(rig, {}, surf, rig.roots()[0], 500, 0), DataError);
  }

  TEST_CASE("five roots grow to ten leaves") {
    Rng rng(76);
    std::vector<Vec3> pts;
    for (int r = 0; r < 5; ++r) {
      const auto blob = two_blobs(rng, Vec3(3.0 * r, 0, 0), Vec3(3.0 * r, 0.8, 0), 20);
      pts.insert(pts.end(), blob.begin(), blob.end());
    }
    const Rig roots = init_roots(pts, 5, 0);
    CHECK(roots.roots().size() == 5);
    const SkinnedSurface surf = bind_points(roots, pts);
    const GrowResult g = grow_depth(roots, {}, surf, 2, 0);
    CHECK(g.rig.leaf_bones().size() == 10);
    CHECK(g.rig.size() == 15);
  }

  TEST_CASE("retarget stops at step zero on its own deformation") {
    const SynthScenario s = chain(1, 1);
    const Pose& pose = s.poses[0];
    const auto target = deform(s.skinned, s.rig, pose);
    OptimConfig cfg;
    const RetargetReport r = retarget(s.rig, s.skinned, pose, target, cfg);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].step == 0);
    CHECK(r.trace[0].cd < cfg.convergence_tol);
    CHECK(r.stop_reason == "converged");
  }

  TEST_CASE("retarget leaves canonical data untouched and is deterministic") {
    const SynthScenario s = chain(2, 2);
    const Pose init = perturb_pose(s.rig, s.poses[1], 20.0 * kDeg, 9);
    const auto target = sample_surface(s.frames[1], 2000, 0).points;
    const SkinnedSurface surf_copy = s.skinned;
    const Rig rig_copy = s.rig;
    OptimConfig cfg;
    cfg.max_steps = 30;
    set_thread_count(1);
    const RetargetReport a = retarget(s.rig, s.skinned, init, target, cfg);
    set_thread_count(3);
    const RetargetReport b = retarget(s.rig, s.skinned, init, target, cfg);
    set_thread_count(0);
    CHECK(s.skinned.vertices == surf_copy.vertices);
    CHECK(s.skinned.weights == surf_copy.weights);
    CHECK(s.rig == rig_copy);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].cd == b.trace[i].cd);
      CHECK(a.trace[i].loss == b.trace[i].loss);
    }
    CHECK(a.final_pose.locals == b.final_pose.locals);
    for (std::size_t i = 1; i < a.trace.size(); ++i) CHECK(a.trace[i].loss <= a.trace[i - 1].loss);
  }

  TEST_CASE("retarget with zero data weight is a no-op") {
    const SynthScenario s = chain(1, 3);
    const Pose init = perturb_pose(s.rig, s.poses[0], 0.3, 1);
    OptimConfig cfg;
    cfg.loss_weights.data = 0.0;
    const RetargetReport r = retarget(s.rig, s.skinned, init, s.frames[0].vertices, cfg);
    CHECK(r.final_pose.locals == init.locals);
    CHECK(r.trace.size() == 1);
  }

  TEST_CASE("retarget recovers a perturbed chain") {
    const SynthScenario s = chain(2, 4);
    const Aabb box = bounds_of(s.frames[1].vertices);
    const auto target = sample_surface(s.frames[1], 5000, 0).points;
    const Pose init = perturb_pose(s.rig, s.poses[1], 20.0 * kDeg, 11);
    OptimConfig cfg;
    cfg.max_steps = 200;
    const RetargetReport r = retarget(s.rig, s.skinned, init, target, cfg);
    MESSAGE("cd at 50/100/150/200: " << cd_at_step(r, 50) << " " << cd_at_step(r, 100) << " " << cd_at_step(r, 150)
                                     << " " << cd_at_step(r, 200) << ", threshold " << 0.01 * box.diagonal());
    CHECK(r.trace.back().step <= 200);
    CHECK(r.trace.back().cd < 0.01 * box.diagonal());
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].cd <= r.trace[i - 1].cd);
    CHECK(steps_to_threshold(r, 0.01 * box.diagonal()) >= 0);
  }

  TEST_CASE("leaves-only retarget keeps inner bones fixed") {
    SynthSpec spec;
    spec.kind = SynthKind::Quadruped;
    spec.render_masks = false;
    spec.n_frames = 1;
    const SynthScenario s = make_scenario(spec);
    const Pose init = s.rig.canonical_pose();
    OptimConfig cfg;
    cfg.max_steps = 5;
    cfg.leaves_only = true;
    const RetargetReport r = retarget(s.rig, s.skinned, init, s.frames[0].vertices, cfg);
    for (const auto& [id, b] : s.rig.bones()) {
      if (!b.children.empty()) CHECK(r.final_pose.locals.at(id) == init.locals.at(id));
    }
  }

  TEST_CASE("retarget argument errors") {
    const SynthScenario s = chain(1, 5);
    OptimConfig cfg;
    CHECK_THROWS_AS(retarget(s.rig, s.skinned, s.poses[0], std::vector<Vec3>{}, cfg), ArgumentError);
    Rig grown = add_child_bones(s.rig, BoneId{0}, std::vector<ChildInit>(2));
    CHECK_THROWS_AS(retarget(grown, s.skinned, conform_pose(grown, s.poses[0]), s.frames[0].vertices, cfg), DataError);
    cfg.step_size = -1;
    CHECK_THROWS_AS(retarget(s.rig, s.skinned, s.poses[0], s.frames[0].vertices, cfg), ArgumentError);
  }

  TEST_CASE("fit from ground truth sits on the floor") {
    SynthSpec spec;
    spec.kind = SynthKind::Chain;
    spec.chain_k = 3;
    spec.mask_size = 24;
    spec.max_bend_deg = 0.0;
    const SynthScenario s = make_scenario(spec);
    const auto surface = sample_surface(s.canonical, 1500, 0).points;
    FitConfig cfg;
    cfg.max_steps = 100;
    RenderSettings rs;
    rs.volume = occupancy_bounds(leaf_frames(s.rig, s.rig.canonical_pose()), cfg.occupancy);
    cfg.render = rs;
    const FitResult r = fit_bones(s.rig, s.rig.canonical_pose(), surface, s.masks[0], cfg);
    MESSAGE("initial " << r.initial.total << " final " << r.final.total);
    CHECK(r.initial.total < 1e-3);
    CHECK(r.final.total <= r.initial.total);
    for (const auto& [id, b] : s.rig.bones()) {
      CHECK((r.rig.bone(id).local.translation - b.local.translation).norm() < 1e-3);
      CHECK((r.rig.bone(id).scale - b.scale).norm() < 1e-3);
      CHECK(rotation_angle_between(r.rig.bone(id).local.rotation, b.local.rotation) < 1e-3);
    }
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].value <= r.trace[i - 1].value);
  }

  TEST_CASE("fit with all weights zero changes nothing") {
    const SynthScenario s = [] {
      SynthSpec spec;
      spec.mask_size = 12;
      return make_scenario(spec);
    }();
    Rng rng(77);
    Rig start = s.rig;
    for (BoneId id : start.leaf_bones()) start = start.with_scale(id, start.bone(id).scale * 1.3);
    FitConfig cfg;
    cfg.weights = LossWeights{0.0, 0.0, 0.0, 0.0};
    cfg.max_steps = 10;
    const FitResult r = fit_bones(start, start.canonical_pose(), s.canonical.vertices, s.masks[0], cfg);
    CHECK(r.rig == start);
  }

  TEST_CASE("lambda zero pushes bones apart") {
    Bone a;
    a.id = BoneId{0};
    a.local.translation = Vec3(-0.1, 0, 0);
    a.scale = Vec3(0.5, 0.4, 0.4);
    Bone b = a;
    b.id = BoneId{1};
    b.local.translation = Vec3(0.1, 0.05, 0);
    const Rig rig = Rig::from_bones({a, b});
    Rng rng(78);
    const auto surface = random_points(rng, 400, 0.6);
    FitConfig cfg;
    cfg.occupancy.lambda_max = 0.0;
    cfg.weights = LossWeights{0.0, 1.0, 0.0, 1.0};
    cfg.max_steps = 200;
    MaskImage dummy;
    dummy.width = dummy.height = 1;
    dummy.values = {0.0};
    dummy.camera = Camera::look_at(Vec3(0, 0, 5), Vec3::Zero(), Vec3::UnitY(), 1, 1, 10);
    const std::vector<MaskImage> views{dummy};
    auto soft_sum = [&](const Rig& r) {
      const auto leaves = leaf_frames(r, r.canonical_pose());
      double total = 0.0;
      for (const Vec3& x : surface) {
        for (const auto& f : leaves) total += occ_density(bone_occ(x, f.world, f.scale, cfg.occupancy), cfg.occupancy);
      }
      return total / static_cast<double>(surface.size());
    };
    const FitResult r = fit_bones(rig, rig.canonical_pose(), surface, views, cfg);
    MESSAGE("mean soft occupancy " << soft_sum(rig) << " -> " << soft_sum(r.rig));
    CHECK(soft_sum(r.rig) < soft_sum(rig));
  }

  TEST_CASE("coarse to fine leaf counts") {
    Rng rng(79);
    const TriMesh blob = ellipsoid_mesh(RigidTransform::identity(), Vec3(2.0, 0.6, 0.4), 16, 24);
    const auto surface = sample_surface(blob, 800, 0).points;
    Aabb box = bounds_of(surface);
    std::vector<MaskImage> views;
    for (const auto& cam : default_cameras(box.inflated(0.2), 12)) {
      MaskImage m;
      m.width = m.height = 12;
      m.values.assign(144, 0.0);
      m.camera = cam;
      views.push_back(m);
    }
    CoarseToFineConfig cfg;
    cfg.depths = 3;
    cfg.k_children = 2;
    cfg.steps_per_depth = 2;
    const CoarseToFineResult r = coarse_to_fine(init_roots(surface, 6, 0), surface, views, cfg);
    CHECK(r.rig.leaf_bones().size() == 24);
    CHECK(r.rig.max_depth() == 3);
    REQUIRE(r.summary.size() == 3);
    CHECK(r.summary[0].leaves == 6);
    CHECK(r.summary[1].leaves == 12);
    CHECK(r.summary[2].leaves == 24);

    cfg.depths = 1;
    cfg.steps_per_depth = 5;
    const Rig roots = init_roots(surface, 3, 0);
    const CoarseToFineResult one = coarse_to_fine(roots, surface, views, cfg);
    FitConfig fc = cfg.fit;
    fc.max_steps = 5;
    const FitResult direct = fit_bones(roots, roots.canonical_pose(), surface, views, fc);
    CHECK(one.rig == direct.rig);
  }
}
