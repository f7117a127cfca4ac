#include "fit.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "kmeans.hpp"

namespace boneforge {

void FitConfig::validate() const {
  occupancy.validate();
  if (render.samples_per_ray < 1) throw ArgumentError("samples_per_ray must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ArgumentError("step_size must be positive");
  if (max_steps < 0) throw ArgumentError("max_steps must be nonnegative");
  for (double v : {weights.bone_mask, weights.overlap, weights.cover}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("loss weights must be finite and nonnegative");
  }
}

namespace {

OccupancyConfig clamp_cover(OccupancyConfig cfg, std::size_t n_surface) {
  cfg.n_cover = std::min(cfg.n_cover, n_surface);
  return cfg;
}

Aabb fit_volume(std::span<const Vec3> surface, const RenderSettings& render) {
  if (render.volume) return *render.volume;
  const Aabb box = bounds_of(std::vector<Vec3>(surface.begin(), surface.end()));
  return box.inflated(0.25 * box.diagonal());
}

// Weighted terms and, when `grad` is set, per-leaf gradients of the total.
FitTerms evaluate_terms(std::span<const LeafFrame> leaves, std::span<const Vec3> surface,
                        std::span<const MaskImage> gt_views, const FitConfig& cfg, const RenderSettings& render,
                        std::vector<BoneGradient>* grad) {
  const Want want = grad ? Want::ValueAndGradient : Want::Value;
  const OccupancyConfig occ = clamp_cover(cfg.occupancy, surface.size());
  FitTerms t;
  if (grad) grad->assign(leaves.size(), BoneGradient{});
  auto add = [&](const LossValue& lv, double w) {
    if (!grad) return;
    for (std::size_t b = 0; b < leaves.size(); ++b) {
      BoneGradient g = lv.grad[b];
      g *= w;
      (*grad)[b] += g;
    }
  };
  if (cfg.weights.bone_mask > 0.0 && !gt_views.empty()) {
    const LossValue lv = bone_mask_loss(leaves, gt_views, occ, render, want);
    t.bone_mask = lv.value;
    add(lv, cfg.weights.bone_mask);
  }
  if (cfg.weights.overlap > 0.0) {
    const LossValue lv = overlap_loss(surface, leaves, occ, want);
    t.overlap = lv.value;
    add(lv, cfg.weights.overlap);
  }
  if (cfg.weights.cover > 0.0) {
    const LossValue lv = coverage_loss(surface, leaves, occ, want);
    t.cover = lv.value;
    add(lv, cfg.weights.cover);
  }
  t.total = cfg.weights.bone_mask * t.bone_mask + cfg.weights.overlap * t.overlap + cfg.weights.cover * t.cover;
  return t;
}

// Nine numbers per leaf: [center step, world rotation increment, log-scale step].
class FitProblem final : public DescentProblem {
 public:
  FitProblem(std::vector<LeafFrame> leaves, std::span<const Vec3> surface, std::span<const MaskImage> gt_views,
             const FitConfig& cfg, const RenderSettings& render)
      : leaves_(std::move(leaves)), surface_(surface), views_(gt_views), cfg_(cfg), render_(render) {
    for (const auto& l : leaves_) lengths_.push_back(l.scale.maxCoeff());
  }

  double value_and_gradient(Eigen::VectorXd& grad) override {
    std::vector<BoneGradient> g;
    terms_ = evaluate_terms(leaves_, surface_, views_, cfg_, render_, &g);
    grad.setZero(dimension());
    for (std::size_t b = 0; b < leaves_.size(); ++b) {
      const auto base = static_cast<Eigen::Index>(9 * b);
      grad.segment<3>(base) = g[b].center;
      grad.segment<3>(base + 3) = g[b].rotation;
      grad.segment<3>(base + 6) = g[b].scale.cwiseProduct(leaves_[b].scale);
    }
    return terms_.total;
  }
  double try_step(const Eigen::VectorXd& step) override {
    trial_ = leaves_;
    for (std::size_t b = 0; b < trial_.size(); ++b) {
      const auto base = static_cast<Eigen::Index>(9 * b);
      trial_[b].world.translation += step.segment<3>(base);
      trial_[b].world.rotation = exp_so3(step.segment<3>(base + 3)) * trial_[b].world.rotation;
      trial_[b].scale = trial_[b].scale.cwiseProduct(step.segment<3>(base + 6).array().exp().matrix());
    }
    return evaluate_terms(trial_, surface_, views_, cfg_, render_, nullptr).total;
  }
  void accept() override { leaves_ = std::move(trial_); }
  Eigen::VectorXd preconditioner() const override {
    Eigen::VectorXd p(dimension());
    for (std::size_t b = 0; b < leaves_.size(); ++b) {
      const auto base = static_cast<Eigen::Index>(9 * b);
      const double inv = 1.0 / (lengths_[b] * lengths_[b]);
      p.segment<3>(base).setOnes();
      p.segment<3>(base + 3).setConstant(inv);
      p.segment<3>(base + 6).setConstant(inv);
    }
    return p;
  }
  Eigen::Index dimension() const override { return static_cast<Eigen::Index>(9 * leaves_.size()); }

  const std::vector<LeafFrame>& leaves() const { return leaves_; }
  const FitTerms& terms() const { return terms_; }

 private:
  std::vector<LeafFrame> leaves_;
  std::vector<LeafFrame> trial_;
  std::vector<double> lengths_;
  std::span<const Vec3> surface_;
  std::span<const MaskImage> views_;
  const FitConfig& cfg_;
  RenderSettings render_;
  FitTerms terms_;
};

}  // namespace

FitTerms fit_objective(std::span<const LeafFrame> leaves, std::span<const Vec3> surface,
                       std::span<const MaskImage> gt_views, const FitConfig& cfg) {
  if (surface.empty()) throw ArgumentError("fit surface is empty");
  RenderSettings render = cfg.render;
  render.volume = fit_volume(surface, cfg.render);
  return evaluate_terms(leaves, surface, gt_views, cfg, render, nullptr);
}

FitResult fit_bones(const Rig& rig, const Pose& pose, std::span<const Vec3> surface,
                    std::span<const MaskImage> gt_views, const FitConfig& cfg, const DescentObserver& observer) {
  cfg.validate();
  if (surface.empty()) throw ArgumentError("fit surface is empty");
  if (gt_views.empty()) throw ArgumentError("fit needs at least one mask view");
  check_pose_covers(rig, pose);

  RenderSettings render = cfg.render;
  render.volume = fit_volume(surface, cfg.render);
  FitProblem problem(leaf_frames(rig, pose), surface, gt_views, cfg, render);

  DescentOptions options;
  options.method = cfg.optimizer;
  options.max_steps = cfg.max_steps;
  options.step_size = cfg.step_size;
  options.value_tol = cfg.convergence_tol;

  FitResult out{rig, pose, {}, {}, {}, {}};
  const DescentResult dr = minimize(problem, options, [&](const DescentRecord& rec) {
    if (rec.step == 0) out.initial = problem.terms();
    return observer ? observer(rec) : true;
  });
  out.trace = dr.trace;
  out.stop_reason = dr.stop_reason;
  out.final = problem.terms();

  // Write leaves back through their frozen parents.
  const auto world = compose_world(rig, pose);
  Rig updated = rig;
  Pose updated_pose = pose;
  for (const auto& leaf : problem.leaves()) {
    const Bone& bone = rig.bone(leaf.id);
    const RigidTransform parent = bone.parent ? world.at(*bone.parent) : RigidTransform::identity();
    RigidTransform local = parent.inverse() * leaf.world;
    local.rotation = orthonormalize(local.rotation);
    updated = updated.with_scale(leaf.id, leaf.scale);
    if (pose.is_canonical()) updated = updated.with_local(leaf.id, local);
    updated_pose.locals[leaf.id] = local;
  }
  out.rig = std::move(updated);
  out.pose = std::move(updated_pose);
  return out;
}

GrowResult grow_depth(const Rig& rig, std::span<const Pose> poses, const SkinnedSurface& skinned,
                      std::size_t k_children, std::uint64_t seed) {
  if (k_children == 0) throw ArgumentError("k_children must be >= 1");
  check_surface_matches(skinned, rig);

  std::vector<std::vector<Vec3>> owned(skinned.leaves.size());
  for (Eigen::Index i = 0; i < skinned.weights.rows(); ++i) {
    Eigen::Index best = 0;
    skinned.weights.row(i).maxCoeff(&best);
    owned[static_cast<std::size_t>(best)].push_back(skinned.vertices[static_cast<std::size_t>(i)]);
  }

  GrowResult out{rig, {}, {}, {}};
  for (std::size_t l = 0; l < skinned.leaves.size(); ++l) {
    const BoneId leaf = skinned.leaves[l];
    if (owned[l].size() < k_children) {
      out.skipped.push_back(leaf);
      continue;
    }
    const Clustering c = kmeans(owned[l], k_children, seed + l);
    std::vector<ChildInit> init;
    for (const auto& center : c.centers) init.push_back({center, Mat3::Identity(), 0.5 * rig.bone(leaf).scale});
    const BoneId first = out.rig.next_id();
    out.rig = add_child_bones(out.rig, leaf, init);
    for (std::size_t j = 0; j < k_children; ++j) out.new_bones.push_back(BoneId{first.value + static_cast<std::uint32_t>(j)});
  }
  for (const Pose& p : poses) out.poses.push_back(conform_pose(out.rig, p));
  return out;
}

GrowResult spawn_children(const Rig& rig, std::span<const Pose> poses, const SkinnedSurface& skinned, BoneId parent,
                          std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ArgumentError("k must be >= 1");
  check_surface_matches(skinned, rig);
  if (!rig.contains(parent)) throw DataError("unknown bone " + to_string(parent));
  const auto sub = rig.subtree(parent);
  std::vector<bool> in_subtree(skinned.leaves.size(), false);
  for (std::size_t l = 0; l < skinned.leaves.size(); ++l) {
    in_subtree[l] = std::find(sub.begin(), sub.end(), skinned.leaves[l]) != sub.end();
  }
  std::vector<Vec3> owned;
  for (Eigen::Index i = 0; i < skinned.weights.rows(); ++i) {
    Eigen::Index best = 0;
    skinned.weights.row(i).maxCoeff(&best);
    if (in_subtree[static_cast<std::size_t>(best)]) owned.push_back(skinned.vertices[static_cast<std::size_t>(i)]);
  }
  if (owned.size() < k) {
    throw DataError("bone " + to_string(parent) + " owns " + std::to_string(owned.size()) + " vertices, fewer than " +
                    std::to_string(k));
  }
  const Clustering c = kmeans(owned, k, seed);
  std::vector<ChildInit> init;
  for (const auto& center : c.centers) init.push_back({center, Mat3::Identity(), 0.5 * rig.bone(parent).scale});
  GrowResult out{add_child_bones(rig, parent, init), {}, {}, {}};
  for (std::size_t j = 0; j < k; ++j) out.new_bones.push_back(BoneId{rig.next_id().value + static_cast<std::uint32_t>(j)});
  for (const Pose& p : poses) out.poses.push_back(conform_pose(out.rig, p));
  return out;
}

Rig init_roots(std::span<const Vec3> surface, std::size_t n_roots, std::uint64_t seed) {
  if (n_roots == 0) throw ArgumentError("need at least one root");
  if (surface.size() < n_roots) throw ArgumentError("fewer surface points than roots");
  const Clustering c = kmeans(surface, n_roots, seed);
  const Aabb box = bounds_of(std::vector<Vec3>(surface.begin(), surface.end()));
  const double s = box.diagonal() / (4.0 * std::cbrt(static_cast<double>(n_roots)));
  std::vector<Bone> bones;
  for (std::size_t r = 0; r < n_roots; ++r) {
    Bone b;
    b.id = BoneId{static_cast<std::uint32_t>(r)};
    b.local = RigidTransform::from_translation(c.centers[r]);
    b.scale = Vec3::Constant(s > 0.0 ? s : 1.0);
    bones.push_back(std::move(b));
  }
  return Rig::from_bones(std::move(bones));
}

CoarseToFineResult coarse_to_fine(const Rig& rig, std::span<const Vec3> surface, std::span<const MaskImage> gt_views,
                                  const CoarseToFineConfig& cfg) {
  if (cfg.depths < 1) throw ArgumentError("depths must be >= 1");
  if (cfg.steps_per_depth < 0) throw ArgumentError("steps_per_depth must be nonnegative");
  CoarseToFineResult out{rig, rig.canonical_pose(), {}};
  FitConfig fc = cfg.fit;
  fc.max_steps = cfg.steps_per_depth;
  for (int depth = 1; depth <= cfg.depths; ++depth) {
    const FitResult fr = fit_bones(out.rig, out.rig.canonical_pose(), surface, gt_views, fc);
    out.rig = fr.rig;
    out.summary.push_back({out.rig.max_depth(), out.rig.leaf_bones().size(), fr.initial, fr.final,
                           fr.trace.empty() ? 0 : fr.trace.back().step});
    if (depth == cfg.depths) break;
    const SkinnedSurface skinned = bind_points(out.rig, std::vector<Vec3>(surface.begin(), surface.end()));
    const GrowResult gr = grow_depth(out.rig, {}, skinned, cfg.k_children, cfg.seed + static_cast<std::uint64_t>(depth));
    if (gr.new_bones.empty()) break;
    out.rig = gr.rig;
  }
  out.pose = out.rig.canonical_pose();
  return out;
}

}  // namespace boneforge
