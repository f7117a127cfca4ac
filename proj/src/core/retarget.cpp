#include "retarget.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"

namespace boneforge {

void OptimConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ArgumentError("step_size must be positive");
  if (max_steps < 0) throw ArgumentError("max_steps must be nonnegative");
  const LossWeights& w = loss_weights;
  for (double v : {w.bone_mask, w.overlap, w.cover, w.data}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("loss weights must be finite and nonnegative");
  }
  if (!(convergence_tol >= 0.0)) throw ArgumentError("convergence_tol must be nonnegative");
}

Pose apply_pose_step(const Pose& pose, std::span<const BoneId> variables, const Eigen::VectorXd& step) {
  if (step.size() != static_cast<Eigen::Index>(6 * variables.size())) {
    throw ArgumentError("pose step must hold six entries per variable bone");
  }
  Pose out = pose;
  for (std::size_t k = 0; k < variables.size(); ++k) {
    auto it = out.locals.find(variables[k]);
    if (it == out.locals.end()) throw DataError("pose has no local for bone " + to_string(variables[k]));
    const auto base = static_cast<Eigen::Index>(6 * k);
    it->second.rotation = exp_so3(step.segment<3>(base)) * it->second.rotation;
    it->second.translation += step.segment<3>(base + 3);
  }
  return out;
}

ChamferPoseObjective::ChamferPoseObjective(const Rig& rig, const SkinnedSurface& surface,
                                           std::span<const Vec3> target, std::vector<BoneId> variables)
    : rig_(rig),
      surface_(surface),
      target_(target.begin(), target.end()),
      target_index_(target),
      variables_(std::move(variables)) {
  if (target_.empty()) throw ArgumentError("retarget target is empty");
  if (surface_.vertices.empty()) throw ArgumentError("skinned surface has no vertices");
  check_surface_matches(surface_, rig_);
  for (BoneId id : variables_) {
    if (!rig_.contains(id)) throw DataError("unknown variable bone " + to_string(id));
  }
  const auto canonical = compose_world(rig_, rig_.canonical_pose());
  for (BoneId leaf : surface_.leaves) canonical_inverse_.push_back(canonical.at(leaf).inverse());
}

std::vector<Vec3> ChamferPoseObjective::warp(const Pose& pose) const {
  return deform(surface_, rig_, pose);
}

double ChamferPoseObjective::evaluate(const Pose& pose, Eigen::VectorXd* grad) const {
  const std::vector<Vec3> pred = warp(pose);
  const std::size_t n = pred.size();
  const std::size_t m = target_.size();
  const KdTree pred_index(pred);

  // Forward and backward nearest neighbors, with per-point distance sums
  // reduced in fixed chunk order.
  std::vector<Neighbor> fwd(n);
  std::vector<Neighbor> bwd(m);
  const double sum_fwd = parallel_reduce(
      n, kDefaultChunk, 0.0,
      [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) {
          fwd[i] = target_index_.nearest(pred[i]);
          s += std::sqrt(fwd[i].squared_distance);
        }
        return s;
      },
      [](double a, double b) { return a + b; });
  const double sum_bwd = parallel_reduce(
      m, kDefaultChunk, 0.0,
      [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t j = b; j < e; ++j) {
          bwd[j] = pred_index.nearest(target_[j]);
          s += std::sqrt(bwd[j].squared_distance);
        }
        return s;
      },
      [](double a, double b) { return a + b; });
  const double cd = 0.5 * (sum_fwd / static_cast<double>(n) + sum_bwd / static_cast<double>(m));
  if (!grad) return cd;

  // dCD/dp_i.
  std::vector<Vec3> g(n, Vec3::Zero());
  const double wf = 0.5 / static_cast<double>(n);
  const double wb = 0.5 / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::sqrt(fwd[i].squared_distance);
    if (d > 0.0) g[i] += wf * (pred[i] - target_[fwd[i].index]) / d;
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double d = std::sqrt(bwd[j].squared_distance);
    const std::uint32_t i = bwd[j].index;
    if (d > 0.0) g[i] += wb * (pred[i] - target_[j]) / d;
  }

  // dCD/dA_b for each leaf's blend matrix A_b = W_b C_b, as 3x4 blocks.
  using Block = Eigen::Matrix<double, 3, 4>;
  const std::size_t leaves = surface_.leaves.size();
  std::vector<Block> gb = parallel_reduce(
      n, kDefaultChunk, std::vector<Block>(leaves, Block::Zero()),
      [&](std::size_t b, std::size_t e) {
        std::vector<Block> acc(leaves, Block::Zero());
        for (std::size_t i = b; i < e; ++i) {
          Eigen::Matrix<double, 1, 4> xh;
          xh << surface_.vertices[i].transpose(), 1.0;
          const Block outer = g[i] * xh;
          for (std::size_t l = 0; l < leaves; ++l) {
            acc[l] += surface_.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) * outer;
          }
        }
        return acc;
      },
      [](std::vector<Block> a, const std::vector<Block>& b) {
        for (std::size_t l = 0; l < a.size(); ++l) a[l] += b[l];
        return a;
      });

  // A_b = P_k L_k S_kb for each bone k on leaf b's chain, where P_k is the
  // parent's world and S_kb = W_k^-1 A_b; dCD/dL_k = P^T G S^T.
  const auto world = compose_world(rig_, pose);
  grad->setZero(static_cast<Eigen::Index>(6 * variables_.size()));
  for (std::size_t k = 0; k < variables_.size(); ++k) {
    const BoneId id = variables_[k];
    const Bone& bone = rig_.bone(id);
    const Mat4 parent = bone.parent ? world.at(*bone.parent).matrix() : Mat4::Identity();
    const Mat4 world_k_inv = world.at(id).inverse().matrix();
    Mat4 h = Mat4::Zero();
    for (std::size_t l = 0; l < leaves; ++l) {
      const auto chain = rig_.chain_to(surface_.leaves[l]);
      if (std::find(chain.begin(), chain.end(), id) == chain.end()) continue;
      Mat4 gl = Mat4::Zero();
      gl.topRows<3>() = gb[l];
      const Mat4 a = (world.at(surface_.leaves[l]) * canonical_inverse_[l]).matrix();
      const Mat4 s = world_k_inv * a;
      h += parent.transpose() * gl * s.transpose();
    }
    const Mat3 nrm = h.topLeftCorner<3, 3>() * pose.locals.at(id).rotation.transpose();
    const auto base = static_cast<Eigen::Index>(6 * k);
    (*grad)(base + 0) = nrm(2, 1) - nrm(1, 2);
    (*grad)(base + 1) = nrm(0, 2) - nrm(2, 0);
    (*grad)(base + 2) = nrm(1, 0) - nrm(0, 1);
    grad->segment<3>(base + 3) = h.topRightCorner<3, 1>();
  }
  return cd;
}

Eigen::VectorXd ChamferPoseObjective::preconditioner() const {
  const auto canonical = compose_world(rig_, rig_.canonical_pose());
  const std::size_t n = surface_.vertices.size();
  Eigen::VectorXd p(static_cast<Eigen::Index>(6 * variables_.size()));
  for (std::size_t k = 0; k < variables_.size(); ++k) {
    const auto sub = rig_.subtree(variables_[k]);
    std::vector<Eigen::Index> cols;
    for (std::size_t l = 0; l < surface_.leaves.size(); ++l) {
      if (std::find(sub.begin(), sub.end(), surface_.leaves[l]) != sub.end()) cols.push_back(static_cast<Eigen::Index>(l));
    }
    const Vec3 center = canonical.at(variables_[k]).translation;
    double mass = 0.0;
    double spread = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double u = 0.0;
      for (Eigen::Index c : cols) u += surface_.weights(static_cast<Eigen::Index>(i), c);
      mass += u;
      spread += u * (surface_.vertices[i] - center).squaredNorm();
    }
    const double m = std::max(mass / static_cast<double>(n), 1e-6);
    const double l2 = std::max(spread / std::max(mass, 1e-300), 1e-12);
    const auto base = static_cast<Eigen::Index>(6 * k);
    p.segment<3>(base).setConstant(1.0 / (m * l2));
    p.segment<3>(base + 3).setConstant(1.0 / m);
  }
  return p;
}

double cd_at_step(const RetargetReport& report, int step) {
  if (report.trace.empty()) throw ArgumentError("empty retarget trace");
  double cd = report.trace.front().cd;
  for (const auto& r : report.trace) {
    if (r.step > step) break;
    cd = r.cd;
  }
  return cd;
}

int steps_to_threshold(const RetargetReport& report, double threshold) {
  for (const auto& r : report.trace) {
    if (r.cd <= threshold) return r.step;
  }
  return -1;
}

namespace {

class RetargetProblem final : public DescentProblem {
 public:
  RetargetProblem(const ChamferPoseObjective& objective, Pose pose, double data_weight)
      : objective_(objective), pose_(std::move(pose)), weight_(data_weight), precond_(objective.preconditioner()) {}

  double value_and_gradient(Eigen::VectorXd& grad) override {
    cd_ = objective_.evaluate(pose_, &grad);
    grad *= weight_;
    return weight_ * cd_;
  }
  double try_step(const Eigen::VectorXd& step) override {
    trial_ = apply_pose_step(pose_, objective_.variables(), step);
    return weight_ * objective_.evaluate(trial_, nullptr);
  }
  void accept() override { pose_ = std::move(trial_); }
  Eigen::VectorXd preconditioner() const override { return precond_; }
  Eigen::Index dimension() const override { return static_cast<Eigen::Index>(6 * objective_.variables().size()); }

  const Pose& pose() const { return pose_; }
  double cd() const { return cd_; }

 private:
  const ChamferPoseObjective& objective_;
  Pose pose_;
  Pose trial_;
  double weight_;
  Eigen::VectorXd precond_;
  double cd_ = 0.0;
};

}  // namespace

RetargetReport retarget(const Rig& rig, const SkinnedSurface& surface, const Pose& pose_init,
                        std::span<const Vec3> target, const OptimConfig& cfg, const RetargetObserver& observer) {
  cfg.validate();
  check_pose_covers(rig, pose_init);
  const auto start = std::chrono::steady_clock::now();

  std::vector<BoneId> variables = cfg.leaves_only ? rig.leaf_bones() : rig.depth_first();
  ChamferPoseObjective objective(rig, surface, target, std::move(variables));
  const double weight = cfg.loss_weights.data > 0.0 ? cfg.loss_weights.data : 0.0;

  RetargetReport report;
  if (weight == 0.0) {
    // Nothing to minimize: record the starting point only.
    const double cd = objective.evaluate(pose_init, nullptr);
    report.trace.push_back({0, cd, 0.0});
    report.final_pose = pose_init;
    report.stop_reason = "zero objective weight";
    if (observer) observer(report.trace.back());
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

  RetargetProblem problem(objective, pose_init, weight);
  DescentOptions options;
  options.method = cfg.optimizer;
  options.max_steps = cfg.max_steps;
  options.step_size = cfg.step_size;
  options.value_tol = weight * cfg.convergence_tol;

  const DescentResult result = minimize(problem, options, [&](const DescentRecord& rec) {
    report.trace.push_back({rec.step, problem.cd(), rec.value});
    return observer ? observer(report.trace.back()) : true;
  });
  report.final_pose = problem.pose();
  report.stop_reason = result.stop_reason;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace boneforge
