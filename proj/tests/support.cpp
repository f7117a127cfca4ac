#include "support.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace bft {

Mat3 random_rotation(Rng& rng) { return rng.rotation(); }

RigidTransform random_transform(Rng& rng, double translation) {
  return {rng.rotation(), Vec3(rng.uniform(-translation, translation), rng.uniform(-translation, translation),
                               rng.uniform(-translation, translation))};
}

Rig random_rig(Rng& rng, int n, int max_depth, double scale_lo, double scale_hi) {
  std::vector<Bone> bones;
  std::vector<int> depth;
  for (int i = 0; i < n; ++i) {
    Bone b;
    b.id = BoneId{static_cast<std::uint32_t>(i)};
    b.local = random_transform(rng);
    b.scale = Vec3(rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi));
    int d = 1;
    if (i > 0 && rng.uniform() < 0.7) {
      std::vector<int> eligible;
      for (int j = 0; j < i; ++j) {
        if (depth[j] < max_depth) eligible.push_back(j);
      }
      if (!eligible.empty()) {
        const int p = eligible[rng.below(eligible.size())];
        b.parent = BoneId{static_cast<std::uint32_t>(p)};
        d = depth[p] + 1;
      }
    }
    depth.push_back(d);
    bones.push_back(std::move(b));
  }
  return Rig::from_bones(std::move(bones));
}

Pose random_pose(Rng& rng, const Rig& rig, double translation) {
  Pose p;
  p.frame = 1;
  for (BoneId id : rig.depth_first()) p.locals[id] = random_transform(rng, translation);
  return p;
}

std::vector<LeafFrame> random_leaves(Rng& rng, int n, double spread, double scale_lo, double scale_hi) {
  std::vector<LeafFrame> out;
  for (int i = 0; i < n; ++i) {
    LeafFrame f;
    f.id = BoneId{static_cast<std::uint32_t>(i)};
    f.world = random_transform(rng, spread);
    f.scale = Vec3(rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi));
    out.push_back(f);
  }
  return out;
}

std::vector<Vec3> random_points(Rng& rng, int n, double half_size, const Vec3& center) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    pts.push_back(center + Vec3(rng.uniform(-half_size, half_size), rng.uniform(-half_size, half_size),
                                rng.uniform(-half_size, half_size)));
  }
  return pts;
}

Mat4 dense_world(const Rig& rig, const Pose& pose, BoneId id) {
  std::vector<BoneId> chain;
  for (std::optional<BoneId> cur = id; cur; cur = rig.bone(*cur).parent) chain.push_back(*cur);
  Mat4 m = Mat4::Identity();
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const RigidTransform& t = pose.locals.at(*it);
    Mat4 local = Mat4::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) local(r, c) = t.rotation(r, c);
      local(r, 3) = t.translation(r);
    }
    m = m * local;
  }
  return m;
}

double dense_mahalanobis(const Vec3& x, const Mat4& world, const Vec3& scale) {
  const Mat3 r = world.topLeftCorner<3, 3>();
  const Vec3 d = x - world.topRightCorner<3, 1>();
  Mat3 s = Mat3::Zero();
  for (int i = 0; i < 3; ++i) s(i, i) = 1.0 / (scale(i) * scale(i));
  const double q = d.transpose() * r * s * r.transpose() * d;
  return std::sqrt(std::max(q, 0.0));
}

std::vector<double> plain_softmax_weights(const Vec3& x, std::span<const Mat4> worlds, std::span<const Vec3> scales,
                                          std::span<const double> delta) {
  std::vector<double> e(worlds.size());
  double sum = 0.0;
  for (std::size_t b = 0; b < worlds.size(); ++b) {
    e[b] = std::exp(-dense_mahalanobis(x, worlds[b], scales[b]) + (delta.empty() ? 0.0 : delta[b]));
    sum += e[b];
  }
  for (double& v : e) v /= sum;
  return e;
}

Vec3 dense_lbs(const Vec3& x, std::span<const Mat4> from, std::span<const Mat4> to, std::span<const Mat4> weight_worlds,
               std::span<const Vec3> scales) {
  const auto w = plain_softmax_weights(x, weight_worlds, scales);
  Mat4 blend = Mat4::Zero();
  for (std::size_t b = 0; b < from.size(); ++b) blend += w[b] * (to[b] * from[b].inverse());
  const Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
  return (blend * h).head<3>();
}

std::vector<Mat4> dense_leaf_worlds(const Rig& rig, const Pose& pose) {
  std::vector<Mat4> out;
  for (BoneId id : rig.leaf_bones()) out.push_back(dense_world(rig, pose, id));
  return out;
}

std::vector<Vec3> leaf_scales(const Rig& rig) {
  std::vector<Vec3> out;
  for (BoneId id : rig.leaf_bones()) out.push_back(rig.bone(id).scale);
  return out;
}

double brute_unified(const Vec3& x, std::span<const Mat4> worlds, std::span<const Vec3> scales, double gamma) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < worlds.size(); ++b) best = std::min(best, dense_mahalanobis(x, worlds[b], scales[b]) - gamma);
  return best;
}

double brute_chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  auto one_way = [](std::span<const Vec3> from, std::span<const Vec3> to) {
    double total = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).norm());
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

std::vector<Vec3> brute_lloyd(std::span<const Vec3> points, std::vector<Vec3> centers, int max_iters) {
  std::vector<std::size_t> assign(points.size(), static_cast<std::size_t>(-1));
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (points[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      Vec3 sum = Vec3::Zero();
      std::size_t n = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (assign[i] == c) {
          sum += points[i];
          ++n;
        }
      }
      if (n > 0) centers[c] = sum / static_cast<double>(n);
    }
  }
  return centers;
}

std::vector<LeafFrame> perturb_leaf(std::span<const LeafFrame> leaves, std::size_t leaf, int param, double h) {
  std::vector<LeafFrame> out(leaves.begin(), leaves.end());
  LeafFrame& f = out[leaf];
  if (param < 3) {
    f.world.translation(param) += h;
  } else if (param < 6) {
    Vec3 w = Vec3::Zero();
    w(param - 3) = h;
    f.world.rotation = exp_so3(w) * f.world.rotation;
  } else {
    f.scale(param - 6) += h;
  }
  return out;
}

Eigen::VectorXd flatten(const std::vector<BoneGradient>& g) {
  Eigen::VectorXd v(9 * static_cast<Eigen::Index>(g.size()));
  for (std::size_t b = 0; b < g.size(); ++b) {
    v.segment<3>(9 * static_cast<Eigen::Index>(b)) = g[b].center;
    v.segment<3>(9 * static_cast<Eigen::Index>(b) + 3) = g[b].rotation;
    v.segment<3>(9 * static_cast<Eigen::Index>(b) + 6) = g[b].scale;
  }
  return v;
}

Eigen::VectorXd central_difference(std::size_t dim, const std::function<double(std::size_t, double)>& f, double h) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) g(static_cast<Eigen::Index>(i)) = (f(i, h) - f(i, -h)) / (2.0 * h);
  return g;
}

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor) {
  const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), floor);
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("boneforge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace bft
