// boneforge: batch front end over the C API.

#include <boneforge/boneforge.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A failing C API call, carrying its status.
struct ApiError : std::runtime_error {
  bf_status status;
  ApiError(bf_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(bf_status s, const char* what) {
  if (s != BF_OK) throw ApiError(s, std::string(what) + ": " + bf_last_error());
}

int exit_code_for(bf_status s) {
  switch (s) {
    case BF_OK: return kOk;
    case BF_ERR_INVALID_ARGUMENT: return kUsage;
    case BF_ERR_NUMERICAL: return kNumerical;
    default: return kData;
  }
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using RigPtr = std::unique_ptr<bf_rig, Deleter<bf_rig, bf_rig_free>>;
using MeshPtr = std::unique_ptr<bf_mesh, Deleter<bf_mesh, bf_mesh_free>>;
using MasksPtr = std::unique_ptr<bf_masks, Deleter<bf_masks, bf_masks_free>>;
using ScenarioPtr = std::unique_ptr<bf_scenario, Deleter<bf_scenario, bf_scenario_free>>;
using ReportPtr = std::unique_ptr<bf_report, Deleter<bf_report, bf_report_free>>;

RigPtr load_rig(const std::string& path) {
  bf_rig* r = nullptr;
  check(bf_rig_load(path.c_str(), &r), "loading rig");
  return RigPtr(r);
}

MeshPtr load_mesh(const std::string& path) {
  bf_mesh* m = nullptr;
  check(bf_mesh_load(path.c_str(), &m), "loading mesh");
  return MeshPtr(m);
}

MasksPtr load_masks(const std::string& dir) {
  bf_masks* m = nullptr;
  check(bf_masks_load(dir.c_str(), &m), "loading masks");
  return MasksPtr(m);
}

// ---------------------------------------------------------------------------
// Config layer: built-in defaults < config file < BONEFORGE_<KEY> env < flags.

struct KeyInfo {
  const char* name;
  const char* fallback;
  const char* help;
};

// clang-format off
const KeyInfo kKeys[] = {
    {"seed", "0", "random seed"},
    {"threads", "0", "worker threads (0 = all cores)"},
    {"gamma", "1", "bone occupancy threshold on the Mahalanobis distance"},
    {"tau", "0.1", "sigmoid temperature of the occupancy density"},
    {"lambda", "2", "overlap allowance (bones allowed per surface point)"},
    {"n_cover", "64", "Mahalanobis-nearest points per bone in the coverage loss"},
    {"density_scale", "20", "mask rendering density multiplier"},
    {"samples_per_ray", "64", "ray-march samples per mask pixel"},
    {"w_bone_mask", "0.1", "fit weight of the bone mask loss"},
    {"w_overlap", "0.001", "fit weight of the overlap loss"},
    {"w_cover", "0.001", "fit weight of the coverage loss"},
    {"depths", "1", "fit: number of hierarchy depths"},
    {"children", "2", "fit: children spawned per leaf at each new depth"},
    {"roots", "5", "fit: root bones when no initial rig is given"},
    {"iters", "20000", "fit: optimization steps per depth"},
    {"surface_samples", "2000", "fit: surface samples (0 = mesh vertices)"},
    {"step_size", "1", "optimizer step size"},
    {"optimizer", "gd", "gd (preconditioned gradient descent) or adam"},
    {"steps", "50,100,150,200", "retarget: checkpoint steps; the largest is the step budget"},
    {"convergence_tol", "1e-6", "retarget: stop once the objective falls below this"},
    {"leaves_only", "false", "retarget: optimize leaf locals only"},
    {"target_samples", "5000", "retarget: target surface samples (0 = vertices)"},
    {"init_pose", "canonical", "retarget: canonical, frame (rig pose i for target i) or a pose index"},
    {"perturb_deg", "0", "retarget: per-bone random rotation applied to the initial pose"},
    {"kind", "chain-3", "synth: chain-<k>, quadruped or dumbbell"},
    {"frames", "1", "synth: number of posed frames"},
    {"noise", "0", "synth: vertex jitter as a fraction of the bbox diagonal"},
    {"bend_deg", "30", "synth: largest joint bend"},
    {"flat", "false", "synth: flatten the ground-truth rig to one depth"},
    {"mask_size", "48", "synth / render-mask: mask width and height"},
    {"eval_samples", "10000", "eval: surface samples per mesh"},
    {"icp", "true", "eval: align the prediction to the ground truth first"},
    {"fscore_ratio", "0.02", "eval: F-score threshold as a fraction of the GT box longest edge"},
};
// clang-format on

std::string env_name(const std::string& key) {
  std::string s = "BONEFORGE_";
  for (char c : key) s += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

class Config {
 public:
  Config() {
    for (const auto& k : kKeys) values_[k.name] = k.fallback;
  }

  void set(const std::string& key, const std::string& value, const std::string& origin) {
    if (!values_.count(key)) throw UsageError(origin + ": unknown config key '" + key + "'");
    values_[key] = value;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError(path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError(path + ": config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      std::string s;
      if (v.is_string()) {
        s = v.get<std::string>();
      } else if (v.is_array()) {
        for (const auto& e : v) s += (s.empty() ? "" : ",") + e.dump();
      } else {
        s = v.dump();
      }
      set(k, s, path);
    }
  }

  void load_env() {
    for (const auto& k : kKeys) {
      if (const char* v = std::getenv(env_name(k.name).c_str())) values_[k.name] = v;
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  double num(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !std::isfinite(v)) throw UsageError(key + ": expected a number, got '" + s + "'");
    return v;
  }

  long long integer(const std::string& key, long long lo) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw UsageError(key + ": expected an integer, got '" + s + "'");
    if (v < lo) throw UsageError(key + ": must be >= " + std::to_string(lo));
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw UsageError(key + ": expected true or false, got '" + s + "'");
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size() || v < 1) throw UsageError(key + ": expected positive integers, got '" + item + "'");
      out.push_back(v);
    }
    if (out.empty()) throw UsageError(key + ": empty list");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bf_optimizer optimizer() const {
    if (str("optimizer") == "gd") return BF_OPT_GRADIENT_DESCENT;
    if (str("optimizer") == "adam") return BF_OPT_ADAM;
    throw UsageError("optimizer: expected gd or adam");
  }

  bf_occupancy_options occupancy() const {
    bf_occupancy_options o;
    bf_occupancy_options_default(&o);
    o.gamma = num("gamma");
    o.tau = num("tau");
    o.lambda_max = num("lambda");
    o.n_cover = static_cast<size_t>(integer("n_cover", 1));
    o.density_scale = num("density_scale");
    o.samples_per_ray = static_cast<int>(integer("samples_per_ray", 1));
    return o;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed", 0)); }

  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------

struct Args {
  std::string rig;
  std::vector<std::string> poses;
  std::string mesh;
  std::vector<std::string> targets;
  std::string masks;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  // Flag-level overrides, applied last.
  std::map<std::string, std::string> flags;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ApiError(BF_ERR_IO, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

fs::path prepare_out(const Args& a, bool required = true) {
  if (a.out.empty()) {
    if (required) throw UsageError("--out is required");
    return {};
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw ApiError(BF_ERR_IO, "cannot create " + a.out + ": " + ec.message());
  return a.out;
}

// No timestamp or output path, so repeated runs produce identical bytes.
void write_manifest(const fs::path& out, const std::string& sub, const Config& cfg, const json& inputs) {
  write_json(out / "manifest.json", {{"tool", "boneforge"},
                                     {"version", bf_version()},
                                     {"subcommand", sub},
                                     {"seed", cfg.seed()},
                                     {"config", cfg.to_json()},
                                     {"inputs", inputs}});
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
  return buf;
}

void save_mesh(const bf_mesh* m, const fs::path& path) { check(bf_mesh_save(m, path.string().c_str(), 0), "saving mesh"); }

int run_synth(const Args& a, const Config& cfg) {
  const fs::path out = prepare_out(a);
  const std::string kind = cfg.str("kind");
  bf_synth_options o;
  bf_synth_options_default(&o);
  o.kind = kind.c_str();
  o.n_frames = static_cast<int>(cfg.integer("frames", 1));
  o.seed = cfg.seed();
  o.noise = cfg.num("noise");
  o.max_bend_deg = cfg.num("bend_deg");
  o.flat = cfg.flag("flat") ? 1 : 0;
  o.mask_size = static_cast<int>(cfg.integer("mask_size", 1));
  o.render_masks = 1;
  bf_scenario* raw = nullptr;
  check(bf_synth(&o, &raw), "synth");
  ScenarioPtr sc(raw);

  bf_rig* rr = nullptr;
  check(bf_scenario_rig(sc.get(), &rr), "synth rig");
  RigPtr rig(rr);
  check(bf_rig_save(rig.get(), (out / "rig.json").string().c_str()), "saving rig");

  bf_mesh* cm = nullptr;
  check(bf_scenario_canonical(sc.get(), &cm), "canonical mesh");
  MeshPtr canonical(cm);
  save_mesh(canonical.get(), out / "canonical.obj");

  size_t frames = 0;
  check(bf_scenario_frame_count(sc.get(), &frames), "frame count");
  fs::create_directories(out / "frames");
  MasksPtr cameras;
  for (size_t f = 0; f < frames; ++f) {
    bf_mesh* fm = nullptr;
    check(bf_scenario_frame(sc.get(), f, &fm), "frame mesh");
    MeshPtr frame(fm);
    save_mesh(frame.get(), out / "frames" / numbered("frame", f, ".obj"));
    check(bf_rig_save_pose(rig.get(), f, (out / "frames" / numbered("pose", f, ".json")).string().c_str()),
          "saving pose");
    bf_masks* mm = nullptr;
    check(bf_scenario_masks(sc.get(), f, &mm), "frame masks");
    MasksPtr masks(mm);
    check(bf_masks_save(masks.get(), (out / "masks" / numbered("frame", f, "")).string().c_str()), "saving masks");
    if (!cameras) cameras = std::move(masks);
  }
  if (cameras) {
    bf_occupancy_options occ = cfg.occupancy();
    bf_masks* cmk = nullptr;
    check(bf_render_masks(rig.get(), BF_CANONICAL, cameras.get(), &occ, &cmk), "canonical masks");
    MasksPtr cmasks(cmk);
    check(bf_masks_save(cmasks.get(), (out / "masks" / "canonical").string().c_str()), "saving masks");
  }
  write_manifest(out, "synth", cfg, json::object());
  std::cout << "synth " << kind << ": " << frames << " frame(s) written to " << out.string() << '\n';
  return kOk;
}

int run_fit(const Args& a, const Config& cfg) {
  if (a.mesh.empty()) throw UsageError("fit needs --mesh (canonical surface)");
  if (a.masks.empty()) throw UsageError("fit needs --masks (canonical mask directory)");
  const fs::path out = prepare_out(a);
  MeshPtr surface = load_mesh(a.mesh);
  MasksPtr masks = load_masks(a.masks);
  RigPtr init;
  if (!a.rig.empty()) init = load_rig(a.rig);

  bf_fit_options o;
  bf_fit_options_default(&o);
  o.occupancy = cfg.occupancy();
  o.w_bone_mask = cfg.num("w_bone_mask");
  o.w_overlap = cfg.num("w_overlap");
  o.w_cover = cfg.num("w_cover");
  o.depths = static_cast<int>(cfg.integer("depths", 1));
  o.k_children = static_cast<size_t>(cfg.integer("children", 1));
  o.n_roots = static_cast<size_t>(cfg.integer("roots", 1));
  o.steps_per_depth = static_cast<int>(cfg.integer("iters", 0));
  o.step_size = cfg.num("step_size");
  o.seed = cfg.seed();
  o.surface_samples = static_cast<size_t>(cfg.integer("surface_samples", 0));
  o.optimizer = cfg.optimizer();

  json summary = json::array();
  auto on_depth = [](const bf_depth_summary* s, void* user) {
    static_cast<json*>(user)->push_back({{"depth", s->depth},
                                         {"leaves", s->leaves},
                                         {"steps", s->steps},
                                         {"initial_loss", s->initial_loss},
                                         {"final_loss", s->final_loss},
                                         {"bone_mask", s->final_bone_mask},
                                         {"overlap", s->final_overlap},
                                         {"cover", s->final_cover}});
  };
  bf_rig* fr = nullptr;
  check(bf_fit(surface.get(), masks.get(), init.get(), &o, on_depth, &summary, &fr), "fit");
  RigPtr fitted(fr);
  check(bf_rig_save(fitted.get(), (out / "rig.json").string().c_str()), "saving rig");
  bf_rig_info info;
  check(bf_rig_info_get(fitted.get(), &info), "rig info");
  write_json(out / "fit.json", {{"depths", summary}, {"bones", info.bones}, {"leaves", info.leaves}});
  write_manifest(out, "fit", cfg, {{"mesh", a.mesh}, {"masks", a.masks}, {"rig", a.rig}});
  for (const auto& d : summary) {
    std::cout << "depth " << d["depth"] << ": " << d["leaves"] << " leaves, loss " << d["initial_loss"] << " -> "
              << d["final_loss"] << " in " << d["steps"] << " steps\n";
  }
  std::cout << "fit: " << info.bones << " bones, " << info.leaves << " leaves\n";
  return kOk;
}

size_t init_pose_index(const Config& cfg, size_t target, size_t poses) {
  const std::string& s = cfg.str("init_pose");
  if (s == "canonical") return BF_CANONICAL;
  if (s == "frame") {
    if (target >= poses) throw UsageError("init_pose=frame: rig has no pose for target " + std::to_string(target));
    return target;
  }
  const long long i = cfg.integer("init_pose", 0);
  if (static_cast<size_t>(i) >= poses) throw UsageError("init_pose: rig has only " + std::to_string(poses) + " poses");
  return static_cast<size_t>(i);
}

int run_retarget(const Args& a, const Config& cfg) {
  if (a.rig.empty() || a.mesh.empty() || a.targets.empty()) {
    throw UsageError("retarget needs --rig, --mesh (canonical) and at least one --target");
  }
  if (a.poses.size() > 1) throw UsageError("retarget takes at most one --pose");
  const fs::path out = prepare_out(a);
  RigPtr rig = load_rig(a.rig);
  MeshPtr canonical = load_mesh(a.mesh);
  bf_rig_info info;
  check(bf_rig_info_get(rig.get(), &info), "rig info");
  const size_t given_poses = info.poses;
  size_t pose_file_index = BF_CANONICAL;
  if (!a.poses.empty()) {
    check(bf_rig_load_pose(rig.get(), a.poses[0].c_str()), "loading pose");
    pose_file_index = given_poses;
  }

  const std::vector<int> checkpoints = cfg.int_list("steps");
  bf_retarget_options o;
  bf_retarget_options_default(&o);
  o.step_size = cfg.num("step_size");
  o.max_steps = checkpoints.back();
  o.convergence_tol = cfg.num("convergence_tol");
  o.optimizer = cfg.optimizer();
  o.leaves_only = cfg.flag("leaves_only") ? 1 : 0;
  o.seed = cfg.seed();
  o.target_samples = static_cast<size_t>(cfg.integer("target_samples", 0));
  const double perturb = cfg.num("perturb_deg");
  if (perturb < 0) throw UsageError("perturb_deg must be >= 0");

  RigPtr result = load_rig(a.rig);
  check(bf_rig_clear_poses(result.get()), "clearing poses");
  json report = json::array();
  std::ofstream trace(out / "trace.jsonl", std::ios::binary);
  if (!trace) throw ApiError(BF_ERR_IO, "cannot write trace.jsonl");
  std::cout << "target  step  cd\n";
  for (size_t t = 0; t < a.targets.size(); ++t) {
    MeshPtr target = load_mesh(a.targets[t]);
    size_t init = a.poses.empty() ? init_pose_index(cfg, t, given_poses) : pose_file_index;
    if (perturb > 0) {
      check(bf_rig_info_get(rig.get(), &info), "rig info");
      check(bf_perturb_pose(rig.get(), init, perturb * M_PI / 180.0, o.seed + t, static_cast<int64_t>(t)), "perturb");
      init = info.poses;
    }
    bf_report* rr = nullptr;
    check(bf_retarget(rig.get(), init, canonical.get(), target.get(), &o, nullptr, nullptr, &rr), "retarget");
    ReportPtr rep(rr);
    size_t n = 0;
    check(bf_report_length(rep.get(), &n), "report");
    int step = 0;
    double cd = 0, loss = 0;
    for (size_t i = 0; i < n; ++i) {
      check(bf_report_step(rep.get(), i, &step, &cd, &loss), "report");
      trace << json{{"frame", t}, {"step", step}, {"cd", cd}, {"loss", loss}}.dump() << '\n';
    }
    // Checkpoint value: last recorded step at or before the checkpoint (the
    // trace stops early once converged).
    json rows = json::array();
    for (int c : checkpoints) {
      int s_at = 0;
      double cd_at = 0, loss_at = 0;
      for (size_t i = 0; i < n; ++i) {
        int si = 0;
        double ci = 0, li = 0;
        check(bf_report_step(rep.get(), i, &si, &ci, &li), "report");
        if (si > c) break;
        s_at = si;
        cd_at = ci;
        loss_at = li;
      }
      rows.push_back({{"frame", t}, {"step", c}, {"cd", cd_at}, {"loss", loss_at}, {"recorded_step", s_at}});
      std::printf("%6zu  %4d  %.6g\n", t, c, cd_at);
    }
    check(bf_report_append_pose(rep.get(), result.get(), static_cast<int64_t>(t)), "storing pose");
    check(bf_rig_save_pose(result.get(), t, (out / numbered("pose", t, ".json")).string().c_str()), "saving pose");
    report.push_back({{"frame", t},
                      {"target", a.targets[t]},
                      {"steps", step},
                      {"final_cd", cd},
                      {"final_loss", loss},
                      {"stop_reason", bf_report_stop_reason(rep.get())},
                      {"checkpoints", rows}});
  }
  check(bf_rig_save(result.get(), (out / "rig.json").string().c_str()), "saving rig");
  write_json(out / "report.json", {{"targets", report}});
  write_manifest(out, "retarget", cfg,
                 {{"rig", a.rig}, {"mesh", a.mesh}, {"targets", a.targets}, {"pose", a.poses}});
  return kOk;
}

int run_eval(const Args& a, const Config& cfg) {
  if (a.mesh.empty() || a.targets.size() != 1) throw UsageError("eval needs --mesh (prediction) and one --target");
  const fs::path out = prepare_out(a, false);
  MeshPtr pred = load_mesh(a.mesh);
  MeshPtr gt = load_mesh(a.targets[0]);
  bf_eval_options o;
  bf_eval_options_default(&o);
  o.samples = static_cast<size_t>(cfg.integer("eval_samples", 0));
  o.seed = cfg.seed();
  o.icp = cfg.flag("icp") ? 1 : 0;
  o.fscore_ratio = cfg.num("fscore_ratio");
  bf_eval_result r;
  check(bf_eval(pred.get(), gt.get(), &o, &r), "eval");
  const json j = {{"cd", r.cd},
                  {"f2", r.f_score},
                  {"precision", r.precision},
                  {"recall", r.recall},
                  {"threshold", r.threshold},
                  {"n_src", r.n_src},
                  {"n_dst", r.n_dst}};
  std::cout << j.dump() << '\n';
  if (!out.empty()) {
    write_json(out / "eval.json", j);
    write_manifest(out, "eval", cfg, {{"mesh", a.mesh}, {"target", a.targets[0]}});
  }
  return kOk;
}

int run_animate(const Args& a, const Config& cfg) {
  if (a.rig.empty() || a.mesh.empty()) throw UsageError("animate needs --rig and --mesh (canonical)");
  const fs::path out = prepare_out(a);
  RigPtr rig = load_rig(a.rig);
  MeshPtr canonical = load_mesh(a.mesh);
  if (!a.poses.empty()) {
    check(bf_rig_clear_poses(rig.get()), "clearing poses");
    for (const auto& p : a.poses) check(bf_rig_load_pose(rig.get(), p.c_str()), "loading pose");
  }
  bf_rig_info info;
  check(bf_rig_info_get(rig.get(), &info), "rig info");
  if (info.poses == 0) throw ApiError(BF_ERR_DATA, "no poses to animate");
  for (size_t i = 0; i < info.poses; ++i) {
    bf_mesh* m = nullptr;
    check(bf_deform(rig.get(), canonical.get(), i, &m), "deform");
    MeshPtr posed(m);
    save_mesh(posed.get(), out / numbered("frame", i, ".obj"));
  }
  write_manifest(out, "animate", cfg, {{"rig", a.rig}, {"mesh", a.mesh}, {"poses", a.poses}});
  std::cout << "animate: " << info.poses << " frame(s)\n";
  return kOk;
}

int run_render_mask(const Args& a, const Config& cfg) {
  if (a.rig.empty()) throw UsageError("render-mask needs --rig");
  if (a.poses.size() > 1) throw UsageError("render-mask takes at most one --pose");
  const fs::path out = prepare_out(a);
  RigPtr rig = load_rig(a.rig);
  size_t pose = BF_CANONICAL;
  if (!a.poses.empty()) {
    bf_rig_info info;
    check(bf_rig_info_get(rig.get(), &info), "rig info");
    check(bf_rig_load_pose(rig.get(), a.poses[0].c_str()), "loading pose");
    pose = info.poses;
  }
  MasksPtr cameras;
  if (!a.masks.empty()) {
    cameras = load_masks(a.masks);
  } else {
    double lo[3], hi[3];
    check(bf_rig_bounds(rig.get(), pose, lo, hi), "rig bounds");
    double d2 = 0;
    for (int i = 0; i < 3; ++i) d2 += (hi[i] - lo[i]) * (hi[i] - lo[i]);
    const double pad = 0.15 * std::sqrt(d2);
    for (int i = 0; i < 3; ++i) {
      lo[i] -= pad;
      hi[i] += pad;
    }
    bf_masks* c = nullptr;
    check(bf_masks_default_cameras(lo, hi, static_cast<int>(cfg.integer("mask_size", 1)), &c), "cameras");
    cameras.reset(c);
  }
  bf_occupancy_options occ = cfg.occupancy();
  bf_masks* m = nullptr;
  check(bf_render_masks(rig.get(), pose, cameras.get(), &occ, &m), "render");
  MasksPtr masks(m);
  check(bf_masks_save(masks.get(), out.string().c_str()), "saving masks");
  write_manifest(out, "render-mask", cfg, {{"rig", a.rig}, {"pose", a.poses}, {"masks", a.masks}});
  size_t views = 0;
  check(bf_masks_count(masks.get(), &views), "masks");
  std::cout << "render-mask: " << views << " view(s)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boneforge: hierarchical bone rigs from masks, retargeting and metrics"};
  app.set_version_flag("--version", std::string(bf_version()));
  app.require_subcommand(1);
  app.fallthrough();

  Args a;
  app.add_option("--rig", a.rig, "rig JSON file");
  app.add_option("--pose", a.poses, "pose JSON file (animate accepts several)");
  app.add_option("--mesh", a.mesh, "canonical mesh (fit, retarget, animate) or prediction (eval); .obj or .ply");
  app.add_option("--target", a.targets, "target mesh; repeat for several frames (retarget) or give one (eval)");
  app.add_option("--masks", a.masks, "mask directory (fit input, or cameras for render-mask)");
  app.add_option("--out", a.out, "output directory");
  app.add_option("--config", a.config, "JSON config file (default: $BONEFORGE_CONFIG)");
  app.add_option("--set", a.sets, "override any config key: key=value (repeatable)");

  // Direct flags for config keys; applied after file and environment.
  struct Direct {
    const char* flag;
    const char* key;
  };
  const Direct direct[] = {{"--steps", "steps"},     {"--depths", "depths"},   {"--children", "children"},
                           {"--roots", "roots"},     {"--iters", "iters"},     {"--gamma", "gamma"},
                           {"--tau", "tau"},         {"--lambda", "lambda"},   {"--seed", "seed"},
                           {"--threads", "threads"}, {"--kind", "kind"},       {"--frames", "frames"},
                           {"--optimizer", "optimizer"}, {"--perturb-deg", "perturb_deg"},
                           {"--init-pose", "init_pose"}, {"--mask-size", "mask_size"}};
  std::map<std::string, std::string> direct_values;
  for (const auto& d : direct) {
    std::string help;
    for (const auto& k : kKeys) {
      if (std::string(k.name) == d.key) help = std::string(k.help) + " [" + k.fallback + "]";
    }
    app.add_option(d.flag, direct_values[d.key], help);
  }

  std::string keys_help = "Config keys (file < BONEFORGE_<KEY> env < flags):\n";
  for (const auto& k : kKeys) keys_help += "  " + std::string(k.name) + " = " + k.fallback + "  " + k.help + "\n";
  app.footer(keys_help + "Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.");

  const char* subs[][2] = {{"synth", "generate a synthetic scenario (rig, meshes, masks)"},
                           {"fit", "fit a bone hierarchy to canonical masks, coarse to fine"},
                           {"retarget", "optimize poses so the deformed mesh matches each target"},
                           {"eval", "Chamfer distance and F-score with ICP pre-alignment"},
                           {"animate", "export the deformed mesh for each pose"},
                           {"render-mask", "render bone masks of a rig pose"}};
  for (const auto& s : subs) app.add_subcommand(s[0], s[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    Config cfg;
    std::string config_path = a.config;
    if (config_path.empty()) {
      if (const char* e = std::getenv("BONEFORGE_CONFIG")) config_path = e;
    }
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.load_env();
    for (const auto& d : direct) {
      if (app.count(d.flag) > 0) cfg.set(d.key, direct_values[d.key], d.flag);
    }
    for (const auto& s : a.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1), "--set");
    }
    check(bf_set_threads(static_cast<unsigned>(cfg.integer("threads", 0))), "threads");

    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "synth") return run_synth(a, cfg);
    if (sub == "fit") return run_fit(a, cfg);
    if (sub == "retarget") return run_retarget(a, cfg);
    if (sub == "eval") return run_eval(a, cfg);
    if (sub == "animate") return run_animate(a, cfg);
    return run_render_mask(a, cfg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  } catch (const ApiError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
