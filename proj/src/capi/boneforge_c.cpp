#include "boneforge/boneforge.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "errors.hpp"
#include "fit.hpp"
#include "mask_io.hpp"
#include "mesh_io.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "rig_io.hpp"
#include "sampling.hpp"
#include "silhouette.hpp"
#include "synth.hpp"

using namespace boneforge;

struct bf_rig {
  RigDocument doc;
};
struct bf_mesh {
  TriMesh mesh;
};
struct bf_masks {
  std::vector<MaskImage> views;
};
struct bf_scenario {
  SynthScenario sc;
};
struct bf_report {
  RetargetReport report;
};

namespace {

thread_local std::string last_error;

bf_status fail(bf_status code, const std::string& msg) {
  last_error = msg;
  return code;
}

template <class F>
bf_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return BF_OK;
  } catch (const ArgumentError& e) {
    return fail(BF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const IoError& e) {
    return fail(BF_ERR_IO, e.what());
  } catch (const ParseError& e) {
    return fail(BF_ERR_PARSE, e.what());
  } catch (const DataError& e) {
    return fail(BF_ERR_DATA, e.what());
  } catch (const NumericalError& e) {
    return fail(BF_ERR_NUMERICAL, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(BF_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(BF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BF_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " must not be null");
}

const Pose& pose_at(const RigDocument& doc, size_t index, Pose& canonical) {
  if (index == BF_CANONICAL) {
    canonical = doc.rig.canonical_pose();
    return canonical;
  }
  if (index >= doc.poses.size()) {
    throw ArgumentError("pose index " + std::to_string(index) + " out of range (" + std::to_string(doc.poses.size()) +
                        " poses)");
  }
  return doc.poses[index];
}

OccupancyConfig occupancy_from(const bf_occupancy_options& o) {
  OccupancyConfig c;
  c.gamma = o.gamma;
  c.tau = o.tau;
  c.lambda_max = o.lambda_max;
  c.n_cover = o.n_cover;
  c.density_scale = o.density_scale;
  c.validate();
  return c;
}

OptimizerKind optimizer_from(bf_optimizer o) {
  switch (o) {
    case BF_OPT_GRADIENT_DESCENT: return OptimizerKind::GradientDescent;
    case BF_OPT_ADAM: return OptimizerKind::Adam;
  }
  throw ArgumentError("unknown optimizer");
}

std::vector<Vec3> points_of(const TriMesh& mesh, size_t samples, std::uint64_t seed) {
  if (samples == 0 || mesh.triangles.empty()) return mesh.vertices;
  return sample_surface(mesh, samples, seed).points;
}

}  // namespace

extern "C" {

const char* bf_version(void) { return BONEFORGE_VERSION; }

const char* bf_last_error(void) { return last_error.c_str(); }

bf_status bf_set_threads(unsigned n) {
  return guard([&] { set_thread_count(n); });
}

bf_status bf_rig_load(const char* path, bf_rig** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new bf_rig{load_rig(path)};
  });
}

bf_status bf_rig_save(const bf_rig* rig, const char* path) {
  return guard([&] {
    need(rig, "rig");
    need(path, "path");
    save_rig(path, rig->doc.rig, rig->doc.poses);
  });
}

bf_status bf_rig_info_get(const bf_rig* rig, bf_rig_info* out) {
  return guard([&] {
    need(rig, "rig");
    need(out, "out");
    out->bones = rig->doc.rig.size();
    out->leaves = rig->doc.rig.leaf_bones().size();
    out->depth = rig->doc.rig.max_depth();
    out->poses = rig->doc.poses.size();
  });
}

bf_status bf_rig_delete_subtree(bf_rig* rig, uint32_t bone_id) {
  return guard([&] {
    need(rig, "rig");
    Rig next = delete_subtree(rig->doc.rig, BoneId{bone_id});
    for (auto& p : rig->doc.poses) p = conform_pose(next, p);
    rig->doc.rig = std::move(next);
  });
}

bf_status bf_rig_clear_poses(bf_rig* rig) {
  return guard([&] {
    need(rig, "rig");
    rig->doc.poses.clear();
  });
}

bf_status bf_rig_load_pose(bf_rig* rig, const char* path) {
  return guard([&] {
    need(rig, "rig");
    need(path, "path");
    Pose p = load_pose(path);
    check_pose_covers(rig->doc.rig, p);
    rig->doc.poses.push_back(std::move(p));
  });
}

bf_status bf_rig_save_pose(const bf_rig* rig, size_t pose_index, const char* path) {
  return guard([&] {
    need(rig, "rig");
    need(path, "path");
    Pose cp;
    save_pose(path, pose_at(rig->doc, pose_index, cp));
  });
}

bf_status bf_rig_bounds(const bf_rig* rig, size_t pose_index, double lo[3], double hi[3]) {
  return guard([&] {
    need(rig, "rig");
    need(lo, "lo");
    need(hi, "hi");
    Pose cp;
    const Aabb box = occupancy_bounds(leaf_frames(rig->doc.rig, pose_at(rig->doc, pose_index, cp)), OccupancyConfig{});
    for (int i = 0; i < 3; ++i) {
      lo[i] = box.lo[i];
      hi[i] = box.hi[i];
    }
  });
}

void bf_rig_free(bf_rig* rig) { delete rig; }

bf_status bf_mesh_load(const char* path, bf_mesh** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new bf_mesh{load_mesh(path)};
  });
}

bf_status bf_mesh_save(const bf_mesh* mesh, const char* path, int ascii_ply) {
  return guard([&] {
    need(mesh, "mesh");
    need(path, "path");
    save_mesh(path, mesh->mesh, ascii_ply ? PlyEncoding::Ascii : PlyEncoding::BinaryLittleEndian);
  });
}

bf_status bf_mesh_counts(const bf_mesh* mesh, size_t* vertices, size_t* triangles) {
  return guard([&] {
    need(mesh, "mesh");
    if (vertices) *vertices = mesh->mesh.vertices.size();
    if (triangles) *triangles = mesh->mesh.triangles.size();
  });
}

bf_status bf_mesh_vertices(const bf_mesh* mesh, double* xyz) {
  return guard([&] {
    need(mesh, "mesh");
    need(xyz, "xyz");
    for (const auto& v : mesh->mesh.vertices) {
      *xyz++ = v.x();
      *xyz++ = v.y();
      *xyz++ = v.z();
    }
  });
}

void bf_mesh_free(bf_mesh* mesh) { delete mesh; }

bf_status bf_masks_load(const char* dir, bf_masks** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new bf_masks{load_mask_set(dir)};
  });
}

bf_status bf_masks_save(const bf_masks* masks, const char* dir) {
  return guard([&] {
    need(masks, "masks");
    need(dir, "dir");
    save_mask_set(dir, masks->views);
  });
}

bf_status bf_masks_count(const bf_masks* masks, size_t* views) {
  return guard([&] {
    need(masks, "masks");
    need(views, "views");
    *views = masks->views.size();
  });
}

bf_status bf_masks_default_cameras(const double lo[3], const double hi[3], int size, bf_masks** out) {
  return guard([&] {
    need(lo, "lo");
    need(hi, "hi");
    need(out, "out");
    if (size < 1) throw ArgumentError("mask size must be >= 1");
    const Aabb box{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
    if (box.empty() || !box.lo.allFinite() || !box.hi.allFinite()) throw ArgumentError("camera box is empty");
    auto result = std::make_unique<bf_masks>();
    for (const auto& cam : default_cameras(box, size)) {
      MaskImage m;
      m.width = cam.width;
      m.height = cam.height;
      m.camera = cam;
      m.values.assign(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0);
      result->views.push_back(std::move(m));
    }
    *out = result.release();
  });
}

void bf_masks_free(bf_masks* masks) { delete masks; }

void bf_occupancy_options_default(bf_occupancy_options* opts) {
  if (!opts) return;
  const OccupancyConfig c;
  opts->gamma = c.gamma;
  opts->tau = c.tau;
  opts->lambda_max = c.lambda_max;
  opts->n_cover = c.n_cover;
  opts->density_scale = c.density_scale;
  opts->samples_per_ray = RenderSettings{}.samples_per_ray;
}

bf_status bf_render_masks(const bf_rig* rig, size_t pose_index, const bf_masks* cameras,
                          const bf_occupancy_options* opts, bf_masks** out) {
  return guard([&] {
    need(rig, "rig");
    need(cameras, "cameras");
    need(out, "out");
    bf_occupancy_options o;
    bf_occupancy_options_default(&o);
    if (opts) o = *opts;
    const OccupancyConfig cfg = occupancy_from(o);
    RenderSettings rs;
    rs.samples_per_ray = o.samples_per_ray;
    if (rs.samples_per_ray < 1) throw ArgumentError("samples_per_ray must be >= 1");
    Pose canonical;
    const Pose& pose = pose_at(rig->doc, pose_index, canonical);
    auto result = std::make_unique<bf_masks>();
    for (const auto& v : cameras->views) {
      result->views.push_back(render_bone_mask(rig->doc.rig, pose, v.camera, cfg, rs));
    }
    *out = result.release();
  });
}

bf_status bf_silhouette_masks(const bf_mesh* mesh, int size, bf_masks** out) {
  return guard([&] {
    need(mesh, "mesh");
    need(out, "out");
    if (size < 1) throw ArgumentError("mask size must be >= 1");
    const Aabb box = bounds_of(mesh->mesh.vertices);
    auto result = std::make_unique<bf_masks>();
    for (const auto& cam : default_cameras(box.inflated(0.15 * box.diagonal()), size)) {
      result->views.push_back(render_silhouette(mesh->mesh, cam));
    }
    *out = result.release();
  });
}

void bf_synth_options_default(bf_synth_options* opts) {
  if (!opts) return;
  const SynthSpec s;
  opts->kind = "chain-3";
  opts->n_frames = s.n_frames;
  opts->seed = s.seed;
  opts->noise = s.noise;
  opts->max_bend_deg = s.max_bend_deg;
  opts->flat = s.flat ? 1 : 0;
  opts->mask_size = s.mask_size;
  opts->render_masks = s.render_masks ? 1 : 0;
}

bf_status bf_synth(const bf_synth_options* opts, bf_scenario** out) {
  return guard([&] {
    need(opts, "opts");
    need(opts->kind, "opts->kind");
    need(out, "out");
    SynthSpec s;
    const auto [kind, k] = parse_synth_kind(opts->kind);
    s.kind = kind;
    if (kind == SynthKind::Chain) s.chain_k = k;
    s.n_frames = opts->n_frames;
    s.seed = opts->seed;
    s.noise = opts->noise;
    s.max_bend_deg = opts->max_bend_deg;
    s.flat = opts->flat != 0;
    s.mask_size = opts->mask_size;
    s.render_masks = opts->render_masks != 0;
    *out = new bf_scenario{make_scenario(s)};
  });
}

bf_status bf_scenario_rig(const bf_scenario* sc, bf_rig** out) {
  return guard([&] {
    need(sc, "scenario");
    need(out, "out");
    *out = new bf_rig{RigDocument{sc->sc.rig, sc->sc.poses}};
  });
}

bf_status bf_scenario_canonical(const bf_scenario* sc, bf_mesh** out) {
  return guard([&] {
    need(sc, "scenario");
    need(out, "out");
    *out = new bf_mesh{sc->sc.canonical};
  });
}

bf_status bf_scenario_frame_count(const bf_scenario* sc, size_t* frames) {
  return guard([&] {
    need(sc, "scenario");
    need(frames, "frames");
    *frames = sc->sc.frames.size();
  });
}

bf_status bf_scenario_frame(const bf_scenario* sc, size_t frame, bf_mesh** out) {
  return guard([&] {
    need(sc, "scenario");
    need(out, "out");
    if (frame >= sc->sc.frames.size()) throw ArgumentError("frame index out of range");
    *out = new bf_mesh{sc->sc.frames[frame]};
  });
}

bf_status bf_scenario_masks(const bf_scenario* sc, size_t frame, bf_masks** out) {
  return guard([&] {
    need(sc, "scenario");
    need(out, "out");
    if (frame >= sc->sc.masks.size()) throw ArgumentError("no masks for frame " + std::to_string(frame));
    *out = new bf_masks{sc->sc.masks[frame]};
  });
}

void bf_scenario_free(bf_scenario* sc) { delete sc; }

bf_status bf_perturb_pose(bf_rig* rig, size_t pose_index, double magnitude_rad, uint64_t seed, int64_t frame) {
  return guard([&] {
    need(rig, "rig");
    Pose canonical;
    Pose p = perturb_pose(rig->doc.rig, pose_at(rig->doc, pose_index, canonical), magnitude_rad, seed);
    p.frame = frame;
    rig->doc.poses.push_back(std::move(p));
  });
}

bf_status bf_deform(const bf_rig* rig, const bf_mesh* canonical, size_t pose_index, bf_mesh** out) {
  return guard([&] {
    need(rig, "rig");
    need(canonical, "canonical");
    need(out, "out");
    Pose cp;
    const Pose& pose = pose_at(rig->doc, pose_index, cp);
    const SkinnedSurface s = bind_surface(rig->doc.rig, canonical->mesh);
    TriMesh m = deformed_mesh(s, rig->doc.rig, pose);
    m.colors = canonical->mesh.colors;
    *out = new bf_mesh{std::move(m)};
  });
}

void bf_fit_options_default(bf_fit_options* opts) {
  if (!opts) return;
  bf_occupancy_options_default(&opts->occupancy);
  const CoarseToFineConfig c;
  opts->w_bone_mask = c.fit.weights.bone_mask;
  opts->w_overlap = c.fit.weights.overlap;
  opts->w_cover = c.fit.weights.cover;
  opts->depths = c.depths;
  opts->k_children = c.k_children;
  opts->n_roots = 5;
  opts->steps_per_depth = c.steps_per_depth;
  opts->step_size = c.fit.step_size;
  opts->seed = c.seed;
  opts->surface_samples = 2000;
  opts->optimizer = BF_OPT_GRADIENT_DESCENT;
}

bf_status bf_fit(const bf_mesh* surface, const bf_masks* masks, const bf_rig* init, const bf_fit_options* opts,
                 bf_depth_callback on_depth, void* user, bf_rig** out) {
  return guard([&] {
    need(surface, "surface");
    need(masks, "masks");
    need(out, "out");
    bf_fit_options o;
    bf_fit_options_default(&o);
    if (opts) o = *opts;
    CoarseToFineConfig cfg;
    cfg.depths = o.depths;
    cfg.k_children = o.k_children;
    cfg.steps_per_depth = o.steps_per_depth;
    cfg.seed = o.seed;
    cfg.fit.occupancy = occupancy_from(o.occupancy);
    cfg.fit.render.samples_per_ray = o.occupancy.samples_per_ray;
    cfg.fit.weights.bone_mask = o.w_bone_mask;
    cfg.fit.weights.overlap = o.w_overlap;
    cfg.fit.weights.cover = o.w_cover;
    cfg.fit.step_size = o.step_size;
    cfg.fit.optimizer = optimizer_from(o.optimizer);
    const std::vector<Vec3> pts = points_of(surface->mesh, o.surface_samples, o.seed);
    if (pts.empty()) throw ArgumentError("fit surface is empty");
    const Rig start = init ? init->doc.rig : init_roots(pts, o.n_roots, o.seed);
    const CoarseToFineResult r = coarse_to_fine(start, pts, masks->views, cfg);
    if (on_depth) {
      for (const auto& d : r.summary) {
        const bf_depth_summary s{d.depth,         d.leaves,          d.steps,           d.initial.total,
                                 d.final.total,   d.final.bone_mask, d.final.overlap,   d.final.cover};
        on_depth(&s, user);
      }
    }
    *out = new bf_rig{RigDocument{r.rig, {}}};
  });
}

void bf_retarget_options_default(bf_retarget_options* opts) {
  if (!opts) return;
  const OptimConfig c;
  opts->step_size = c.step_size;
  opts->max_steps = c.max_steps;
  opts->convergence_tol = c.convergence_tol;
  opts->w_data = c.loss_weights.data;
  opts->optimizer = BF_OPT_GRADIENT_DESCENT;
  opts->leaves_only = c.leaves_only ? 1 : 0;
  opts->seed = c.seed;
  opts->target_samples = 0;
}

bf_status bf_retarget(const bf_rig* rig, size_t init_pose, const bf_mesh* canonical, const bf_mesh* target,
                      const bf_retarget_options* opts, bf_progress_callback progress, void* user, bf_report** out) {
  return guard([&] {
    need(rig, "rig");
    need(canonical, "canonical");
    need(target, "target");
    need(out, "out");
    bf_retarget_options o;
    bf_retarget_options_default(&o);
    if (opts) o = *opts;
    OptimConfig cfg;
    cfg.step_size = o.step_size;
    cfg.max_steps = o.max_steps;
    cfg.convergence_tol = o.convergence_tol;
    cfg.loss_weights.data = o.w_data;
    cfg.optimizer = optimizer_from(o.optimizer);
    cfg.leaves_only = o.leaves_only != 0;
    cfg.seed = o.seed;
    Pose cp;
    const Pose& pose = pose_at(rig->doc, init_pose, cp);
    const SkinnedSurface s = bind_surface(rig->doc.rig, canonical->mesh);
    const std::vector<Vec3> pts = points_of(target->mesh, o.target_samples, o.seed);
    RetargetObserver obs;
    if (progress) obs = [&](const RetargetStep& st) { return progress(st.step, st.cd, st.loss, user) == 0; };
    *out = new bf_report{retarget(rig->doc.rig, s, pose, pts, cfg, obs)};
  });
}

bf_status bf_report_length(const bf_report* report, size_t* n) {
  return guard([&] {
    need(report, "report");
    need(n, "n");
    *n = report->report.trace.size();
  });
}

bf_status bf_report_step(const bf_report* report, size_t i, int* step, double* cd, double* loss) {
  return guard([&] {
    need(report, "report");
    if (i >= report->report.trace.size()) throw ArgumentError("trace index out of range");
    const auto& r = report->report.trace[i];
    if (step) *step = r.step;
    if (cd) *cd = r.cd;
    if (loss) *loss = r.loss;
  });
}

const char* bf_report_stop_reason(const bf_report* report) {
  return report ? report->report.stop_reason.c_str() : "";
}

bf_status bf_report_append_pose(const bf_report* report, bf_rig* rig, int64_t frame) {
  return guard([&] {
    need(report, "report");
    need(rig, "rig");
    check_pose_covers(rig->doc.rig, report->report.final_pose);
    Pose p = report->report.final_pose;
    p.frame = frame;
    rig->doc.poses.push_back(std::move(p));
  });
}

void bf_report_free(bf_report* report) { delete report; }

void bf_eval_options_default(bf_eval_options* opts) {
  if (!opts) return;
  const EvalOptions e;
  opts->samples = e.samples;
  opts->seed = e.seed;
  opts->icp = e.icp ? 1 : 0;
  opts->fscore_ratio = e.fscore_ratio;
}

bf_status bf_eval(const bf_mesh* predicted, const bf_mesh* ground_truth, const bf_eval_options* opts,
                  bf_eval_result* out) {
  return guard([&] {
    need(predicted, "predicted");
    need(ground_truth, "ground_truth");
    need(out, "out");
    bf_eval_options o;
    bf_eval_options_default(&o);
    if (opts) o = *opts;
    EvalOptions e;
    e.samples = o.samples;
    e.seed = o.seed;
    e.icp = o.icp != 0;
    e.fscore_ratio = o.fscore_ratio;
    if (!(e.fscore_ratio > 0.0)) throw ArgumentError("fscore_ratio must be positive");
    const EvalResult r = evaluate_meshes(predicted->mesh, ground_truth->mesh, e);
    *out = bf_eval_result{r.cd, r.f.f, r.f.precision, r.f.recall, r.f.threshold, r.n_src, r.n_dst};
  });
}

}  // extern "C"
