#ifndef BONEFORGE_H
#define BONEFORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BF_API __declspec(dllexport)
#else
#define BF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bf_status {
  BF_OK = 0,
  BF_ERR_INVALID_ARGUMENT = 1,
  BF_ERR_IO = 2,
  BF_ERR_PARSE = 3,
  BF_ERR_DATA = 4,
  BF_ERR_NUMERICAL = 5,
  BF_ERR_INTERNAL = 6
} bf_status;

/* Opaque handles. Every *_free accepts NULL. */
typedef struct bf_rig bf_rig;           /* bone tree plus its poses */
typedef struct bf_mesh bf_mesh;
typedef struct bf_masks bf_masks;       /* mask views with cameras */
typedef struct bf_scenario bf_scenario;
typedef struct bf_report bf_report;     /* retargeting trace */

/* Pose index meaning "the rig's canonical pose". */
#define BF_CANONICAL ((size_t)-1)

typedef enum bf_optimizer { BF_OPT_GRADIENT_DESCENT = 0, BF_OPT_ADAM = 1 } bf_optimizer;

BF_API const char* bf_version(void);
/* Message for the last failing call on this thread ("" if none). */
BF_API const char* bf_last_error(void);
/* 0 selects hardware concurrency. Results do not depend on the count. */
BF_API bf_status bf_set_threads(unsigned n);

/* Rigs */
typedef struct bf_rig_info {
  size_t bones;
  size_t leaves;
  int depth;
  size_t poses;
} bf_rig_info;

BF_API bf_status bf_rig_load(const char* path, bf_rig** out);
BF_API bf_status bf_rig_save(const bf_rig* rig, const char* path);
BF_API bf_status bf_rig_info_get(const bf_rig* rig, bf_rig_info* out);
/* Removes a bone and its descendants; poses drop them too. */
BF_API bf_status bf_rig_delete_subtree(bf_rig* rig, uint32_t bone_id);
/* Drops every pose. */
BF_API bf_status bf_rig_clear_poses(bf_rig* rig);
/* Appends the pose stored in a pose file; it must cover the rig. */
BF_API bf_status bf_rig_load_pose(bf_rig* rig, const char* path);
/* Writes one pose (or the canonical pose) as a pose file. */
BF_API bf_status bf_rig_save_pose(const bf_rig* rig, size_t pose_index, const char* path);
/* Box enclosing every leaf's occupancy support at a pose. */
BF_API bf_status bf_rig_bounds(const bf_rig* rig, size_t pose_index, double lo[3], double hi[3]);
BF_API void bf_rig_free(bf_rig* rig);

/* Meshes (.obj or .ply by extension). Faceless PLY files load as point sets. */
BF_API bf_status bf_mesh_load(const char* path, bf_mesh** out);
BF_API bf_status bf_mesh_save(const bf_mesh* mesh, const char* path, int ascii_ply);
BF_API bf_status bf_mesh_counts(const bf_mesh* mesh, size_t* vertices, size_t* triangles);
/* Copies 3 * vertices doubles. */
BF_API bf_status bf_mesh_vertices(const bf_mesh* mesh, double* xyz);
BF_API void bf_mesh_free(bf_mesh* mesh);

/* Masks: a directory holding masks.json plus one image pair per view. */
BF_API bf_status bf_masks_load(const char* dir, bf_masks** out);
BF_API bf_status bf_masks_save(const bf_masks* masks, const char* dir);
BF_API bf_status bf_masks_count(const bf_masks* masks, size_t* views);
/* Blank front, side and top views of size x size framing the box. */
BF_API bf_status bf_masks_default_cameras(const double lo[3], const double hi[3], int size, bf_masks** out);
BF_API void bf_masks_free(bf_masks* masks);

typedef struct bf_occupancy_options {
  double gamma;
  double tau;
  double lambda_max;
  size_t n_cover;
  double density_scale;
  int samples_per_ray;
} bf_occupancy_options;

BF_API void bf_occupancy_options_default(bf_occupancy_options* opts);

/* Bone masks of a rig pose seen by the cameras of `cameras`. */
BF_API bf_status bf_render_masks(const bf_rig* rig, size_t pose_index, const bf_masks* cameras,
                                 const bf_occupancy_options* opts, bf_masks** out);
/* Binary mesh silhouettes from front, side and top cameras of size x size. */
BF_API bf_status bf_silhouette_masks(const bf_mesh* mesh, int size, bf_masks** out);

/* Synthetic scenarios */
typedef struct bf_synth_options {
  const char* kind; /* "chain-<k>", "quadruped", "dumbbell" */
  int n_frames;
  uint64_t seed;
  double noise;
  double max_bend_deg;
  int flat;
  int mask_size;
  int render_masks;
} bf_synth_options;

BF_API void bf_synth_options_default(bf_synth_options* opts);
BF_API bf_status bf_synth(const bf_synth_options* opts, bf_scenario** out);
/* Copy of the ground-truth rig with one pose per frame. */
BF_API bf_status bf_scenario_rig(const bf_scenario* sc, bf_rig** out);
BF_API bf_status bf_scenario_canonical(const bf_scenario* sc, bf_mesh** out);
BF_API bf_status bf_scenario_frame_count(const bf_scenario* sc, size_t* frames);
BF_API bf_status bf_scenario_frame(const bf_scenario* sc, size_t frame, bf_mesh** out);
BF_API bf_status bf_scenario_masks(const bf_scenario* sc, size_t frame, bf_masks** out);
BF_API void bf_scenario_free(bf_scenario* sc);

/* Pose perturbation: random-axis rotation of magnitude_rad per bone. The
   result is appended to the rig's poses with the given frame number. */
BF_API bf_status bf_perturb_pose(bf_rig* rig, size_t pose_index, double magnitude_rad, uint64_t seed, int64_t frame);

/* Deformation */
BF_API bf_status bf_deform(const bf_rig* rig, const bf_mesh* canonical, size_t pose_index, bf_mesh** out);

/* Bone fitting */
typedef struct bf_fit_options {
  bf_occupancy_options occupancy;
  double w_bone_mask;
  double w_overlap;
  double w_cover;
  int depths;
  size_t k_children;
  size_t n_roots;        /* used when no initial rig is given */
  int steps_per_depth;
  double step_size;
  uint64_t seed;
  size_t surface_samples; /* 0 uses the mesh vertices */
  bf_optimizer optimizer;
} bf_fit_options;

typedef struct bf_depth_summary {
  int depth;
  size_t leaves;
  int steps;
  double initial_loss;
  double final_loss;
  double final_bone_mask;
  double final_overlap;
  double final_cover;
} bf_depth_summary;

typedef void (*bf_depth_callback)(const bf_depth_summary* summary, void* user);

BF_API void bf_fit_options_default(bf_fit_options* opts);
/* Coarse-to-fine fit against canonical-frame masks. `init` may be NULL. */
BF_API bf_status bf_fit(const bf_mesh* surface, const bf_masks* masks, const bf_rig* init,
                        const bf_fit_options* opts, bf_depth_callback on_depth, void* user, bf_rig** out);

/* Retargeting */
typedef struct bf_retarget_options {
  double step_size;
  int max_steps;
  double convergence_tol;
  double w_data;
  bf_optimizer optimizer;
  int leaves_only;
  uint64_t seed;
  size_t target_samples; /* 0 uses the target's vertices */
} bf_retarget_options;

/* Return nonzero to stop early. */
typedef int (*bf_progress_callback)(int step, double cd, double loss, void* user);

BF_API void bf_retarget_options_default(bf_retarget_options* opts);
BF_API bf_status bf_retarget(const bf_rig* rig, size_t init_pose, const bf_mesh* canonical, const bf_mesh* target,
                             const bf_retarget_options* opts, bf_progress_callback progress, void* user,
                             bf_report** out);
BF_API bf_status bf_report_length(const bf_report* report, size_t* n);
BF_API bf_status bf_report_step(const bf_report* report, size_t i, int* step, double* cd, double* loss);
BF_API const char* bf_report_stop_reason(const bf_report* report);
/* Appends the final pose to the rig's poses with the given frame number. */
BF_API bf_status bf_report_append_pose(const bf_report* report, bf_rig* rig, int64_t frame);
BF_API void bf_report_free(bf_report* report);

/* Metrics */
typedef struct bf_eval_options {
  size_t samples;       /* surface samples per mesh */
  uint64_t seed;
  int icp;              /* align prediction to ground truth first */
  double fscore_ratio;  /* threshold as a fraction of the GT box's longest edge */
} bf_eval_options;

typedef struct bf_eval_result {
  double cd;
  double f_score;
  double precision;
  double recall;
  double threshold;
  size_t n_src;
  size_t n_dst;
} bf_eval_result;

BF_API void bf_eval_options_default(bf_eval_options* opts);
BF_API bf_status bf_eval(const bf_mesh* predicted, const bf_mesh* ground_truth, const bf_eval_options* opts,
                         bf_eval_result* out);

#ifdef __cplusplus
}
#endif

#endif
