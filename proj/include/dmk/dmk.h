#ifndef DMK_DMK_H
#define DMK_DMK_H

/*
 * C interface to the depth / motion / intrinsics fitting library.
 *
 * Every function returns a dmk_status. On failure a description is
 * available from dmk_last_error() on the calling thread until the next call.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with dmk_string_free(). Handles are released with their _free
 * function; passing NULL to any _free function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DMK_API __declspec(dllexport)
#else
#define DMK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmk_status {
    DMK_OK = 0,
    DMK_ERR_INPUT = 2,     /* malformed JSON, bad spec or config, unreadable file */
    DMK_ERR_DIVERGED = 3,  /* non-finite loss during fitting */
    DMK_ERR_ASSERT = 4,    /* a requested threshold check failed */
    DMK_ERR_DIMENSION = 10,
    DMK_ERR_NUMERIC = 11,
    DMK_ERR_CONTRACT = 12,
    DMK_ERR_INTERNAL = 13
} dmk_status;

typedef struct dmk_scene dmk_scene;
typedef struct dmk_fit dmk_fit;

/* Called for every logged optimisation step. */
typedef void (*dmk_progress_fn)(int step, double total_loss, void* user);

DMK_API const char* dmk_version(void);
DMK_API const char* dmk_last_error(void);
DMK_API void dmk_string_free(char* s);

/* ---- scenes ---------------------------------------------------------- */

/* Scene spec JSON of a built-in scene: "static", "ego", or "dynamic". */
DMK_API dmk_status dmk_demo_spec(const char* name, uint64_t texture_seed, char** spec_json);

/* Renders a frame pair with ground truth from a scene spec document. */
DMK_API dmk_status dmk_scene_render(const char* spec_json, uint64_t seed, dmk_scene** out);

/*
 * Writes frame_a/b (.ppm and exact .pfm), ground truth maps and scene.json
 * into an existing directory. Returns the written file names as a JSON array.
 */
DMK_API dmk_status dmk_scene_save(const dmk_scene* scene, const char* dir, char** artifacts_json);

/*
 * Loads a scene directory. Frames come from frame_a.pfm / frame_b.pfm, or
 * frame_a.ppm / frame_b.ppm when the PFMs are absent. Intrinsics come from
 * scene.json or intrinsics.json and are optional. Ground truth is optional.
 */
DMK_API dmk_status dmk_scene_load(const char* dir, dmk_scene** out);

/* Width, height and whether intrinsics / ground truth are present. */
DMK_API dmk_status dmk_scene_info(const dmk_scene* scene, char** info_json);

/* Ground-truth warp residual; DMK_ERR_CONTRACT above the 2e-2 limit (the
 * residual is still written). */
DMK_API dmk_status dmk_scene_self_check(const dmk_scene* scene, double* residual);

/*
 * Copies a named map, channel by channel, row-major. Names: frame_a, frame_b,
 * t_obj_ab, t_obj_ba (3 channels); depth_a, depth_b, object_mask_a,
 * object_mask_b, valid_a, valid_b (1 channel). `len` must equal
 * channels * width * height.
 */
DMK_API dmk_status dmk_scene_copy(const dmk_scene* scene, const char* name, double* out, size_t len);

DMK_API void dmk_scene_free(dmk_scene* scene);

/* ---- fitting --------------------------------------------------------- */

/* Default fit configuration document. */
DMK_API dmk_status dmk_default_config(char** config_json);

/*
 * Optimises depth, motion (and intrinsics when the config asks for it).
 * `config_json` may be NULL for defaults. Without learned intrinsics the
 * scene must carry intrinsics. DMK_ERR_DIVERGED reports the step index in
 * dmk_last_error().
 */
DMK_API dmk_status dmk_fit_run(const dmk_scene* scene, const char* config_json, dmk_progress_fn progress,
                               void* user, dmk_fit** out);

/* A fit result holding the scene's ground truth. */
DMK_API dmk_status dmk_fit_oracle(const dmk_scene* scene, dmk_fit** out);

/* Writes depth/motion PFMs, fit.json and trace.json; returns the file names. */
DMK_API dmk_status dmk_fit_save(const dmk_fit* fit, const char* dir, char** artifacts_json);
DMK_API dmk_status dmk_fit_load(const char* dir, dmk_fit** out);

/* Ego-motion, intrinsics and run flags. */
DMK_API dmk_status dmk_fit_info(const dmk_fit* fit, char** info_json);
DMK_API dmk_status dmk_fit_trace(const dmk_fit* fit, char** trace_json);

/* Names: depth_a, depth_b (1 channel); t_obj_ab, t_obj_ba (3 channels). */
DMK_API dmk_status dmk_fit_copy(const dmk_fit* fit, const char* name, double* out, size_t len);

DMK_API void dmk_fit_free(dmk_fit* fit);

/* ---- evaluation, checks, rendering ----------------------------------- */

/*
 * Depth and motion metrics against ground truth. With median_scale != 0 the
 * fit is first scaled by median(gt)/median(pred) over valid pixels and all
 * predicted translations are multiplied by the same factor.
 */
DMK_API dmk_status dmk_eval(const dmk_fit* fit, const dmk_scene* scene, int median_scale, char** metrics_json);

/*
 * Finite-difference check of a named loss on random inputs. Names:
 * group_smooth, sparsity, depth_smooth, cycle, photometric, pair_total.
 * `passed` is set to 1 when the worst relative error is within tolerance.
 */
DMK_API dmk_status dmk_gradcheck(const char* loss, int rows, int cols, uint64_t seed, char** report_json,
                                 int* passed);

/* Writes disparity.ppm and motion.ppm for the a-frame of a fit. */
DMK_API dmk_status dmk_render(const dmk_fit* fit, const char* dir, char** artifacts_json);

#ifdef __cplusplus
}
#endif

#endif
