#ifndef FROST_C_H
#define FROST_C_H

/* C API for the FROST corruption-adaptive classification library.
 *
 * All functions return frost_status; FROST_OK is 0. On failure,
 * frost_last_error() returns a thread-local description of what went
 * wrong. Objects are opaque handles created and destroyed through this
 * interface only.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FROST_API __declspec(dllexport)
#else
#define FROST_API __attribute__((visibility("default")))
#endif

typedef enum frost_status {
  FROST_OK = 0,
  FROST_E_ARG = 1,      /* invalid argument / validation failure */
  FROST_E_IO = 2,       /* file could not be read or written */
  FROST_E_FORMAT = 3,   /* file exists but is malformed */
  FROST_E_STATE = 4,    /* operation needs artifacts that are missing */
  FROST_E_INTERNAL = 5, /* anything else */
} frost_status;

typedef struct frost_ctx frost_ctx;     /* artifact dir + configuration */
typedef struct frost_image frost_image; /* intensity image in [0,1] */

FROST_API const char* frost_version(void);

/* Thread-local message for the most recent failure in this thread. */
FROST_API const char* frost_last_error(void);

/* ---- context ---------------------------------------------------------- */

/* artifact_dir is created on demand by pipeline stages. */
FROST_API frost_status frost_ctx_create(const char* artifact_dir,
                                        frost_ctx** out_ctx);
FROST_API void frost_ctx_destroy(frost_ctx* ctx);

/* Merge `key = value` lines from a config file. */
FROST_API frost_status frost_ctx_load_config(frost_ctx* ctx,
                                             const char* path);
FROST_API frost_status frost_ctx_set(frost_ctx* ctx, const char* key,
                                     const char* value);

/* ---- pipeline stages --------------------------------------------------- */

FROST_API frost_status frost_gen_data(frost_ctx* ctx);
FROST_API frost_status frost_train(frost_ctx* ctx);

/* mode is "generic" or "specific"; kind names a corruption for specific
 * mode ("contrast", ..., "gaussian_noise") or is NULL to fit all nine
 * (specific) / is ignored (generic). */
FROST_API frost_status frost_fit_stats(frost_ctx* ctx, const char* mode,
                                       const char* kind);

/* Builds prototypes, the clustering diagnostic, macro-averaged statistics
 * and the codebook file. */
FROST_API frost_status frost_build_codebook(frost_ctx* ctx);

/* severities is a comma list like "4,5"; policy is one of
 * "frost", "baseline", "generic", "oracle", "ablation".
 * threshold < 0 uses the codebook-stored threshold.
 * For "ablation", gate_ok (when non-NULL) receives 1 when the accuracy
 * ordering corr_s >= frost >= corr_g >= b holds within 1 point. */
FROST_API frost_status frost_eval(frost_ctx* ctx, const char* severities,
                                  double threshold, const char* policy,
                                  int* gate_ok);

/* Evaluates the FROST policy at each threshold; writes the sweep CSV. */
FROST_API frost_status frost_sweep_threshold(frost_ctx* ctx,
                                             const char* severities,
                                             const double* thresholds,
                                             size_t count);

/* Prints the stored ablation/diagnostic summary to stdout; fails with
 * FROST_E_STATE when reports have not been produced yet. */
FROST_API frost_status frost_report(frost_ctx* ctx);

/* gen-data through eval in one call. */
FROST_API frost_status frost_run_pipeline(frost_ctx* ctx);

/* ---- images ------------------------------------------------------------ */

FROST_API frost_status frost_image_create(int width, int height, int channels,
                                          const float* data,
                                          frost_image** out_image);
FROST_API frost_status frost_image_load(const char* path,
                                        frost_image** out_image);
FROST_API frost_status frost_image_save(const frost_image* image,
                                        const char* path);
FROST_API frost_status frost_image_info(const frost_image* image, int* width,
                                        int* height, int* channels);
FROST_API frost_status frost_image_read(const frost_image* image,
                                        float* buffer, size_t buffer_len);
FROST_API void frost_image_destroy(frost_image* image);

/* Applies one corruption; ctx may be NULL for default parameter tables,
 * otherwise its config overrides apply. */
FROST_API frost_status frost_corrupt(frost_ctx* ctx, const frost_image* input,
                                     const char* kind, int severity,
                                     uint64_t seed, frost_image** out_image);

/* High-frequency FFT fingerprint; out_values must hold n*n floats. */
FROST_API frost_status frost_fingerprint(const frost_image* input, int n,
                                         float* out_values, size_t buffer_len);

/* Corruption identification + classification against the artifacts in ctx.
 * Any output pointer may be NULL. out_macro/out_stats buffers receive
 * NUL-terminated names truncated to their length. */
FROST_API frost_status frost_infer(frost_ctx* ctx, const frost_image* input,
                                   int* out_class, char* out_macro,
                                   size_t macro_len, char* out_stats,
                                   size_t stats_len, int* out_used_generic);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FROST_C_H */
