/* Copyright 2025 The flowlab authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the flowlab core: flow-matching/diffusion training on 2D
 * toy data, ODE samplers with guidance, audio-style evaluation metrics,
 * waveform loss functions, and the caption curation pipeline.
 *
 * Conventions: functions return FL_OK (0) on success or a nonzero status;
 * fl_last_error() holds a thread-local message for the most recent failure.
 * Handles are opaque and freed with their matching *_free/*_close call.
 */

#ifndef FLOWLAB_FLOWLAB_H_
#define FLOWLAB_FLOWLAB_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FLOWLAB_API __declspec(dllexport)
#else
#define FLOWLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fl_status {
    FL_OK = 0,
    FL_ERR_INVALID_ARGUMENT = 1,
    FL_ERR_SHAPE = 2,
    FL_ERR_DOMAIN = 3,
    FL_ERR_NUMERIC = 4,
    FL_ERR_SINGULAR = 5,
    FL_ERR_PARSE = 6,
    FL_ERR_IO = 7,
    FL_ERR_STATE = 8,
    FL_ERR_NOT_CONVERGED = 9,
    FL_ERR_INTERNAL = 10
} fl_status;

FLOWLAB_API const char* fl_status_name(fl_status status);

/* Message for the most recent failure on this thread; never NULL. */
FLOWLAB_API const char* fl_last_error(void);

FLOWLAB_API const char* fl_version(void);

/* ---- configuration ----
 * Hierarchical key-value configuration (TOML-style sections). Keys are
 * dotted paths such as "train.lr". Precedence: fl_config_set overrides
 * values loaded from a file, which override built-in defaults.
 */
typedef struct fl_config fl_config;

FLOWLAB_API fl_config* fl_config_new(void);
FLOWLAB_API fl_status fl_config_load_file(fl_config* config, const char* path);
FLOWLAB_API fl_status fl_config_set(fl_config* config, const char* key, const char* value);
/* Copies the stored raw value into buf (NUL-terminated); FL_ERR_STATE when
 * the key is absent. */
FLOWLAB_API fl_status fl_config_get(const fl_config* config, const char* key, char* buf,
                                    size_t buf_len);
FLOWLAB_API void fl_config_free(fl_config* config);

/* ---- training ----
 * Trains per the config and writes checkpoint.json, meta.json, and
 * report.json into out_dir.
 */
FLOWLAB_API fl_status fl_train(const fl_config* config, uint64_t seed, const char* out_dir);

/* ---- models and sampling ---- */
typedef struct fl_model fl_model;

/* path may be a run directory or the checkpoint file itself; meta.json must
 * sit next to the checkpoint. */
FLOWLAB_API fl_status fl_model_open(const char* path, fl_model** out_model);
FLOWLAB_API void fl_model_close(fl_model* model);

typedef struct fl_sample_options {
    int64_t n;             /* number of samples */
    const char* method;    /* "euler" or "heun" */
    int64_t steps;         /* solver steps */
    double w_cfg;          /* 1 disables CFG */
    double cfg_t_lo;       /* CFG active for cfg_t_lo <= t <= cfg_t_hi */
    double cfg_t_hi;
    double w_ag;           /* 1 disables autoguidance */
    int32_t class_id;      /* FL_COND_NONE, FL_COND_MIXED, or a class id */
    uint64_t seed;
} fl_sample_options;

#define FL_COND_NONE (-1)
#define FL_COND_MIXED (-2)

/* Fills in the defaults: n=1000, euler, steps=100, w_cfg=3.5, full CFG
 * interval, w_ag=1, unconditional, seed=0. */
FLOWLAB_API void fl_sample_options_init(fl_sample_options* options);

/* Integrates trajectories from seeded Gaussian noise and writes a CSV
 * (header x,y or x,y,label). bad_model may be NULL unless w_ag != 1. */
FLOWLAB_API fl_status fl_model_sample(fl_model* model, const fl_sample_options* options,
                                      fl_model* bad_model, const char* csv_out);

/* Sweep over methods x NFE x w_cfg; CSV columns
 * method,steps,nfe,w_cfg,w_ag,fd,w2. Lists are comma-separated, e.g.
 * "euler,heun", "5,10,50", "1,3". */
FLOWLAB_API fl_status fl_model_sweep(fl_model* model, const char* methods, const char* nfe_list,
                                     const char* wcfg_list, double w_ag, fl_model* bad_model,
                                     uint64_t seed, const char* csv_out);

/* ---- metrics over JSON-lines files ----
 * ref/gen embeddings are required; pass NULL for absent posterior or paired
 * embedding inputs — the report lists the affected metrics under
 * "not_computed". Writes a JSON report.
 */
FLOWLAB_API fl_status fl_metrics(const char* ref_embeddings, const char* gen_embeddings,
                                 const char* ref_posteriors, const char* gen_posteriors,
                                 const char* text_embeddings, const char* audio_embeddings,
                                 const char* json_out);

/* Direct metric entry points over row-major buffers. */
FLOWLAB_API fl_status fl_frechet_distance(const double* ref, int64_t ref_n, const double* gen,
                                          int64_t gen_n, int64_t dim, double* out);
FLOWLAB_API fl_status fl_paired_kl(const double* ref, const double* gen, int64_t n,
                                   int64_t classes, double* out);
FLOWLAB_API fl_status fl_inception_score(const double* posteriors, int64_t n, int64_t classes,
                                         double* out);
FLOWLAB_API fl_status fl_embedding_score(const double* text, const double* audio, int64_t n,
                                         int64_t dim, double* out);

/* ---- caption curation ----
 * Reads records and candidates (JSON-lines), filters per the [filter]
 * section of the config, and writes accepted captions (JSON-lines), a
 * summary JSON, and optionally a histogram CSV (pass NULL to skip).
 */
FLOWLAB_API fl_status fl_filter_captions(const fl_config* config, const char* records_path,
                                         const char* candidates_path, const char* accepted_out,
                                         const char* summary_out, const char* histogram_out);

/* ---- VAE losses ----
 * Loss suite over synthetic or file-provided signals per the [vae] config
 * section; writes a JSON report.
 */
FLOWLAB_API fl_status fl_vae_loss(const fl_config* config, uint64_t seed, const char* json_out);

/* ---- selftest ----
 * Runs the invariant suite, printing one line per check to stdout.
 * Returns the number of failed checks; negative values indicate an
 * internal error.
 */
FLOWLAB_API int fl_selftest(int verbose);

#ifdef __cplusplus
}
#endif

#endif /* FLOWLAB_FLOWLAB_H_ */
