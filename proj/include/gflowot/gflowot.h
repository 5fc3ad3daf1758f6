/* gflowot: GFlowNet training with optimal-transport path regularization.
 *
 * C interface over the core library. All objects are opaque handles created
 * and destroyed through these functions; every fallible call returns a
 * gfot_status and leaves a human-readable message in gfot_last_error() on
 * failure. Handles are not thread-safe individually, but distinct handles
 * may be used from distinct threads.
 */
#ifndef GFLOWOT_H
#define GFLOWOT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gfot_status {
    GFOT_OK = 0,
    GFOT_ERR_INVALID_ARGUMENT = 1,
    GFOT_ERR_NUMERIC = 2,
    GFOT_ERR_IO = 3,
    GFOT_ERR_INTERNAL = 4
} gfot_status;

const char* gfot_status_name(gfot_status status);

/* Message of the most recent failure on the calling thread ("" when none). */
const char* gfot_last_error(void);

typedef struct gfot_env gfot_env;
typedef struct gfot_model gfot_model;

/* ---- environment ------------------------------------------------------ */

gfot_status gfot_env_create_hypergrid(int dims, int side, double r0, gfot_env** out_env);
void gfot_env_destroy(gfot_env* env);

/* Reward of the terminal state at the given cell (n_coords == dims). */
gfot_status gfot_env_reward(const gfot_env* env, const int* coords, int n_coords, double* out_reward);
/* Z = sum of all terminal rewards. */
gfot_status gfot_env_partition(const gfot_env* env, double* out_z);
gfot_status gfot_env_mode_count(const gfot_env* env, int* out_count);

/* ---- model ------------------------------------------------------------ */

/* Two-hidden-layer policy model with forward/backward heads and learnable
 * log Z. uniform_backward != 0 fixes P_B to uniform over parents. */
gfot_status gfot_model_create(const gfot_env* env, int hidden1, int hidden2, int uniform_backward, uint64_t seed,
                              gfot_model** out_model);
void gfot_model_destroy(gfot_model* model);

/* Checkpoints round-trip bit-exactly. */
gfot_status gfot_model_save(const gfot_model* model, const char* path);
gfot_status gfot_model_load(const gfot_env* env, const char* path, gfot_model** out_model);
gfot_status gfot_model_log_z(const gfot_model* model, double* out_log_z);

/* ---- training --------------------------------------------------------- */

typedef enum gfot_reg_mode {
    GFOT_REG_NONE = 0,
    GFOT_REG_MIN_OT = 1,
    GFOT_REG_MAX_OT = 2,
    GFOT_REG_UB_OT = 3
} gfot_reg_mode;

typedef enum gfot_ot_method { GFOT_OT_CLOSED = 0, GFOT_OT_SINKHORN = 1, GFOT_OT_EXACT = 2 } gfot_ot_method;

typedef struct gfot_train_config {
    int64_t steps;
    int batch;
    double lr_policy;
    double lr_logz;
    double explore_alpha;
    int reg_mode;  /* gfot_reg_mode */
    int ot_method; /* gfot_ot_method */
    double lambda;
    double dropout_p; /* (0, 1]; 1 disables edge dropout */
    double sinkhorn_epsilon;
    int sinkhorn_max_iters;
    double sinkhorn_tol;
    uint64_t seed;
    int64_t log_every;
    int stop_on_modes; /* 0 = full budget; else stop once this many modes found */
    int64_t visit_capacity;
} gfot_train_config;

/* Fills the defaults (62500 steps, batch 16, lr 1e-3/0.1, alpha 0.01,
 * regularizer off with lambda 0.02, Sinkhorn eps 0.01 / 500 iters / 1e-6). */
void gfot_train_config_init(gfot_train_config* cfg);

typedef struct gfot_train_summary {
    int64_t steps_run;
    int64_t trajectories;
    int modes_found;
    int64_t trajectories_to_all_modes; /* -1 when not all modes were found */
    double final_kl;
    double log_z;
} gfot_train_summary;

/* Trains the model in place. When out_dir is non-NULL, writes metrics.csv
 * (step,trajectories,modes_found,kl,loss_tb,loss_ot), config.json and
 * model.ckpt under it (the directory is created). Identical (config, seed)
 * runs produce byte-identical metrics files. */
gfot_status gfot_train_run(const gfot_env* env, gfot_model* model, const gfot_train_config* cfg, const char* out_dir,
                           gfot_train_summary* out_summary);

/* ---- evaluation ------------------------------------------------------- */

/* Exact (dynamic-programming) model terminal distribution compared with the
 * enumerated target R/Z: total variation and KL(model || target). Either
 * output pointer may be NULL. */
gfot_status gfot_eval_exact(const gfot_env* env, const gfot_model* model, double* out_tv, double* out_kl);

#ifdef __cplusplus
}
#endif

#endif /* GFLOWOT_H */
