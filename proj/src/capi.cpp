#include "gflowot/gflowot.h"

#include <exception>
#include <string>

#include "errors.hpp"
#include "evaluator.hpp"
#include "hypergrid.hpp"
#include "policy.hpp"
#include "trainer.hpp"

using namespace gflowot;

struct gfot_env {
    HypergridEnv env;
};

struct gfot_model {
    PolicyModel model;
};

namespace {

thread_local std::string t_last_error;

template <typename Fn> gfot_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return GFOT_OK;
    } catch (const InvalidArgument& e) {
        t_last_error = e.what();
        return GFOT_ERR_INVALID_ARGUMENT;
    } catch (const NumericError& e) {
        t_last_error = e.what();
        return GFOT_ERR_NUMERIC;
    } catch (const IoError& e) {
        t_last_error = e.what();
        return GFOT_ERR_IO;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return GFOT_ERR_INTERNAL;
    } catch (...) {
        t_last_error = "unknown error";
        return GFOT_ERR_INTERNAL;
    }
}

gfot_status require(bool cond, const char* message) {
    if (cond) return GFOT_OK;
    t_last_error = message;
    return GFOT_ERR_INVALID_ARGUMENT;
}

} // namespace

extern "C" {

const char* gfot_status_name(gfot_status status) {
    switch (status) {
    case GFOT_OK: return "ok";
    case GFOT_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GFOT_ERR_NUMERIC: return "numeric_error";
    case GFOT_ERR_IO: return "io_error";
    case GFOT_ERR_INTERNAL: return "internal_error";
    }
    return "unknown";
}

const char* gfot_last_error(void) { return t_last_error.c_str(); }

gfot_status gfot_env_create_hypergrid(int dims, int side, double r0, gfot_env** out_env) {
    if (gfot_status s = require(out_env != nullptr, "out_env is NULL"); s != GFOT_OK) return s;
    *out_env = nullptr;
    return guarded([&] { *out_env = new gfot_env{HypergridEnv(HypergridSpec{dims, side, r0})}; });
}

void gfot_env_destroy(gfot_env* env) { delete env; }

gfot_status gfot_env_reward(const gfot_env* env, const int* coords, int n_coords, double* out_reward) {
    if (gfot_status s = require(env && coords && out_reward, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] {
        if (n_coords != env->env.dims()) throw InvalidArgument("gfot_env_reward: coordinate count mismatch");
        State t;
        t.coords.assign(coords, coords + n_coords);
        t.kind = StateKind::Flagged;
        *out_reward = env->env.reward(t);
    });
}

gfot_status gfot_env_partition(const gfot_env* env, double* out_z) {
    if (gfot_status s = require(env && out_z, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] {
        double z = 0.0;
        env->env.true_distribution(&z);
        *out_z = z;
    });
}

gfot_status gfot_env_mode_count(const gfot_env* env, int* out_count) {
    if (gfot_status s = require(env && out_count, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] { *out_count = static_cast<int>(env->env.mode_indices().size()); });
}

gfot_status gfot_model_create(const gfot_env* env, int hidden1, int hidden2, int uniform_backward, uint64_t seed,
                              gfot_model** out_model) {
    if (gfot_status s = require(env && out_model, "NULL argument"); s != GFOT_OK) return s;
    *out_model = nullptr;
    return guarded([&] {
        PolicyWidths widths{hidden1, hidden2};
        *out_model = new gfot_model{PolicyModel(env->env, widths, uniform_backward != 0, seed)};
    });
}

void gfot_model_destroy(gfot_model* model) { delete model; }

gfot_status gfot_model_save(const gfot_model* model, const char* path) {
    if (gfot_status s = require(model && path, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] { model->model.save(path); });
}

gfot_status gfot_model_load(const gfot_env* env, const char* path, gfot_model** out_model) {
    if (gfot_status s = require(env && path && out_model, "NULL argument"); s != GFOT_OK) return s;
    *out_model = nullptr;
    return guarded([&] { *out_model = new gfot_model{PolicyModel::load(env->env, path)}; });
}

gfot_status gfot_model_log_z(const gfot_model* model, double* out_log_z) {
    if (gfot_status s = require(model && out_log_z, "NULL argument"); s != GFOT_OK) return s;
    *out_log_z = model->model.log_total_flow();
    return GFOT_OK;
}

void gfot_train_config_init(gfot_train_config* cfg) {
    if (!cfg) return;
    TrainConfig d;
    cfg->steps = d.steps;
    cfg->batch = d.batch;
    cfg->lr_policy = d.lr_policy;
    cfg->lr_logz = d.lr_logz;
    cfg->explore_alpha = d.explore_alpha;
    cfg->reg_mode = GFOT_REG_NONE;
    cfg->ot_method = GFOT_OT_CLOSED;
    cfg->lambda = d.reg.lambda;
    cfg->dropout_p = d.reg.dropout_p;
    cfg->sinkhorn_epsilon = d.reg.sinkhorn_epsilon;
    cfg->sinkhorn_max_iters = d.reg.sinkhorn_max_iters;
    cfg->sinkhorn_tol = d.reg.sinkhorn_tol;
    cfg->seed = d.seed;
    cfg->log_every = d.log_every;
    cfg->stop_on_modes = d.stop_on_modes;
    cfg->visit_capacity = static_cast<int64_t>(d.visit_capacity);
}

gfot_status gfot_train_run(const gfot_env* env, gfot_model* model, const gfot_train_config* cfg, const char* out_dir,
                           gfot_train_summary* out_summary) {
    if (gfot_status s = require(env && model && cfg, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] {
        TrainConfig c;
        c.env = env->env.spec();
        c.steps = cfg->steps;
        c.batch = cfg->batch;
        c.lr_policy = cfg->lr_policy;
        c.lr_logz = cfg->lr_logz;
        c.explore_alpha = cfg->explore_alpha;
        switch (cfg->reg_mode) {
        case GFOT_REG_NONE: c.reg.mode = RegMode::None; break;
        case GFOT_REG_MIN_OT: c.reg.mode = RegMode::MinOt; break;
        case GFOT_REG_MAX_OT: c.reg.mode = RegMode::MaxOt; break;
        case GFOT_REG_UB_OT: c.reg.mode = RegMode::UbOt; break;
        default: throw InvalidArgument("gfot_train_run: unknown reg_mode");
        }
        switch (cfg->ot_method) {
        case GFOT_OT_CLOSED: c.reg.method = OtMethod::Closed; break;
        case GFOT_OT_SINKHORN: c.reg.method = OtMethod::Sinkhorn; break;
        case GFOT_OT_EXACT: c.reg.method = OtMethod::Exact; break;
        default: throw InvalidArgument("gfot_train_run: unknown ot_method");
        }
        c.reg.lambda = cfg->lambda;
        c.reg.dropout_p = cfg->dropout_p;
        c.reg.sinkhorn_epsilon = cfg->sinkhorn_epsilon;
        c.reg.sinkhorn_max_iters = cfg->sinkhorn_max_iters;
        c.reg.sinkhorn_tol = cfg->sinkhorn_tol;
        c.seed = cfg->seed;
        c.log_every = cfg->log_every;
        c.stop_on_modes = cfg->stop_on_modes;
        if (cfg->visit_capacity < 1) throw InvalidArgument("gfot_train_run: visit_capacity must be positive");
        c.visit_capacity = static_cast<std::size_t>(cfg->visit_capacity);
        c.widths = model->model.widths();
        c.uniform_backward = model->model.uniform_backward();
        if (out_dir) c.out_dir = out_dir;

        RunMetrics m = train(env->env, model->model, c);
        if (out_summary) {
            out_summary->steps_run = m.steps_run;
            out_summary->trajectories = m.trajectories;
            out_summary->modes_found = m.modes_found;
            out_summary->trajectories_to_all_modes = m.trajectories_to_all_modes;
            out_summary->final_kl = m.final_kl;
            out_summary->log_z = model->model.log_total_flow();
        }
    });
}

gfot_status gfot_eval_exact(const gfot_env* env, const gfot_model* model, double* out_tv, double* out_kl) {
    if (gfot_status s = require(env && model, "NULL argument"); s != GFOT_OK) return s;
    return guarded([&] {
        const std::vector<double> p = exact_terminal_distribution(model->model, env->env);
        const std::vector<double> q = env->env.true_distribution();
        if (out_tv) *out_tv = total_variation(p, q);
        if (out_kl) *out_kl = kl_divergence(p, q);
    });
}

} // extern "C"
