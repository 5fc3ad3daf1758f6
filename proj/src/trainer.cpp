#include "trainer.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "adam.hpp"
#include "graph.hpp"
#include "rng.hpp"
#include "trajectory.hpp"

namespace gflowot {

void TrainConfig::validate() const {
    if (steps < 1) throw InvalidArgument("TrainConfig: steps must be positive");
    if (batch < 1) throw InvalidArgument("TrainConfig: batch must be positive");
    if (!(lr_policy > 0.0) || !(lr_logz > 0.0)) throw InvalidArgument("TrainConfig: learning rates must be positive");
    if (explore_alpha < 0.0 || explore_alpha > 1.0) throw InvalidArgument("TrainConfig: explore_alpha must lie in [0, 1]");
    if (log_every < 1) throw InvalidArgument("TrainConfig: log_every must be positive");
    if (stop_on_modes < 0) throw InvalidArgument("TrainConfig: stop_on_modes must be non-negative");
    if (visit_capacity == 0) throw InvalidArgument("TrainConfig: visit_capacity must be positive");
    reg.validate();
}

RunMetrics train(const HypergridEnv& env, PolicyModel& model, const TrainConfig& cfg) {
    cfg.validate();
    const bool reg_active = cfg.reg.mode != RegMode::None && cfg.reg.lambda != 0.0;

    std::vector<double> true_dist = env.true_distribution();
    VisitTracker tracker(env, cfg.visit_capacity);

    Rng sample_rng(substream_seed(cfg.seed, RngStream::Sampling));
    Rng dropout_rng(substream_seed(cfg.seed, RngStream::Dropout));

    Adam opt;
    std::vector<ad::Tensor*> all_params;
    {
        std::vector<ad::Tensor*> policy_group;
        std::vector<ad::Tensor*> logz_group;
        for (auto& [name, t] : model.named_parameters()) {
            if (name == "log_z") {
                logz_group.push_back(t);
            } else {
                policy_group.push_back(t);
            }
            all_params.push_back(t);
        }
        // registration order must match all_params
        opt.add_group(policy_group, cfg.lr_policy);
        opt.add_group(logz_group, cfg.lr_logz);
        std::vector<ad::Tensor*> reordered(policy_group);
        reordered.insert(reordered.end(), logz_group.begin(), logz_group.end());
        all_params = std::move(reordered);
    }

    RunMetrics metrics;
    ad::Graph g;
    double mean_tb = 0.0;
    double mean_ot = 0.0;

    auto log_row = [&](std::int64_t step) {
        MetricsRow row;
        row.step = step;
        row.trajectories = tracker.total_recorded();
        row.modes_found = tracker.modes_found();
        row.kl = tracker.kl_to(true_dist);
        row.loss_tb = mean_tb;
        row.loss_ot = mean_ot;
        metrics.rows.push_back(row);
    };

    std::int64_t step = 0;
    bool stopped_on_modes = false;
    for (step = 1; step <= cfg.steps; ++step) {
        const auto samples = sample_trajectories(model, env, cfg.explore_alpha, cfg.batch, sample_rng);
        for (const auto& s : samples) tracker.record(s.terminal);

        try {
            PolicyTape tape(g, env, model);
            for (const auto& sample : samples) {
                for (const auto& st : sample.steps) {
                    if (reg_active) {
                        tape.add_state_and_children(st.state);
                    } else {
                        tape.add_state(st.state);
                    }
                }
            }
            tape.build();

            std::vector<ad::Var> totals;
            totals.reserve(samples.size());
            mean_tb = 0.0;
            mean_ot = 0.0;
            for (const auto& sample : samples) {
                CombinedLoss loss = combined_loss(tape, cfg.reg, sample, &dropout_rng);
                totals.push_back(loss.total);
                mean_tb += g.value(loss.tb);
                if (loss.reg.valid()) mean_ot += g.value(loss.reg);
            }
            mean_tb /= static_cast<double>(samples.size());
            mean_ot /= static_cast<double>(samples.size());

            ad::Var total = g.scale(g.addn(totals), 1.0 / static_cast<double>(samples.size()));
            const auto grads = g.grad(total, all_params);
            opt.step(grads);
        } catch (const NumericError& e) {
            throw NumericError("train: aborted at step " + std::to_string(step) + ": " + e.what());
        }

        const bool last = step == cfg.steps;
        const bool modes_done = cfg.stop_on_modes > 0 && tracker.modes_found() >= cfg.stop_on_modes;
        if (step % cfg.log_every == 0 || last || modes_done) log_row(step);
        if (modes_done) {
            stopped_on_modes = true;
            break;
        }
    }

    metrics.steps_run = stopped_on_modes ? step : cfg.steps;
    metrics.trajectories = tracker.total_recorded();
    metrics.modes_found = tracker.modes_found();
    metrics.trajectories_to_all_modes = tracker.trajectories_to_all_modes();
    metrics.final_kl = metrics.rows.empty() ? 0.0 : metrics.rows.back().kl;

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        write_metrics_csv(cfg.out_dir + "/metrics.csv", metrics);
        write_config_json(cfg.out_dir + "/config.json", cfg);
        model.save(cfg.out_dir + "/model.ckpt");
    }
    return metrics;
}

std::string to_string(RegMode mode) {
    switch (mode) {
    case RegMode::None: return "none";
    case RegMode::MinOt: return "min-ot";
    case RegMode::MaxOt: return "max-ot";
    case RegMode::UbOt: return "ub-ot";
    }
    return "none";
}

std::string to_string(OtMethod method) {
    switch (method) {
    case OtMethod::Closed: return "closed";
    case OtMethod::Sinkhorn: return "sinkhorn";
    case OtMethod::Exact: return "exact";
    }
    return "closed";
}

RegMode parse_reg_mode(const std::string& s) {
    if (s == "none") return RegMode::None;
    if (s == "min-ot") return RegMode::MinOt;
    if (s == "max-ot") return RegMode::MaxOt;
    if (s == "ub-ot") return RegMode::UbOt;
    throw InvalidArgument("unknown regularizer mode: " + s);
}

OtMethod parse_ot_method(const std::string& s) {
    if (s == "closed") return OtMethod::Closed;
    if (s == "sinkhorn") return OtMethod::Sinkhorn;
    if (s == "exact") return OtMethod::Exact;
    throw InvalidArgument("unknown OT method: " + s);
}

void write_metrics_csv(const std::string& path, const RunMetrics& metrics) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_metrics_csv: cannot open " + path);
    std::fputs("step,trajectories,modes_found,kl,loss_tb,loss_ot\n", f);
    for (const auto& r : metrics.rows) {
        std::fprintf(f, "%" PRId64 ",%" PRId64 ",%d,%.12g,%.12g,%.12g\n", r.step, r.trajectories, r.modes_found, r.kl,
                     r.loss_tb, r.loss_ot);
    }
    if (std::fclose(f) != 0) throw IoError("write_metrics_csv: write failed for " + path);
}

void write_config_json(const std::string& path, const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["env"] = {{"name", "hypergrid"}, {"dims", cfg.env.dims}, {"side", cfg.env.side}, {"r0", cfg.env.r0}};
    j["steps"] = cfg.steps;
    j["batch"] = cfg.batch;
    j["lr_policy"] = cfg.lr_policy;
    j["lr_logz"] = cfg.lr_logz;
    j["explore_alpha"] = cfg.explore_alpha;
    j["reg"] = {{"mode", to_string(cfg.reg.mode)},
                {"ot_method", to_string(cfg.reg.method)},
                {"lambda", cfg.reg.lambda},
                {"dropout_p", cfg.reg.dropout_p},
                {"sinkhorn_epsilon", cfg.reg.sinkhorn_epsilon},
                {"sinkhorn_max_iters", cfg.reg.sinkhorn_max_iters},
                {"sinkhorn_tol", cfg.reg.sinkhorn_tol}};
    j["seed"] = cfg.seed;
    j["hidden"] = {cfg.widths.h1, cfg.widths.h2};
    j["uniform_backward"] = cfg.uniform_backward;
    j["log_every"] = cfg.log_every;
    j["stop_on_modes"] = cfg.stop_on_modes;
    j["visit_capacity"] = cfg.visit_capacity;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_config_json: cannot open " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("write_config_json: write failed for " + path);
}

} // namespace gflowot
