#pragma once

#include <string>

#include "evaluator.hpp"
#include "hypergrid.hpp"
#include "pathreg.hpp"
#include "policy.hpp"

namespace gflowot {

struct TrainConfig {
    HypergridSpec env;
    std::int64_t steps = 62500;
    int batch = 16;
    double lr_policy = 1e-3;
    double lr_logz = 0.1;
    double explore_alpha = 0.01;
    RegularizerConfig reg;
    std::uint64_t seed = 0;
    PolicyWidths widths;
    bool uniform_backward = false;
    std::int64_t log_every = 500;
    int stop_on_modes = 0; // 0 = run the full budget; else stop once this many modes are found
    std::size_t visit_capacity = 200000;
    std::string out_dir; // empty = keep results in memory only

    void validate() const;
};

// Runs the optimization loop: per step, a batch of trajectories sampled from
// the exploration-mixed policy, the batch-mean combined loss, one Adam step
// (policy parameters at lr_policy, log Z at lr_logz), metric rows on the
// logging cadence. When out_dir is set, writes metrics.csv, config.json and
// model.ckpt there. Fully determined by (config, seed).
RunMetrics train(const HypergridEnv& env, PolicyModel& model, const TrainConfig& cfg);

// enum <-> CLI spelling
std::string to_string(RegMode mode);
std::string to_string(OtMethod method);
RegMode parse_reg_mode(const std::string& s);
OtMethod parse_ot_method(const std::string& s);

void write_metrics_csv(const std::string& path, const RunMetrics& metrics);
void write_config_json(const std::string& path, const TrainConfig& cfg);

} // namespace gflowot
