#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hypergrid.hpp"
#include "policy.hpp"

namespace gflowot {

struct MetricsRow {
    std::int64_t step = 0;
    std::int64_t trajectories = 0;
    int modes_found = 0;
    double kl = 0.0;
    double loss_tb = 0.0;
    double loss_ot = 0.0;
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
    std::int64_t trajectories_to_all_modes = -1; // -1 until every mode is seen
    std::int64_t steps_run = 0;
    std::int64_t trajectories = 0;
    int modes_found = 0;
    double final_kl = 0.0;
};

// Exact model terminal distribution by forward dynamic programming: reach
// probability rho(s_0) = 1, rho(s') = sum_parents rho(s) P_F(s'|s), and
// P_T(x) = rho(x) P_F(stop|x). Guard: at most 1e6 grid states.
std::vector<double> exact_terminal_distribution(const PolicyModel& model, const HypergridEnv& env);

// KL(p_hat || p_true); zero-probability p_hat entries contribute nothing.
// Finite whenever p_true has full support.
double kl_divergence(std::span<const double> p_hat, std::span<const double> p_true);

double total_variation(std::span<const double> p, std::span<const double> q);

// Ring buffer of recently visited terminals plus cumulative mode discovery.
class VisitTracker {
public:
    explicit VisitTracker(const HypergridEnv& env, std::size_t capacity = 200000);

    void record(const State& terminal); // flagged states only
    std::size_t capacity() const { return capacity_; }
    std::size_t occupied() const { return ring_.size(); }
    std::int64_t total_recorded() const { return total_; }
    int modes_found() const { return modes_found_; }
    int mode_count() const { return static_cast<int>(mode_seen_.size()); }
    std::int64_t trajectories_to_all_modes() const { return trajectories_to_all_modes_; }
    const std::vector<std::int64_t>& counts() const { return counts_; }

    // KL(buffer empirical || true_dist) over the currently held window.
    double kl_to(std::span<const double> true_dist) const;

private:
    const HypergridEnv& env_;
    std::size_t capacity_;
    std::vector<std::uint32_t> ring_;
    std::size_t next_ = 0;
    std::vector<std::int64_t> counts_; // per grid index, over the window
    std::vector<std::uint8_t> mode_seen_;
    std::vector<std::int64_t> mode_index_of_; // grid index -> mode slot or -1
    int modes_found_ = 0;
    std::int64_t total_ = 0;
    std::int64_t trajectories_to_all_modes_ = -1;
};

} // namespace gflowot
