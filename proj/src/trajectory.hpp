#pragma once

#include <vector>

#include "graph.hpp"
#include "hypergrid.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace gflowot {

struct TrajectoryStep {
    State state; // grid state the action was taken from
    int action = 0;
    double log_pf = 0.0; // model's clamped log P_F(action|state), mixture excluded
    double log_pb = 0.0; // clamped log P_B(state|next) of the transition
};

// A complete trajectory s_0 -> ... -> x -> x^T; the forced x^T -> s_f hop
// carries probability 1 on both policies and is not stored.
struct TrajectorySample {
    std::vector<TrajectoryStep> steps; // last step is the stop action at x
    State terminal;                    // flagged x^T
    double reward = 0.0;
    double log_ptau = 0.0; // sum of stored log_pf

    std::size_t edge_count() const { return steps.size(); }
    // Edge t runs from steps[t].state to edge_target(t).
    const State& edge_target(std::size_t t) const { return t + 1 < steps.size() ? steps[t + 1].state : terminal; }
};

// One trajectory under the exploration-mixed training policy
// (1-alpha) * P_F + alpha * Uniform over valid actions. Stored per-step
// log-probabilities are the model's, since the losses use P_F.
TrajectorySample sample_trajectory(const PolicyModel& model, const Environment& env, double explore_alpha, Rng& rng);

// Batch variant marching all trajectories in lockstep so the policy
// evaluations batch into full matrix passes. Equivalent distribution; RNG
// draw order differs from repeated sample_trajectory calls.
std::vector<TrajectorySample> sample_trajectories(const PolicyModel& model, const Environment& env, double explore_alpha,
                                                  int count, Rng& rng);

// Squared trajectory-balance residual
//   (log Z + sum log P_F - log R(x) - sum log P_B)^2
// recomputed on the tape from the current parameters.
ad::Var tb_loss(PolicyTape& tape, const TrajectorySample& sample);

// Residual recomputed from the sample's stored values (no tape); test oracle
// and cheap diagnostics.
double tb_loss_value_from_stored(const PolicyModel& model, const TrajectorySample& sample);

} // namespace gflowot
