#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "graph.hpp"
#include "hypergrid.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace gflowot {

// Every log-probability entering a cost or loss expression is floored here;
// gradients pass unchanged above the floor.
inline constexpr double kLogFloor = -60.0;

inline constexpr double kLeakySlope = 0.01;

struct PolicyWidths {
    int h1 = 256;
    int h2 = 256;
};

// Trajectory-balance parameterization (Z, P_F, P_B): a shared two-hidden-layer
// trunk over the one-hot state encoding with a forward head (one logit per
// action, stop included) and a backward head (one logit per parent action),
// plus the learnable scalar log Z. Hidden weights are fan-in-scaled uniform,
// head weights start at zero so the initial policies are uniform.
class PolicyModel {
public:
    PolicyModel(const Environment& env, PolicyWidths widths, bool uniform_backward, std::uint64_t seed);

    int input_dim() const { return input_dim_; }
    int action_count() const { return actions_; }
    bool uniform_backward() const { return uniform_backward_; }
    const PolicyWidths& widths() const { return widths_; }

    double log_total_flow() const { return log_z_.v[0]; }
    ad::Tensor& log_z() { return log_z_; }
    const ad::Tensor& log_z() const { return log_z_; }

    // All trainable tensors, log_z last. Stable order; the order defines the
    // checkpoint layout and the optimizer slot layout.
    std::vector<std::pair<std::string, ad::Tensor*>> named_parameters();
    std::vector<std::pair<std::string, const ad::Tensor*>> named_parameters() const;

    // ---- tape-free evaluation ----
    // log P_F(action | s) for grid states; flagged states return the forced
    // point mass on the stop action. Masked-off lanes are -inf.
    std::vector<double> forward_log_probs(const Environment& env, const State& s) const;
    // log P_B(parent-action | s) for grid states != s_0. Lane a corresponds
    // to the parent reached by undoing action a; lanes without a parent are
    // -inf. Uniform-backward models return log(1/#parents) on parent lanes.
    std::vector<double> backward_log_probs(const Environment& env, const State& s) const;
    // Batched version of the two above over grid states; rows of log_f/log_b
    // are action_count() wide. States must all be grid states.
    void eval_log_probs(const Environment& env, std::span<const State> states, std::vector<double>& log_f,
                        std::vector<double>& log_b) const;

    // ---- persistence (bit-exact round trip) ----
    void save(const std::string& path) const;
    static PolicyModel load(const Environment& env, const std::string& path);

private:
    friend class PolicyTape;
    void forward_logits(std::span<const double> x, std::span<double> scratch, std::span<double> logits_f,
                        std::span<double> logits_b) const;

    int input_dim_;
    int actions_;
    PolicyWidths widths_;
    bool uniform_backward_;
    ad::Tensor w1_, b1_, w2_, b2_, wf_, bf_, wb_, bb_, log_z_;
};

// Tape-side policy evaluation for a set of states. Register the states a
// loss will touch, build() runs one batched trunk pass on the tape, then
// log_forward/log_backward hand out clamped log-probability nodes (memoized,
// so repeated queries share one node). States registered after build() are
// evaluated on demand in single rows; values are bit-identical either way.
class PolicyTape {
public:
    PolicyTape(ad::Graph& g, const Environment& env, PolicyModel& model);

    void add_state(const State& s); // grid states only; others are no-ops
    void add_state_and_children(const State& s);
    void build();

    // Clamped (kLogFloor) log-probability nodes.
    ad::Var log_forward(const State& s, int action);
    ad::Var log_backward(const State& s, int parent_action);
    ad::Var log_z();
    // Plain values matching the tape nodes bit-for-bit.
    double log_forward_value(const State& s, int action);
    double log_backward_value(const State& s, int parent_action);

    ad::Graph& graph() { return g_; }
    const Environment& env() const { return env_; }
    PolicyModel& model() { return model_; }

private:
    struct RowRef {
        ad::Var log_f; // 1 x A or slice row within the batched matrix
        ad::Var log_b;
        int row = 0;
    };
    int row_of(const State& s); // registers + evaluates on demand post-build
    RowRef eval_single(const State& s);

    ad::Graph& g_;
    const Environment& env_;
    PolicyModel& model_;
    std::vector<State> pending_;
    std::unordered_map<std::uint64_t, int> index_; // state_key -> pending_/rows_ index
    std::vector<RowRef> rows_;
    ad::Var batch_log_f_{};
    ad::Var batch_log_b_{};
    bool built_ = false;
    std::unordered_map<std::uint64_t, ad::Var> memo_; // (row, head, action) -> clamped node
};

} // namespace gflowot
