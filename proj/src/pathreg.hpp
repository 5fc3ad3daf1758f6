#pragma once

#include <vector>

#include "graph.hpp"
#include "hypergrid.hpp"
#include "ot.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "trajectory.hpp"

namespace gflowot {

enum class RegMode { None, MinOt, MaxOt, UbOt };
enum class OtMethod { Closed, Sinkhorn, Exact };

struct RegularizerConfig {
    RegMode mode = RegMode::None;
    OtMethod method = OtMethod::Closed;
    double lambda = 0.02;
    double dropout_p = 1.0; // 1 = every edge; < 1 enables the unbiased subsample
    double sinkhorn_epsilon = 0.01;
    int sinkhorn_max_iters = 500;
    double sinkhorn_tol = 1e-6;

    void validate() const;
};

// Children of s and s' listed side by side and lined up by action id:
// u_a = s + a, v_a = s' + a. star_action is the action of the edge s -> s'.
// aligned_actions holds the non-stop actions valid at both states; everything
// the closed form needs lives here.
struct AlignedNeighborhood {
    State s, sp;
    int star_action = -1;
    std::vector<std::pair<State, int>> children_s, children_sp;
    int sp_index = -1;                // position of s' within children_s
    std::vector<int> aligned_actions; // subset of action ids
    std::vector<State> u, v;          // per aligned action
};

// Validates s' in Child(s), eligibility, and the structural consequences the
// closed form rests on (disjoint child sets, u_a + a* = v_a).
AlignedNeighborhood align_neighborhood(const Environment& env, const State& s, const State& sp);

// P*_B(u_i|s) = P_B(s|u_i) for every child of s, in children(env, s) order.
// Entries come from different children's backward distributions, so the
// vector need not sum to 1.
std::vector<ad::Var> pseudo_backward(PolicyTape& tape, const State& s);

// Directed-distance cost matrix between Child(s) and Child(s'):
//   0 when u_i and v_j coincide,
//   min(back-and-forth, -log P_F(v_j|u_i)) when the edge u_i -> v_j exists,
//   back-and-forth -log(P_B(s|u_i) P_F(s'|s) P_F(v_j|s')) otherwise,
// every log floored at kLogFloor first. entries are live tape nodes; values
// mirrors them for solver input.
struct EdgeCostMatrix {
    std::vector<std::pair<State, int>> row_children, col_children;
    int rows = 0, cols = 0;
    std::vector<double> values;
    std::vector<ad::Var> entries;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
};

EdgeCostMatrix cost_matrix(PolicyTape& tape, const State& s, const State& sp);

// OT distance between P_F(.|s) and P_F(.|s') by the configured method, as a
// differentiable node. Exact/Sinkhorn treat the optimal plan as a constant
// and route gradients through the cost entries; the closed form is
// differentiated directly.
ad::Var edge_ot(PolicyTape& tape, const RegularizerConfig& cfg, const State& s, const State& sp);

// Closed-form OT value for an eligible neighborhood:
//   H(P_F(.|s), P*_B(.|s)) - log P_F(s'|s) + H(P_F(.|s'))
//   + P_F(s'|s) (log P_B(s|s') + log P_F(s'|s))
//   + sum_aligned min(P_F(u_a|s), P_F(v_a|s')) c'_a
// with c'_a = min(0, log P_B(s|u_a) + log P_F(s'|s) + log P_F(v_a|s')
//                   - log P_F(v_a|u_a)) and c'_{a*} = 0.
ad::Var closed_form_ot(PolicyTape& tape, const AlignedNeighborhood& nbhd);

// Per-edge upper bound H(P_F(.|s), P*_B(.|s)) - log P_F(s'|s) + H(P_F(.|s')).
ad::Var upper_bound_edge(PolicyTape& tape, const State& s, const State& sp);

// Sum of per-edge values over the trajectory's stored edges (the x -> x^T
// stop edge included, the forced x^T -> s_f hop excluded). With
// dropout_p < 1 the sum runs over Bernoulli-selected edges scaled by 1/p;
// dropout_rng may be null when dropout_p == 1.
ad::Var path_reg_loss(PolicyTape& tape, const RegularizerConfig& cfg, const TrajectorySample& sample, Rng* dropout_rng);

struct CombinedLoss {
    ad::Var total;
    ad::Var tb;
    ad::Var reg; // invalid when the regularizer is off
};

// L_TB + lambda * L_reg (min/ub), L_TB - lambda * L_reg (max), or plain
// L_TB. A zero lambda short-circuits to the pure TB loss and consumes no
// dropout randomness.
CombinedLoss combined_loss(PolicyTape& tape, const RegularizerConfig& cfg, const TrajectorySample& sample,
                           Rng* dropout_rng);

} // namespace gflowot
