#pragma once

#include <span>
#include <vector>

namespace gflowot::ot {

inline constexpr int kMaxSupport = 64;

struct TransportPlan {
    int rows = 0;
    int cols = 0;
    std::vector<double> flow; // row-major coupling
    double value = 0.0;       // <C, flow>
    bool converged = true;    // always true for the exact solver
    double marginal_residual = 0.0;
    int iterations = 0;

    double at(int i, int j) const { return flow[static_cast<std::size_t>(i) * cols + j]; }
    double row_sum(int i) const;
    double col_sum(int j) const;
};

// Minimum-cost coupling of (alpha, beta) under cost (rows x cols, row-major),
// solved with the transportation simplex. Intended for small instances
// (supports capped at kMaxSupport); the result is optimal at a basic vertex,
// accurate to ~1e-12 on well-scaled inputs. alpha and beta must each sum to
// 1 within 1e-9 and all cost entries must be finite.
TransportPlan exact_ot(std::span<const double> alpha, std::span<const double> beta, std::span<const double> cost);

// Entropic-regularized coupling via log-domain Sinkhorn iterations. Stops
// when the worst marginal violation drops to tol or after max_iters sweeps
// (reported through converged/marginal_residual, not thrown). value is
// <C, plan>, not the regularized objective.
TransportPlan sinkhorn(std::span<const double> alpha, std::span<const double> beta, std::span<const double> cost,
                       double epsilon, int max_iters, double tol);

// Exact optimum for a squared diagonal cost matrix with non-positive
// diagonal: sum_i min(alpha_i, beta_i) * diag_cost_i.
double diagonal_ot(std::span<const double> alpha, std::span<const double> beta, std::span<const double> diag_cost);

} // namespace gflowot::ot
