#include "ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace gflowot::ot {

namespace {

constexpr double kNormTol = 1e-9;
constexpr double kReducedCostTol = 1e-11;

void check_measures(std::span<const double> alpha, std::span<const double> beta, std::span<const double> cost,
                    const char* who) {
    if (alpha.empty() || beta.empty()) throw InvalidArgument(std::string(who) + ": empty measure");
    if (alpha.size() > kMaxSupport || beta.size() > kMaxSupport) {
        throw InvalidArgument(std::string(who) + ": support size exceeds the small-instance guard");
    }
    if (cost.size() != alpha.size() * beta.size()) throw InvalidArgument(std::string(who) + ": cost shape mismatch");
    double sa = 0.0, sb = 0.0;
    for (double x : alpha) {
        if (x < 0.0) throw InvalidArgument(std::string(who) + ": negative weight in alpha");
        sa += x;
    }
    for (double x : beta) {
        if (x < 0.0) throw InvalidArgument(std::string(who) + ": negative weight in beta");
        sb += x;
    }
    if (std::abs(sa - 1.0) > kNormTol || std::abs(sb - 1.0) > kNormTol) {
        throw InvalidArgument(std::string(who) + ": measures must be normalized");
    }
    for (double c : cost) {
        if (!std::isfinite(c)) throw InvalidArgument(std::string(who) + ": non-finite cost entry");
    }
}

} // namespace

double TransportPlan::row_sum(int i) const {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += at(i, j);
    return s;
}

double TransportPlan::col_sum(int j) const {
    double s = 0.0;
    for (int i = 0; i < rows; ++i) s += flow[static_cast<std::size_t>(i) * cols + j];
    return s;
}

// ---------------------------------------------------------------------------
// Transportation simplex. The basis is a spanning tree over rows+cols with
// rows+cols-1 basic cells; entering variables are picked Bland-style (first
// cell with reduced cost below -kReducedCostTol) which also breaks degenerate
// cycling in practice, and an iteration cap backs that up.

TransportPlan exact_ot(std::span<const double> alpha, std::span<const double> beta, std::span<const double> cost) {
    check_measures(alpha, beta, cost, "exact_ot");
    const int k = static_cast<int>(alpha.size());
    const int l = static_cast<int>(beta.size());

    TransportPlan plan;
    plan.rows = k;
    plan.cols = l;
    plan.flow.assign(static_cast<std::size_t>(k) * l, 0.0);

    std::vector<std::uint8_t> basic(static_cast<std::size_t>(k) * l, 0);
    auto cell = [l](int i, int j) { return static_cast<std::size_t>(i) * l + j; };

    // Northwest-corner start; the final cell absorbs any tiny supply/demand
    // mismatch from floating-point normalization.
    {
        std::vector<double> a(alpha.begin(), alpha.end());
        std::vector<double> b(beta.begin(), beta.end());
        int i = 0, j = 0;
        while (true) {
            const double f = std::max(0.0, std::min(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]));
            plan.flow[cell(i, j)] = f;
            basic[cell(i, j)] = 1;
            a[static_cast<std::size_t>(i)] -= f;
            b[static_cast<std::size_t>(j)] -= f;
            if (i == k - 1 && j == l - 1) break;
            if (i < k - 1 && (a[static_cast<std::size_t>(i)] <= b[static_cast<std::size_t>(j)] || j == l - 1)) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    // nodes: 0..k-1 rows, k..k+l-1 cols
    const int nodes = k + l;
    std::vector<double> u(static_cast<std::size_t>(k));
    std::vector<double> v(static_cast<std::size_t>(l));
    std::vector<int> parent(static_cast<std::size_t>(nodes));
    std::vector<int> order(static_cast<std::size_t>(nodes));
    std::vector<int> stack;

    const int max_pivots = 64 * k * l + 256;
    for (int pivot = 0;; ++pivot) {
        if (pivot >= max_pivots) throw NumericError("exact_ot: pivot limit reached (degenerate cycling?)");

        // duals over the basis tree, rooted at row 0 with u_0 = 0
        std::vector<std::uint8_t> seen(static_cast<std::size_t>(nodes), 0);
        stack.assign(1, 0);
        seen[0] = 1;
        u[0] = 0.0;
        while (!stack.empty()) {
            const int n = stack.back();
            stack.pop_back();
            if (n < k) {
                for (int j = 0; j < l; ++j) {
                    if (basic[cell(n, j)] && !seen[static_cast<std::size_t>(k + j)]) {
                        v[static_cast<std::size_t>(j)] = cost[cell(n, j)] - u[static_cast<std::size_t>(n)];
                        seen[static_cast<std::size_t>(k + j)] = 1;
                        stack.push_back(k + j);
                    }
                }
            } else {
                const int j = n - k;
                for (int i = 0; i < k; ++i) {
                    if (basic[cell(i, j)] && !seen[static_cast<std::size_t>(i)]) {
                        u[static_cast<std::size_t>(i)] = cost[cell(i, j)] - v[static_cast<std::size_t>(j)];
                        seen[static_cast<std::size_t>(i)] = 1;
                        stack.push_back(i);
                    }
                }
            }
        }

        for (std::uint8_t s : seen) {
            if (!s) throw NumericError("exact_ot: basis lost connectivity");
        }

        // entering cell: first one with clearly negative reduced cost
        int ei = -1, ej = -1;
        for (int i = 0; i < k && ei < 0; ++i) {
            for (int j = 0; j < l; ++j) {
                if (basic[cell(i, j)]) continue;
                const double rc = cost[cell(i, j)] - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
                if (rc < -kReducedCostTol) {
                    ei = i;
                    ej = j;
                    break;
                }
            }
        }
        if (ei < 0) break; // optimal

        // unique basis-tree path from row ei to col ej closes the cycle
        std::fill(parent.begin(), parent.end(), -2);
        stack.assign(1, ei);
        parent[static_cast<std::size_t>(ei)] = -1;
        while (!stack.empty()) {
            const int n = stack.back();
            stack.pop_back();
            if (n == k + ej) break;
            if (n < k) {
                for (int j = 0; j < l; ++j) {
                    if (basic[cell(n, j)] && parent[static_cast<std::size_t>(k + j)] == -2) {
                        parent[static_cast<std::size_t>(k + j)] = n;
                        stack.push_back(k + j);
                    }
                }
            } else {
                const int jj = n - k;
                for (int i = 0; i < k; ++i) {
                    if (basic[cell(i, jj)] && parent[static_cast<std::size_t>(i)] == -2) {
                        parent[static_cast<std::size_t>(i)] = n;
                        stack.push_back(i);
                    }
                }
            }
        }
        if (parent[static_cast<std::size_t>(k + ej)] == -2) {
            throw NumericError("exact_ot: basis lost connectivity");
        }

        // cycle cells alternate +/- starting with the entering cell at +
        std::vector<std::pair<int, int>> path; // (i, j) cells along the tree path
        {
            int n = k + ej;
            while (n != -1) {
                const int p = parent[static_cast<std::size_t>(n)];
                if (p >= 0) {
                    const int i = n < k ? n : p;
                    const int j = n < k ? p - k : n - k;
                    path.emplace_back(i, j);
                }
                n = p;
            }
        }
        // path runs col ej -> ... -> row ei; orient it from the entering cell
        std::reverse(path.begin(), path.end());
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (std::size_t t = 0; t < path.size(); ++t) {
            if (t % 2 == 0) { // minus cells
                const double f = plan.flow[cell(path[t].first, path[t].second)];
                if (f < theta) {
                    theta = f;
                    leave = static_cast<int>(t);
                }
            }
        }
        if (leave < 0) throw NumericError("exact_ot: no leaving variable");

        plan.flow[cell(ei, ej)] += theta;
        basic[cell(ei, ej)] = 1;
        for (std::size_t t = 0; t < path.size(); ++t) {
            double& f = plan.flow[cell(path[t].first, path[t].second)];
            f += (t % 2 == 0) ? -theta : theta;
        }
        const auto [li, lj] = path[static_cast<std::size_t>(leave)];
        plan.flow[cell(li, lj)] = 0.0;
        basic[cell(li, lj)] = 0;
        plan.iterations = pivot + 1;
    }

    double value = 0.0;
    for (std::size_t t = 0; t < plan.flow.size(); ++t) value += plan.flow[t] * cost[t];
    plan.value = value;
    double res = 0.0;
    for (int i = 0; i < k; ++i) res = std::max(res, std::abs(plan.row_sum(i) - alpha[static_cast<std::size_t>(i)]));
    for (int j = 0; j < l; ++j) res = std::max(res, std::abs(plan.col_sum(j) - beta[static_cast<std::size_t>(j)]));
    plan.marginal_residual = res;
    plan.converged = true;
    return plan;
}

// ---------------------------------------------------------------------------
// Log-domain Sinkhorn: pi = diag(e^{f/eps}) K diag(e^{g/eps}), K = e^{-C/eps}.

TransportPlan sinkhorn(std::span<const double> alpha, std::span<const double> beta, std::span<const double> cost,
                       double epsilon, int max_iters, double tol) {
    check_measures(alpha, beta, cost, "sinkhorn");
    if (!(epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
    if (max_iters < 1) throw InvalidArgument("sinkhorn: max_iters must be positive");
    const int k = static_cast<int>(alpha.size());
    const int l = static_cast<int>(beta.size());
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    std::vector<double> log_a(static_cast<std::size_t>(k));
    std::vector<double> log_b(static_cast<std::size_t>(l));
    for (int i = 0; i < k; ++i) log_a[static_cast<std::size_t>(i)] = alpha[static_cast<std::size_t>(i)] > 0.0 ? std::log(alpha[static_cast<std::size_t>(i)]) : kNegInf;
    for (int j = 0; j < l; ++j) log_b[static_cast<std::size_t>(j)] = beta[static_cast<std::size_t>(j)] > 0.0 ? std::log(beta[static_cast<std::size_t>(j)]) : kNegInf;

    std::vector<double> f(static_cast<std::size_t>(k), 0.0);
    std::vector<double> g(static_cast<std::size_t>(l), 0.0);

    auto lse_row = [&](int i) {
        double mx = kNegInf;
        for (int j = 0; j < l; ++j) {
            const double t = (g[static_cast<std::size_t>(j)] - cost[static_cast<std::size_t>(i) * l + j]) / epsilon;
            if (t > mx) mx = t;
        }
        if (mx == kNegInf) return kNegInf;
        double s = 0.0;
        for (int j = 0; j < l; ++j) {
            s += std::exp((g[static_cast<std::size_t>(j)] - cost[static_cast<std::size_t>(i) * l + j]) / epsilon - mx);
        }
        return mx + std::log(s);
    };
    auto lse_col = [&](int j) {
        double mx = kNegInf;
        for (int i = 0; i < k; ++i) {
            const double t = (f[static_cast<std::size_t>(i)] - cost[static_cast<std::size_t>(i) * l + j]) / epsilon;
            if (t > mx) mx = t;
        }
        if (mx == kNegInf) return kNegInf;
        double s = 0.0;
        for (int i = 0; i < k; ++i) {
            s += std::exp((f[static_cast<std::size_t>(i)] - cost[static_cast<std::size_t>(i) * l + j]) / epsilon - mx);
        }
        return mx + std::log(s);
    };

    TransportPlan plan;
    plan.rows = k;
    plan.cols = l;
    plan.flow.assign(static_cast<std::size_t>(k) * l, 0.0);

    auto fill_plan = [&]() {
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < l; ++j) {
                const double e =
                    f[static_cast<std::size_t>(i)] + g[static_cast<std::size_t>(j)] - cost[static_cast<std::size_t>(i) * l + j];
                const double val = (f[static_cast<std::size_t>(i)] == kNegInf || g[static_cast<std::size_t>(j)] == kNegInf)
                                       ? 0.0
                                       : std::exp(e / epsilon);
                plan.flow[static_cast<std::size_t>(i) * l + j] = val;
            }
        }
    };

    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < max_iters; ++it) {
        for (int i = 0; i < k; ++i) {
            f[static_cast<std::size_t>(i)] = log_a[static_cast<std::size_t>(i)] == kNegInf
                                                 ? kNegInf
                                                 : epsilon * (log_a[static_cast<std::size_t>(i)] - lse_row(i));
        }
        for (int j = 0; j < l; ++j) {
            g[static_cast<std::size_t>(j)] = log_b[static_cast<std::size_t>(j)] == kNegInf
                                                 ? kNegInf
                                                 : epsilon * (log_b[static_cast<std::size_t>(j)] - lse_col(j));
        }
        // after the g sweep columns match exactly; measure the row violation
        fill_plan();
        residual = 0.0;
        for (int i = 0; i < k; ++i) residual = std::max(residual, std::abs(plan.row_sum(i) - alpha[static_cast<std::size_t>(i)]));
        for (int j = 0; j < l; ++j) residual = std::max(residual, std::abs(plan.col_sum(j) - beta[static_cast<std::size_t>(j)]));
        if (residual <= tol) {
            ++it;
            break;
        }
    }
    plan.iterations = it;
    plan.marginal_residual = residual;
    plan.converged = residual <= tol;
    double value = 0.0;
    for (std::size_t t = 0; t < plan.flow.size(); ++t) value += plan.flow[t] * cost[t];
    plan.value = value;
    return plan;
}

double diagonal_ot(std::span<const double> alpha, std::span<const double> beta, std::span<const double> diag_cost) {
    if (alpha.size() != beta.size() || alpha.size() != diag_cost.size()) {
        throw InvalidArgument("diagonal_ot: support sizes must match");
    }
    if (alpha.empty()) throw InvalidArgument("diagonal_ot: empty measure");
    for (double c : diag_cost) {
        if (!(c <= 0.0)) throw InvalidArgument("diagonal_ot: diagonal costs must be non-positive");
    }
    double v = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (alpha[i] < 0.0 || beta[i] < 0.0) throw InvalidArgument("diagonal_ot: negative weight");
        v += std::min(alpha[i], beta[i]) * diag_cost[i];
    }
    return v;
}

} // namespace gflowot::ot
