#include "evaluator.hpp"

#include <algorithm>
#include <cmath>

namespace gflowot {

namespace {
constexpr std::uint64_t kDpGuard = 1'000'000;
constexpr std::size_t kChunk = 4096;
} // namespace

std::vector<double> exact_terminal_distribution(const PolicyModel& model, const HypergridEnv& env) {
    const std::uint64_t n = env.grid_state_count();
    if (n > kDpGuard) throw InvalidArgument("exact_terminal_distribution: grid too large for exact DP");

    const int dims = env.dims();
    const int stop = env.action_count() - 1;
    const std::size_t a_count = static_cast<std::size_t>(env.action_count());

    // forward probabilities of every grid state, chunked batch evaluation
    std::vector<double> pf(static_cast<std::size_t>(n) * a_count);
    {
        std::vector<State> states;
        std::vector<double> lf, lb;
        for (std::uint64_t base = 0; base < n; base += kChunk) {
            const std::uint64_t hi = std::min<std::uint64_t>(n, base + kChunk);
            states.clear();
            for (std::uint64_t i = base; i < hi; ++i) states.push_back(env.grid_state(i));
            model.eval_log_probs(env, states, lf, lb);
            for (std::uint64_t i = base; i < hi; ++i) {
                for (std::size_t a = 0; a < a_count; ++a) {
                    const double lp = lf[(i - base) * a_count + a];
                    pf[static_cast<std::size_t>(i) * a_count + a] = std::isfinite(lp) ? std::exp(lp) : 0.0;
                }
            }
        }
    }

    // states ordered by coordinate sum so parents always precede children
    std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
    {
        std::vector<int> sums(static_cast<std::size_t>(n));
        for (std::uint64_t i = 0; i < n; ++i) {
            const State s = env.grid_state(i);
            int c = 0;
            for (int x : s.coords) c += x;
            sums[static_cast<std::size_t>(i)] = c;
            order[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return sums[a] < sums[b]; });
    }

    std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
    std::vector<double> p_terminal(static_cast<std::size_t>(n), 0.0);
    rho[env.index_of(env.initial_state().coords)] = 1.0;
    std::vector<int> coords(static_cast<std::size_t>(dims));
    for (std::uint32_t oi : order) {
        const State s = env.grid_state(oi);
        const double r = rho[oi];
        p_terminal[oi] = r * pf[static_cast<std::size_t>(oi) * a_count + static_cast<std::size_t>(stop)];
        if (r == 0.0) continue;
        for (int d = 0; d < dims; ++d) {
            if (s.coords[static_cast<std::size_t>(d)] <= env.side() - 2) {
                coords = s.coords;
                coords[static_cast<std::size_t>(d)] += 1;
                rho[env.index_of(coords)] += r * pf[static_cast<std::size_t>(oi) * a_count + static_cast<std::size_t>(d)];
            }
        }
    }
    return p_terminal;
}

double kl_divergence(std::span<const double> p_hat, std::span<const double> p_true) {
    if (p_hat.size() != p_true.size()) throw InvalidArgument("kl_divergence: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p_hat.size(); ++i) {
        if (p_hat[i] > 0.0) {
            if (!(p_true[i] > 0.0)) throw InvalidArgument("kl_divergence: reference lacks support where p_hat > 0");
            kl += p_hat[i] * std::log(p_hat[i] / p_true[i]);
        }
    }
    return kl;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidArgument("total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

VisitTracker::VisitTracker(const HypergridEnv& env, std::size_t capacity) : env_(env), capacity_(capacity) {
    if (capacity_ == 0) throw InvalidArgument("VisitTracker: capacity must be positive");
    counts_.assign(static_cast<std::size_t>(env.grid_state_count()), 0);
    mode_index_of_.assign(static_cast<std::size_t>(env.grid_state_count()), -1);
    const auto modes = env.mode_indices();
    mode_seen_.assign(modes.size(), 0);
    for (std::size_t m = 0; m < modes.size(); ++m) mode_index_of_[modes[m]] = static_cast<std::int64_t>(m);
    ring_.reserve(std::min<std::size_t>(capacity_, 1 << 20));
}

void VisitTracker::record(const State& terminal) {
    if (terminal.kind != StateKind::Flagged) throw InvalidArgument("VisitTracker::record: expected a terminal state");
    const std::uint32_t idx = static_cast<std::uint32_t>(env_.index_of(terminal.coords));
    if (ring_.size() < capacity_) {
        ring_.push_back(idx);
    } else {
        counts_[ring_[next_]] -= 1;
        ring_[next_] = idx;
        next_ = (next_ + 1) % capacity_;
    }
    counts_[idx] += 1;
    ++total_;
    const std::int64_t m = mode_index_of_[idx];
    if (m >= 0 && !mode_seen_[static_cast<std::size_t>(m)]) {
        mode_seen_[static_cast<std::size_t>(m)] = 1;
        ++modes_found_;
        if (modes_found_ == mode_count()) trajectories_to_all_modes_ = total_;
    }
}

double VisitTracker::kl_to(std::span<const double> true_dist) const {
    if (ring_.empty()) throw InvalidArgument("VisitTracker::kl_to: empty buffer");
    if (true_dist.size() != counts_.size()) throw InvalidArgument("VisitTracker::kl_to: size mismatch");
    const double n = static_cast<double>(ring_.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        if (counts_[i] > 0) {
            const double p = static_cast<double>(counts_[i]) / n;
            kl += p * std::log(p / true_dist[i]);
        }
    }
    return kl;
}

} // namespace gflowot
