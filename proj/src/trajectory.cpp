#include "trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace gflowot {

namespace {

// Draw an action index from the exploration mixture over valid lanes.
int draw_action(std::span<const double> log_pf, std::span<const std::uint8_t> mask, double alpha, Rng& rng) {
    int n_valid = 0;
    for (std::uint8_t m : mask) n_valid += m;
    const double r = rng.uniform01();
    double cum = 0.0;
    int last_valid = -1;
    for (std::size_t a = 0; a < mask.size(); ++a) {
        if (!mask[a]) continue;
        last_valid = static_cast<int>(a);
        const double p = (1.0 - alpha) * std::exp(log_pf[a]) + alpha / static_cast<double>(n_valid);
        cum += p;
        if (r < cum) return static_cast<int>(a);
    }
    return last_valid; // cum may fall a few ulps short of 1
}

double clamp_log(double x) { return x >= kLogFloor ? x : kLogFloor; }

} // namespace

TrajectorySample sample_trajectory(const PolicyModel& model, const Environment& env, double explore_alpha, Rng& rng) {
    if (explore_alpha < 0.0 || explore_alpha > 1.0) {
        throw InvalidArgument("sample_trajectory: explore_alpha must lie in [0, 1]");
    }
    TrajectorySample out;
    State s = env.initial_state();
    while (true) {
        std::vector<double> lf, lb;
        std::vector<State> one{s};
        model.eval_log_probs(env, one, lf, lb);
        const auto mask = env.valid_actions(s);
        const int a = draw_action(lf, mask, explore_alpha, rng);
        const State next = env.step(s, a);
        TrajectoryStep step;
        step.state = s;
        step.action = a;
        step.log_pf = clamp_log(lf[static_cast<std::size_t>(a)]);
        if (next.kind == StateKind::Flagged) {
            step.log_pb = 0.0;
        } else {
            std::vector<double> lf2, lb2;
            std::vector<State> one2{next};
            model.eval_log_probs(env, one2, lf2, lb2);
            step.log_pb = clamp_log(lb2[static_cast<std::size_t>(a)]);
        }
        out.steps.push_back(std::move(step));
        if (next.kind == StateKind::Flagged) {
            out.terminal = next;
            break;
        }
        s = next;
    }
    out.reward = env.reward(out.terminal);
    double lp = 0.0;
    for (const auto& st : out.steps) lp += st.log_pf;
    out.log_ptau = lp;
    return out;
}

std::vector<TrajectorySample> sample_trajectories(const PolicyModel& model, const Environment& env, double explore_alpha,
                                                  int count, Rng& rng) {
    if (explore_alpha < 0.0 || explore_alpha > 1.0) {
        throw InvalidArgument("sample_trajectories: explore_alpha must lie in [0, 1]");
    }
    if (count < 0) throw InvalidArgument("sample_trajectories: negative count");
    std::vector<TrajectorySample> out(static_cast<std::size_t>(count));
    std::vector<int> active(static_cast<std::size_t>(count));
    std::vector<State> cur(static_cast<std::size_t>(count), env.initial_state());
    for (int i = 0; i < count; ++i) active[static_cast<std::size_t>(i)] = i;
    const std::size_t a_count = static_cast<std::size_t>(env.action_count());

    std::vector<State> batch;
    std::vector<double> lf, lb;
    std::vector<double> lb_next, lf_next;
    while (!active.empty()) {
        batch.clear();
        for (int idx : active) batch.push_back(cur[static_cast<std::size_t>(idx)]);
        model.eval_log_probs(env, batch, lf, lb);

        // choose actions and step; collect the non-flagged successors to
        // batch their backward-policy rows as well
        std::vector<int> chosen(active.size());
        std::vector<State> next(active.size());
        batch.clear();
        std::vector<std::size_t> need_pb;
        for (std::size_t t = 0; t < active.size(); ++t) {
            const State& s = cur[static_cast<std::size_t>(active[t])];
            const auto mask = env.valid_actions(s);
            const int a = draw_action({lf.data() + t * a_count, a_count}, mask, explore_alpha, rng);
            chosen[t] = a;
            next[t] = env.step(s, a);
            if (next[t].kind != StateKind::Flagged) {
                need_pb.push_back(t);
                batch.push_back(next[t]);
            }
        }
        if (!batch.empty()) model.eval_log_probs(env, batch, lf_next, lb_next);

        std::vector<int> still_active;
        std::size_t pb_row = 0;
        for (std::size_t t = 0; t < active.size(); ++t) {
            const int idx = active[t];
            TrajectorySample& sample = out[static_cast<std::size_t>(idx)];
            TrajectoryStep step;
            step.state = cur[static_cast<std::size_t>(idx)];
            step.action = chosen[t];
            step.log_pf = clamp_log(lf[t * a_count + static_cast<std::size_t>(chosen[t])]);
            if (next[t].kind == StateKind::Flagged) {
                step.log_pb = 0.0;
            } else {
                step.log_pb = clamp_log(lb_next[pb_row * a_count + static_cast<std::size_t>(chosen[t])]);
                ++pb_row;
            }
            sample.steps.push_back(std::move(step));
            if (next[t].kind == StateKind::Flagged) {
                sample.terminal = next[t];
                sample.reward = env.reward(sample.terminal);
                double lp = 0.0;
                for (const auto& st : sample.steps) lp += st.log_pf;
                sample.log_ptau = lp;
            } else {
                cur[static_cast<std::size_t>(idx)] = next[t];
                still_active.push_back(idx);
            }
        }
        active = std::move(still_active);
    }
    return out;
}

ad::Var tb_loss(PolicyTape& tape, const TrajectorySample& sample) {
    if (sample.steps.empty()) throw InvalidArgument("tb_loss: empty trajectory");
    if (!(sample.reward > 0.0)) throw InvalidArgument("tb_loss: reward must be positive");
    ad::Graph& g = tape.graph();
    std::vector<ad::Var> terms;
    terms.reserve(2 * sample.steps.size() + 2);
    terms.push_back(tape.log_z());
    for (std::size_t t = 0; t < sample.steps.size(); ++t) {
        const TrajectoryStep& step = sample.steps[t];
        terms.push_back(tape.log_forward(step.state, step.action));
        const State& target = sample.edge_target(t);
        if (target.kind != StateKind::Flagged) {
            terms.push_back(g.neg(tape.log_backward(target, step.action)));
        }
        // flagged targets contribute log P_B = 0
    }
    terms.push_back(g.constant(-std::log(sample.reward)));
    return g.square(g.addn(terms));
}

double tb_loss_value_from_stored(const PolicyModel& model, const TrajectorySample& sample) {
    if (!(sample.reward > 0.0)) throw InvalidArgument("tb_loss_value_from_stored: reward must be positive");
    double acc = model.log_total_flow() - std::log(sample.reward);
    for (const auto& step : sample.steps) acc += step.log_pf - step.log_pb;
    return acc * acc;
}

} // namespace gflowot
