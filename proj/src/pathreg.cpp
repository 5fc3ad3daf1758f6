#include "pathreg.hpp"

#include <algorithm>
#include <cmath>

namespace gflowot {

void RegularizerConfig::validate() const {
    if (lambda < 0.0) throw InvalidArgument("RegularizerConfig: lambda must be non-negative");
    if (!(dropout_p > 0.0) || dropout_p > 1.0) throw InvalidArgument("RegularizerConfig: dropout_p must lie in (0, 1]");
    if (!(sinkhorn_epsilon > 0.0)) throw InvalidArgument("RegularizerConfig: sinkhorn_epsilon must be positive");
    if (sinkhorn_max_iters < 1) throw InvalidArgument("RegularizerConfig: sinkhorn_max_iters must be positive");
    if (!(sinkhorn_tol > 0.0)) throw InvalidArgument("RegularizerConfig: sinkhorn_tol must be positive");
}

AlignedNeighborhood align_neighborhood(const Environment& env, const State& s, const State& sp) {
    if (!env.closed_form_eligible()) {
        throw InvalidArgument("align_neighborhood: environment does not admit the closed form");
    }
    AlignedNeighborhood n;
    n.s = s;
    n.sp = sp;
    const auto star = connecting_action(env, s, sp);
    if (!star) throw InvalidArgument("align_neighborhood: sp is not a child of s");
    n.star_action = *star;
    n.children_s = children(env, s);
    n.children_sp = children(env, sp);
    for (std::size_t i = 0; i < n.children_s.size(); ++i) {
        if (n.children_s[i].first == sp) n.sp_index = static_cast<int>(i);
    }

    // first eligibility consequence: the two child sets are disjoint
    for (const auto& [u, ua] : n.children_s) {
        for (const auto& [v, va] : n.children_sp) {
            if (u == v) throw InvalidArgument("align_neighborhood: child sets intersect; closed form does not apply");
        }
    }

    const int stop = env.action_count() - 1;
    if (s.kind != StateKind::Grid) throw InvalidArgument("align_neighborhood: s must be a grid state");
    if (sp.kind == StateKind::Grid) {
        const auto mask_s = env.valid_actions(s);
        const auto mask_sp = env.valid_actions(sp);
        for (int a = 0; a < stop; ++a) {
            if (!mask_s[static_cast<std::size_t>(a)] || !mask_sp[static_cast<std::size_t>(a)]) continue;
            State u = env.step(s, a);
            State v = env.step(sp, a);
            if (!(u == sp)) {
                // second consequence: the star action commutes, u + a* = v
                const auto mask_u = env.valid_actions(u);
                if (!mask_u[static_cast<std::size_t>(n.star_action)] || !(env.step(u, n.star_action) == v)) {
                    throw InvalidArgument("align_neighborhood: aligned-child structure violated");
                }
            }
            n.aligned_actions.push_back(a);
            n.u.push_back(std::move(u));
            n.v.push_back(std::move(v));
        }
    }
    // flagged sp: only child is s_f, no aligned non-stop actions
    return n;
}

std::vector<ad::Var> pseudo_backward(PolicyTape& tape, const State& s) {
    std::vector<ad::Var> out;
    for (const auto& [child, action] : children(tape.env(), s)) {
        out.push_back(tape.log_backward(child, action));
    }
    for (auto& v : out) v = tape.graph().exp(v);
    return out;
}

namespace {

// Tape node for one Eq.-8 cost entry.
ad::Var cost_entry(PolicyTape& tape, const State& s, const State& sp, int star_action, const State& u, int action_u,
                   const State& v, int action_v) {
    ad::Graph& g = tape.graph();
    if (u == v) return g.constant(0.0);
    const ad::Var back_and_forth = g.neg(g.addn(std::vector<ad::Var>{
        tape.log_backward(u, action_u),
        tape.log_forward(s, star_action),
        tape.log_forward(sp, action_v),
    }));
    const auto direct = connecting_action(tape.env(), u, v);
    if (direct) {
        // ties select the back-and-forth branch
        return g.min2(back_and_forth, g.neg(tape.log_forward(u, *direct)));
    }
    return back_and_forth;
}

ad::Var entropy_of_forward(PolicyTape& tape, const State& s) {
    ad::Graph& g = tape.graph();
    if (s.kind == StateKind::Flagged) return g.constant(0.0); // point mass on s_f
    std::vector<ad::Var> terms;
    for (const auto& [child, action] : children(tape.env(), s)) {
        ad::Var lp = tape.log_forward(s, action);
        terms.push_back(g.mul(g.exp(lp), lp));
    }
    return g.neg(g.addn(terms));
}

ad::Var cross_entropy_forward_pseudo(PolicyTape& tape, const State& s) {
    ad::Graph& g = tape.graph();
    std::vector<ad::Var> terms;
    for (const auto& [child, action] : children(tape.env(), s)) {
        ad::Var pf = g.exp(tape.log_forward(s, action));
        ad::Var lpb = tape.log_backward(child, action); // log P*_B(u|s) = log P_B(s|u)
        terms.push_back(g.mul(pf, lpb));
    }
    return g.neg(g.addn(terms));
}

ad::Var envelope_ot(PolicyTape& tape, const RegularizerConfig& cfg, const State& s, const State& sp, bool exact) {
    ad::Graph& g = tape.graph();
    EdgeCostMatrix c = cost_matrix(tape, s, sp);
    std::vector<double> alpha, beta;
    alpha.reserve(c.row_children.size());
    beta.reserve(c.col_children.size());
    for (const auto& [child, action] : c.row_children) alpha.push_back(std::exp(tape.log_forward_value(s, action)));
    for (const auto& [child, action] : c.col_children) beta.push_back(std::exp(tape.log_forward_value(sp, action)));
    const ot::TransportPlan plan =
        exact ? ot::exact_ot(alpha, beta, c.values)
              : ot::sinkhorn(alpha, beta, c.values, cfg.sinkhorn_epsilon, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol);
    // plan held constant; gradient flows through the cost entries only
    std::vector<ad::Var> terms;
    for (int i = 0; i < c.rows; ++i) {
        for (int j = 0; j < c.cols; ++j) {
            const double w = plan.at(i, j);
            if (w != 0.0) {
                terms.push_back(g.scale(c.entries[static_cast<std::size_t>(i) * c.cols + j], w));
            }
        }
    }
    if (terms.empty()) return g.constant(0.0);
    return g.addn(terms);
}

} // namespace

EdgeCostMatrix cost_matrix(PolicyTape& tape, const State& s, const State& sp) {
    const Environment& env = tape.env();
    if (s.kind == StateKind::Final || sp.kind == StateKind::Final) {
        throw InvalidArgument("cost_matrix: endpoints must precede s_f");
    }
    const auto star = connecting_action(env, s, sp);
    if (!star) throw InvalidArgument("cost_matrix: sp is not a child of s");
    EdgeCostMatrix c;
    c.row_children = children(env, s);
    c.col_children = children(env, sp);
    c.rows = static_cast<int>(c.row_children.size());
    c.cols = static_cast<int>(c.col_children.size());
    c.entries.reserve(static_cast<std::size_t>(c.rows) * c.cols);
    c.values.reserve(static_cast<std::size_t>(c.rows) * c.cols);
    for (const auto& [u, au] : c.row_children) {
        for (const auto& [v, av] : c.col_children) {
            ad::Var e = cost_entry(tape, s, sp, *star, u, au, v, av);
            c.values.push_back(tape.graph().value(e));
            c.entries.push_back(e);
        }
    }
    return c;
}

ad::Var closed_form_ot(PolicyTape& tape, const AlignedNeighborhood& n) {
    ad::Graph& g = tape.graph();
    std::vector<ad::Var> terms;
    terms.push_back(cross_entropy_forward_pseudo(tape, n.s));
    const ad::Var lf_star = tape.log_forward(n.s, n.star_action);
    terms.push_back(g.neg(lf_star));
    terms.push_back(entropy_of_forward(tape, n.sp));
    const ad::Var lb_star = tape.log_backward(n.sp, n.star_action); // log P_B(s|s')
    terms.push_back(g.mul(g.exp(lf_star), g.add(lb_star, lf_star)));
    const ad::Var zero = g.constant(0.0);
    for (std::size_t i = 0; i < n.aligned_actions.size(); ++i) {
        const int a = n.aligned_actions[i];
        if (n.u[i] == n.sp) continue; // c' vanishes on the star action
        const ad::Var cprime = g.min2(zero, g.addn(std::vector<ad::Var>{
                                                tape.log_backward(n.u[i], a),
                                                lf_star,
                                                tape.log_forward(n.sp, a),
                                                g.neg(tape.log_forward(n.u[i], n.star_action)),
                                            }));
        const ad::Var mass = g.min2(g.exp(tape.log_forward(n.s, a)), g.exp(tape.log_forward(n.sp, a)));
        terms.push_back(g.mul(mass, cprime));
    }
    return g.addn(terms);
}

ad::Var upper_bound_edge(PolicyTape& tape, const State& s, const State& sp) {
    ad::Graph& g = tape.graph();
    const auto star = connecting_action(tape.env(), s, sp);
    if (!star) throw InvalidArgument("upper_bound_edge: sp is not a child of s");
    return g.addn(std::vector<ad::Var>{
        cross_entropy_forward_pseudo(tape, s),
        g.neg(tape.log_forward(s, *star)),
        entropy_of_forward(tape, sp),
    });
}

ad::Var edge_ot(PolicyTape& tape, const RegularizerConfig& cfg, const State& s, const State& sp) {
    switch (cfg.method) {
    case OtMethod::Closed:
        return closed_form_ot(tape, align_neighborhood(tape.env(), s, sp));
    case OtMethod::Exact:
        return envelope_ot(tape, cfg, s, sp, /*exact=*/true);
    case OtMethod::Sinkhorn:
        return envelope_ot(tape, cfg, s, sp, /*exact=*/false);
    }
    throw InvalidArgument("edge_ot: unknown method");
}

ad::Var path_reg_loss(PolicyTape& tape, const RegularizerConfig& cfg, const TrajectorySample& sample, Rng* dropout_rng) {
    cfg.validate();
    ad::Graph& g = tape.graph();
    if (cfg.mode == RegMode::None) return g.constant(0.0);
    if (cfg.dropout_p < 1.0 && dropout_rng == nullptr) {
        throw InvalidArgument("path_reg_loss: dropout requires an RNG");
    }
    std::vector<ad::Var> terms;
    for (std::size_t t = 0; t < sample.edge_count(); ++t) {
        const State& from = sample.steps[t].state;
        const State& to = sample.edge_target(t);
        if (to.kind == StateKind::Final) continue; // no forward policy at s_f
        if (cfg.dropout_p < 1.0 && !dropout_rng->bernoulli(cfg.dropout_p)) continue;
        ad::Var e = cfg.mode == RegMode::UbOt ? upper_bound_edge(tape, from, to) : edge_ot(tape, cfg, from, to);
        terms.push_back(e);
    }
    if (terms.empty()) return g.constant(0.0);
    ad::Var sum = g.addn(terms);
    if (cfg.dropout_p < 1.0) sum = g.scale(sum, 1.0 / cfg.dropout_p);
    return sum;
}

CombinedLoss combined_loss(PolicyTape& tape, const RegularizerConfig& cfg, const TrajectorySample& sample,
                           Rng* dropout_rng) {
    cfg.validate();
    ad::Graph& g = tape.graph();
    CombinedLoss out;
    out.tb = tb_loss(tape, sample);
    if (cfg.mode == RegMode::None || cfg.lambda == 0.0) {
        out.total = out.tb;
        return out;
    }
    out.reg = path_reg_loss(tape, cfg, sample, dropout_rng);
    const double sign = cfg.mode == RegMode::MaxOt ? -cfg.lambda : cfg.lambda;
    out.total = g.add(out.tb, g.scale(out.reg, sign));
    return out;
}

} // namespace gflowot
