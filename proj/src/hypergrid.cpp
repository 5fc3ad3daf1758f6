#include "hypergrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace gflowot {

namespace {
constexpr std::uint64_t kEnumerationGuard = 10'000'000;

// Indicator arguments in exact integer arithmetic: with m = |2*s_d - (H-1)|,
//   |s_d/(H-1) - 0.5| in (0.25, 0.5]  <=>  2m > H-1            (m <= H-1 always)
//   |s_d/(H-1) - 0.5| in (0.3, 0.4)   <=>  5m > 3(H-1) and 5m < 4(H-1)
bool in_outer_band(int coord, int side) {
    const int m = std::abs(2 * coord - (side - 1));
    return 2 * m > side - 1;
}
bool in_mode_band(int coord, int side) {
    const int m = std::abs(2 * coord - (side - 1));
    return 5 * m > 3 * (side - 1) && 5 * m < 4 * (side - 1);
}
} // namespace

std::vector<std::pair<State, int>> children(const Environment& env, const State& s) {
    std::vector<std::pair<State, int>> out;
    const int stop = env.action_count() - 1;
    switch (s.kind) {
    case StateKind::Grid: {
        const auto mask = env.valid_actions(s);
        for (int a = 0; a < env.action_count(); ++a) {
            if (mask[static_cast<std::size_t>(a)]) out.emplace_back(env.step(s, a), a);
        }
        break;
    }
    case StateKind::Flagged:
        out.emplace_back(make_final(), stop);
        break;
    case StateKind::Final:
        break;
    }
    return out;
}

std::optional<int> connecting_action(const Environment& env, const State& from, const State& to) {
    for (const auto& [child, action] : children(env, from)) {
        if (child == to) return action;
    }
    return std::nullopt;
}

HypergridEnv::HypergridEnv(HypergridSpec spec) : spec_(spec) {
    if (spec_.dims < 1) throw InvalidArgument("HypergridEnv: dims must be >= 1");
    if (spec_.side < 2) throw InvalidArgument("HypergridEnv: side must be >= 2");
    if (!(spec_.r0 > 0.0)) throw InvalidArgument("HypergridEnv: r0 must be positive");
    grid_count_ = 1;
    for (int d = 0; d < spec_.dims; ++d) {
        grid_count_ *= static_cast<std::uint64_t>(spec_.side);
        if (grid_count_ > kEnumerationGuard * 16) break; // avoid overflow; enumeration ops re-check
    }
}

void HypergridEnv::require_grid(const State& s, const char* who) const {
    if (s.kind != StateKind::Grid || static_cast<int>(s.coords.size()) != spec_.dims) {
        throw InvalidArgument(std::string(who) + ": expected a grid state of matching dimension");
    }
    for (int c : s.coords) {
        if (c < 0 || c >= spec_.side) throw InvalidArgument(std::string(who) + ": coordinate out of range");
    }
}

State HypergridEnv::initial_state() const {
    State s;
    s.coords.assign(static_cast<std::size_t>(spec_.dims), 0);
    return s;
}

std::vector<std::uint8_t> HypergridEnv::valid_actions(const State& s) const {
    require_grid(s, "HypergridEnv::valid_actions");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec_.dims) + 1, 0);
    for (int d = 0; d < spec_.dims; ++d) mask[static_cast<std::size_t>(d)] = s.coords[static_cast<std::size_t>(d)] <= spec_.side - 2;
    mask[static_cast<std::size_t>(spec_.dims)] = 1; // stop is always available
    return mask;
}

State HypergridEnv::step(const State& s, int action) const {
    if (s.kind == StateKind::Flagged) {
        if (action != spec_.dims) throw InvalidArgument("HypergridEnv::step: flagged states only transition to s_f");
        return make_final();
    }
    require_grid(s, "HypergridEnv::step");
    if (action < 0 || action > spec_.dims) throw InvalidArgument("HypergridEnv::step: unknown action");
    State out = s;
    if (action == spec_.dims) {
        out.kind = StateKind::Flagged;
        return out;
    }
    if (s.coords[static_cast<std::size_t>(action)] > spec_.side - 2) {
        throw InvalidArgument("HypergridEnv::step: increment action invalid at boundary");
    }
    out.coords[static_cast<std::size_t>(action)] += 1;
    return out;
}

std::vector<std::pair<State, int>> HypergridEnv::parents(const State& s) const {
    std::vector<std::pair<State, int>> out;
    if (s.kind == StateKind::Final) throw InvalidArgument("HypergridEnv::parents: s_f parents are not enumerated");
    if (s.kind == StateKind::Flagged) {
        State parent = s;
        parent.kind = StateKind::Grid;
        out.emplace_back(std::move(parent), spec_.dims);
        return out;
    }
    require_grid(s, "HypergridEnv::parents");
    bool any = false;
    for (int c : s.coords) any = any || c > 0;
    if (!any) throw InvalidArgument("HypergridEnv::parents: the initial state has no parents");
    for (int d = 0; d < spec_.dims; ++d) {
        if (s.coords[static_cast<std::size_t>(d)] > 0) {
            State parent = s;
            parent.coords[static_cast<std::size_t>(d)] -= 1;
            out.emplace_back(std::move(parent), d);
        }
    }
    return out;
}

double HypergridEnv::reward(const State& terminal) const {
    if (terminal.kind != StateKind::Flagged) {
        throw InvalidArgument("HypergridEnv::reward: reward is defined on terminal (flagged) states");
    }
    double outer = 1.0, mode = 1.0;
    for (int d = 0; d < spec_.dims; ++d) {
        const int c = terminal.coords[static_cast<std::size_t>(d)];
        if (!in_outer_band(c, spec_.side)) outer = 0.0;
        if (!in_mode_band(c, spec_.side)) mode = 0.0;
    }
    return spec_.r0 + 0.5 * outer + 2.0 * mode;
}

std::uint64_t HypergridEnv::state_key(const State& s) const {
    if (s.kind == StateKind::Final) return 2 * grid_count_;
    std::uint64_t idx = index_of(s.coords);
    return s.kind == StateKind::Flagged ? grid_count_ + idx : idx;
}

void HypergridEnv::encode(const State& s, std::span<double> out) const {
    require_grid(s, "HypergridEnv::encode");
    if (out.size() != static_cast<std::size_t>(encoding_dim())) {
        throw InvalidArgument("HypergridEnv::encode: output span has wrong size");
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (int d = 0; d < spec_.dims; ++d) {
        out[static_cast<std::size_t>(d) * spec_.side + s.coords[static_cast<std::size_t>(d)]] = 1.0;
    }
}

std::uint64_t HypergridEnv::index_of(std::span<const int> coords) const {
    if (coords.size() != static_cast<std::size_t>(spec_.dims)) {
        throw InvalidArgument("HypergridEnv::index_of: wrong coordinate count");
    }
    std::uint64_t idx = 0;
    for (int d = spec_.dims - 1; d >= 0; --d) {
        const int c = coords[static_cast<std::size_t>(d)];
        if (c < 0 || c >= spec_.side) throw InvalidArgument("HypergridEnv::index_of: coordinate out of range");
        idx = idx * static_cast<std::uint64_t>(spec_.side) + static_cast<std::uint64_t>(c);
    }
    return idx;
}

State HypergridEnv::grid_state(std::uint64_t index) const {
    if (index >= grid_count_) throw InvalidArgument("HypergridEnv::grid_state: index out of range");
    State s;
    s.coords.resize(static_cast<std::size_t>(spec_.dims));
    for (int d = 0; d < spec_.dims; ++d) {
        s.coords[static_cast<std::size_t>(d)] = static_cast<int>(index % static_cast<std::uint64_t>(spec_.side));
        index /= static_cast<std::uint64_t>(spec_.side);
    }
    return s;
}

std::vector<double> HypergridEnv::terminal_rewards() const {
    if (grid_state_count() > kEnumerationGuard) {
        throw InvalidArgument("HypergridEnv::terminal_rewards: grid too large to enumerate");
    }
    std::vector<double> r(grid_state_count());
    State s;
    s.kind = StateKind::Flagged;
    for (std::uint64_t i = 0; i < grid_state_count(); ++i) {
        State g = grid_state(i);
        s.coords = g.coords;
        r[i] = reward(s);
    }
    return r;
}

std::vector<double> HypergridEnv::true_distribution(double* z_out) const {
    std::vector<double> p = terminal_rewards();
    double z = 0.0;
    for (double x : p) z += x;
    for (double& x : p) x /= z;
    if (z_out) *z_out = z;
    return p;
}

bool HypergridEnv::is_mode(std::span<const int> coords) const {
    if (coords.size() != static_cast<std::size_t>(spec_.dims)) return false;
    for (int c : coords) {
        if (!in_mode_band(c, spec_.side)) return false;
    }
    return true;
}

std::vector<std::uint64_t> HypergridEnv::mode_indices() const {
    if (grid_state_count() > kEnumerationGuard) {
        throw InvalidArgument("HypergridEnv::mode_indices: grid too large to enumerate");
    }
    std::vector<int> band;
    for (int c = 0; c < spec_.side; ++c) {
        if (in_mode_band(c, spec_.side)) band.push_back(c);
    }
    std::vector<std::uint64_t> out;
    std::vector<int> coords(static_cast<std::size_t>(spec_.dims), 0);
    std::vector<std::size_t> pick(static_cast<std::size_t>(spec_.dims), 0);
    if (band.empty()) return out;
    while (true) {
        for (int d = 0; d < spec_.dims; ++d) coords[static_cast<std::size_t>(d)] = band[pick[static_cast<std::size_t>(d)]];
        out.push_back(index_of(coords));
        int d = 0;
        for (; d < spec_.dims; ++d) {
            if (++pick[static_cast<std::size_t>(d)] < band.size()) break;
            pick[static_cast<std::size_t>(d)] = 0;
        }
        if (d == spec_.dims) break;
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace gflowot
