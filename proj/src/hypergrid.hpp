#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace gflowot {

// A state is a coordinate vector plus a stage tag. Grid states are interior
// DAG vertices; Flagged is the augmented terminal s^T reached by the stop
// action; Final is the sink s_f every flagged state feeds into.
enum class StateKind : std::uint8_t { Grid, Flagged, Final };

struct State {
    std::vector<int> coords;
    StateKind kind = StateKind::Grid;

    bool operator==(const State&) const = default;
};

inline State make_final() { return State{{}, StateKind::Final}; }

// Minimal environment surface the policy/regularizer code is written
// against. Conventions: actions are indexed 0..action_count()-1 and the last
// action id is the stop action; a flagged state's single outgoing edge to
// s_f reuses the stop action id.
class Environment {
public:
    virtual ~Environment() = default;

    virtual int action_count() const = 0;
    virtual State initial_state() const = 0;
    // Valid-action mask of a grid state (size action_count()).
    virtual std::vector<std::uint8_t> valid_actions(const State& s) const = 0;
    virtual State step(const State& s, int action) const = 0;
    // (parent, action) pairs; the action is the one that leads parent -> s.
    virtual std::vector<std::pair<State, int>> parents(const State& s) const = 0;
    virtual double reward(const State& terminal) const = 0;
    // True when the action algebra satisfies the closed-form requirements
    // (no action is a sum of two others; unique commuting factorization).
    virtual bool closed_form_eligible() const = 0;
    virtual std::uint64_t state_key(const State& s) const = 0;
    virtual int encoding_dim() const = 0;
    virtual void encode(const State& s, std::span<double> out) const = 0;
};

// (child, action) pairs of any state, flagged and final included.
std::vector<std::pair<State, int>> children(const Environment& env, const State& s);
// Action id of the edge from -> to, if the edge exists.
std::optional<int> connecting_action(const Environment& env, const State& from, const State& to);

struct HypergridSpec {
    int dims = 2;
    int side = 8;
    double r0 = 1e-3;
};

// The D-dimensional hypergrid: coordinates in [0, side-1], actions are
// "increment coordinate d" (valid while the coordinate stays below side-1)
// plus the stop action, reward peaks on the corner plateaus with 2^D modes.
class HypergridEnv final : public Environment {
public:
    explicit HypergridEnv(HypergridSpec spec);

    int action_count() const override { return spec_.dims + 1; }
    int dims() const { return spec_.dims; }
    int side() const { return spec_.side; }
    const HypergridSpec& spec() const { return spec_; }

    State initial_state() const override;
    std::vector<std::uint8_t> valid_actions(const State& s) const override;
    State step(const State& s, int action) const override;
    std::vector<std::pair<State, int>> parents(const State& s) const override;
    double reward(const State& terminal) const override;
    bool closed_form_eligible() const override { return true; }
    std::uint64_t state_key(const State& s) const override;
    int encoding_dim() const override { return spec_.dims * spec_.side; }
    void encode(const State& s, std::span<double> out) const override;

    // --- exact enumeration (each grid cell is one terminal x^T) ---
    std::uint64_t grid_state_count() const { return grid_count_; }
    std::uint64_t index_of(std::span<const int> coords) const;
    State grid_state(std::uint64_t index) const;
    // R(x^T) for every cell, indexed by index_of. Guard: <= 1e7 cells.
    std::vector<double> terminal_rewards() const;
    // R/Z over all terminals; optionally reports Z = sum R.
    std::vector<double> true_distribution(double* z_out = nullptr) const;
    std::vector<std::uint64_t> mode_indices() const;
    bool is_mode(std::span<const int> coords) const;

private:
    void require_grid(const State& s, const char* who) const;

    HypergridSpec spec_;
    std::uint64_t grid_count_ = 0;
};

} // namespace gflowot
