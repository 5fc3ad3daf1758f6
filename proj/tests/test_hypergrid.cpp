#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "hypergrid.hpp"
#include "rng.hpp"

using namespace gflowot;

namespace {

State grid(std::vector<int> coords) { return State{std::move(coords), StateKind::Grid}; }
State flagged(std::vector<int> coords) { return State{std::move(coords), StateKind::Flagged}; }

State random_grid_state(const HypergridEnv& env, Rng& rng) {
    return env.grid_state(rng.below(env.grid_state_count()));
}

} // namespace

TEST_CASE("initial state") {
    CHECK(HypergridEnv({2, 8, 1e-3}).initial_state() == grid({0, 0}));
    CHECK(HypergridEnv({7, 8, 1e-3}).initial_state() == grid({0, 0, 0, 0, 0, 0, 0}));
    // D increments plus the stop action are all available at the source
    HypergridEnv env({3, 2, 1e-3});
    const auto mask = env.valid_actions(env.initial_state());
    int n = 0;
    for (auto m : mask) n += m;
    CHECK(n == 4);
}

TEST_CASE("valid actions at boundaries") {
    HypergridEnv env({2, 8, 1e-3});
    CHECK(env.valid_actions(grid({7, 3})) == std::vector<std::uint8_t>{0, 1, 1});
    CHECK(env.valid_actions(grid({7, 7})) == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(env.valid_actions(grid({0, 0})) == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("step semantics") {
    HypergridEnv env({2, 8, 1e-3});
    CHECK(env.step(grid({0, 0}), 0) == grid({1, 0}));
    CHECK(env.step(grid({1, 0}), 2) == flagged({1, 0}));
    CHECK(env.step(flagged({1, 0}), 2) == make_final());
    CHECK_THROWS_AS(env.step(grid({7, 0}), 0), InvalidArgument);
    CHECK_THROWS_AS(env.step(flagged({1, 0}), 0), InvalidArgument);
}

TEST_CASE("parents enumeration") {
    HypergridEnv env({2, 8, 1e-3});
    const auto p11 = env.parents(grid({1, 1}));
    REQUIRE(p11.size() == 2);
    CHECK(p11[0] == std::pair<State, int>{grid({0, 1}), 0});
    CHECK(p11[1] == std::pair<State, int>{grid({1, 0}), 1});
    const auto p10 = env.parents(grid({1, 0}));
    REQUIRE(p10.size() == 1);
    CHECK(p10[0].first == grid({0, 0}));
    const auto pt = env.parents(flagged({0, 0}));
    REQUIRE(pt.size() == 1);
    CHECK(pt[0].first == grid({0, 0}));
    CHECK(pt[0].second == 2);
    CHECK_THROWS_AS(env.parents(grid({0, 0})), InvalidArgument);
}

TEST_CASE("reward values on the 8x8 grid") {
    HypergridEnv env({2, 8, 1e-3});
    CHECK(env.reward(flagged({6, 6})) == doctest::Approx(2.501).epsilon(1e-15));
    CHECK(env.reward(flagged({7, 7})) == doctest::Approx(0.501).epsilon(1e-15));
    CHECK(env.reward(flagged({3, 3})) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK_THROWS_AS(env.reward(grid({3, 3})), InvalidArgument);
}

TEST_CASE("true distribution and partition function") {
    HypergridEnv env({2, 8, 1e-3});
    double z = 0.0;
    const auto p = env.true_distribution(&z);
    CHECK(z == doctest::Approx(16.064).epsilon(1e-12));
    double sum = 0.0;
    for (double x : p) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[env.index_of(std::vector<int>{6, 6})] == doctest::Approx(2.501 / 16.064).epsilon(1e-12));
}

TEST_CASE("mode enumeration") {
    HypergridEnv env2({2, 8, 1e-3});
    const auto modes2 = env2.mode_indices();
    REQUIRE(modes2.size() == 4);
    std::set<std::uint64_t> expect;
    for (int a : {1, 6}) {
        for (int b : {1, 6}) expect.insert(env2.index_of(std::vector<int>{a, b}));
    }
    CHECK(std::set<std::uint64_t>(modes2.begin(), modes2.end()) == expect);
    for (std::uint64_t m : modes2) {
        State s = env2.grid_state(m);
        s.kind = StateKind::Flagged;
        CHECK(env2.reward(s) == doctest::Approx(2.0 + 0.5 + 1e-3).epsilon(1e-15));
        CHECK(env2.is_mode(s.coords));
    }

    HypergridEnv env4({4, 8, 1e-3});
    CHECK(env4.mode_indices().size() == 16);
}

TEST_CASE("children and parents are mutually consistent") {
    HypergridEnv env({3, 5, 1e-3});
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const State s = random_grid_state(env, rng);
        for (const auto& [child, action] : children(env, s)) {
            const auto ps = env.parents(child);
            bool found = false;
            for (const auto& [parent, paction] : ps) {
                if (parent == s && paction == action) found = true;
            }
            CHECK(found);
        }
        if (!(s == env.initial_state())) {
            for (const auto& [parent, action] : env.parents(s)) {
                bool found = false;
                for (const auto& [child, caction] : children(env, parent)) {
                    if (child == s && caction == action) found = true;
                }
                CHECK(found);
            }
        }
    }
}

TEST_CASE("every trajectory reaches s_f within the depth bound") {
    HypergridEnv env({3, 4, 1e-3});
    Rng rng(5);
    const int bound = 3 * (4 - 1) + 2;
    for (int trial = 0; trial < 100; ++trial) {
        State s = env.initial_state();
        int transitions = 0;
        while (s.kind != StateKind::Final) {
            const auto kids = children(env, s);
            REQUIRE(!kids.empty());
            s = kids[rng.below(kids.size())].first;
            ++transitions;
            REQUIRE(transitions <= bound);
        }
    }
}

TEST_CASE("construction and enumeration guards") {
    CHECK_THROWS_AS(HypergridEnv({0, 8, 1e-3}), InvalidArgument);
    CHECK_THROWS_AS(HypergridEnv({2, 1, 1e-3}), InvalidArgument);
    CHECK_THROWS_AS(HypergridEnv({2, 8, 0.0}), InvalidArgument);
    HypergridEnv big({9, 8, 1e-3}); // 8^9 cells: constructible, not enumerable
    CHECK_THROWS_AS(big.terminal_rewards(), InvalidArgument);
}

TEST_CASE("hypergrid admits the closed form") {
    CHECK(HypergridEnv({2, 8, 1e-3}).closed_form_eligible());
}

TEST_CASE("state keys separate grid, flagged and final states") {
    HypergridEnv env({2, 4, 1e-3});
    std::set<std::uint64_t> keys;
    for (std::uint64_t i = 0; i < env.grid_state_count(); ++i) {
        State s = env.grid_state(i);
        keys.insert(env.state_key(s));
        s.kind = StateKind::Flagged;
        keys.insert(env.state_key(s));
    }
    keys.insert(env.state_key(make_final()));
    CHECK(keys.size() == 2 * env.grid_state_count() + 1);
}
