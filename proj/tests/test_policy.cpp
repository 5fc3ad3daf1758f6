#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hypergrid.hpp"
#include "policy.hpp"
#include "rng.hpp"

using namespace gflowot;

namespace {

State grid(std::vector<int> coords) { return State{std::move(coords), StateKind::Grid}; }

void randomize_all(PolicyModel& model, std::uint64_t seed, double scale = 0.7) {
    Rng rng(seed);
    for (auto& [name, t] : model.named_parameters()) {
        if (name == "log_z") continue;
        for (double& x : t->v) x = rng.uniform(-scale, scale);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("freshly initialized model is uniform over valid actions") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {32, 32}, false, 9);
    const auto lf = model.forward_log_probs(env, grid({0, 0}));
    for (int a = 0; a < 3; ++a) CHECK(std::exp(lf[static_cast<std::size_t>(a)]) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("boundary coordinates mask the increment action") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {32, 32}, false, 9);
    randomize_all(model, 4);
    const auto lf = model.forward_log_probs(env, grid({7, 2}));
    CHECK(std::isinf(lf[0]));
    CHECK(lf[0] < 0); // probability exactly 0
    CHECK(std::isfinite(lf[1]));
    CHECK(std::isfinite(lf[2]));
}

TEST_CASE("forward probabilities sum to one for random parameters") {
    HypergridEnv env({3, 6, 1e-3});
    PolicyModel model(env, {24, 24}, false, 1);
    Rng rng(77);
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        randomize_all(model, seed);
        const State s = env.grid_state(rng.below(env.grid_state_count()));
        const auto lf = model.forward_log_probs(env, s);
        double sum = 0.0;
        for (double lp : lf) {
            if (std::isfinite(lp)) sum += std::exp(lp);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("backward policy") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {32, 32}, false, 9);

    SUBCASE("single parent is forced") {
        randomize_all(model, 5);
        const auto lb = model.backward_log_probs(env, grid({0, 3}));
        CHECK(lb[1] == 0.0); // parent via dimension 1, probability exactly 1
        CHECK(std::isinf(lb[0]));
    }

    SUBCASE("two parents normalize") {
        randomize_all(model, 6);
        const auto lb = model.backward_log_probs(env, grid({1, 1}));
        CHECK(std::exp(lb[0]) + std::exp(lb[1]) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("uniform at fresh initialization") {
        const auto lb = model.backward_log_probs(env, grid({2, 3}));
        CHECK(std::exp(lb[0]) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(std::exp(lb[1]) == doctest::Approx(0.5).epsilon(1e-14));
    }

    SUBCASE("undefined at the initial state") {
        CHECK_THROWS_AS(model.backward_log_probs(env, grid({0, 0})), InvalidArgument);
    }
}

TEST_CASE("uniform-backward switch fixes P_B to 1/#parents") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {16, 16}, true, 9);
    randomize_all(model, 8); // random weights must not matter for P_B
    const auto lb = model.backward_log_probs(env, grid({4, 2}));
    CHECK(lb[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(lb[1] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("log total flow starts at zero and follows plain SGD") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {16, 16}, false, 3);
    CHECK(model.log_total_flow() == 0.0);
    const double grad = 2.5;
    model.log_z().v[0] -= 0.1 * grad;
    CHECK(model.log_total_flow() == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("flagged states have a forced forward policy") {
    HypergridEnv env({2, 8, 1e-3});
    PolicyModel model(env, {16, 16}, false, 3);
    State t = grid({3, 3});
    t.kind = StateKind::Flagged;
    const auto lf = model.forward_log_probs(env, t);
    CHECK(lf[2] == 0.0);
    CHECK(std::isinf(lf[0]));
}

TEST_CASE("batched and single-state evaluation agree bitwise") {
    HypergridEnv env({3, 5, 1e-3});
    PolicyModel model(env, {40, 40}, false, 21);
    randomize_all(model, 13);
    std::vector<State> states;
    Rng rng(2);
    for (int i = 0; i < 25; ++i) states.push_back(env.grid_state(rng.below(env.grid_state_count())));
    std::vector<double> lf_batch, lb_batch;
    model.eval_log_probs(env, states, lf_batch, lb_batch);
    const std::size_t a = static_cast<std::size_t>(env.action_count());
    for (std::size_t i = 0; i < states.size(); ++i) {
        std::vector<double> lf1, lb1;
        model.eval_log_probs(env, std::span<const State>{&states[i], 1}, lf1, lb1);
        for (std::size_t j = 0; j < a; ++j) {
            CHECK(lf_batch[i * a + j] == lf1[j]);
            CHECK(lb_batch[i * a + j] == lb1[j]);
        }
    }
}

TEST_CASE("tape evaluation matches the plain path bitwise") {
    HypergridEnv env({2, 6, 1e-3});
    PolicyModel model(env, {32, 32}, false, 17);
    randomize_all(model, 19);
    ad::Graph g;
    PolicyTape tape(g, env, model);
    std::vector<State> states{grid({0, 0}), grid({2, 3}), grid({1, 5}), grid({5, 5})};
    for (const auto& s : states) tape.add_state_and_children(s);
    tape.build();
    for (const auto& s : states) {
        const auto lf = model.forward_log_probs(env, s);
        const auto mask = env.valid_actions(s);
        for (int a = 0; a < env.action_count(); ++a) {
            if (!mask[static_cast<std::size_t>(a)]) continue;
            const double expected = std::max(lf[static_cast<std::size_t>(a)], kLogFloor);
            CHECK(tape.log_forward_value(s, a) == expected);
        }
    }
    // a state never registered takes the lazy single-row path, same numbers
    const State late = grid({4, 1});
    const auto lf = model.forward_log_probs(env, late);
    CHECK(tape.log_forward_value(late, 2) == std::max(lf[2], kLogFloor));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    HypergridEnv env({2, 5, 1e-3});
    PolicyModel model(env, {24, 40}, false, 33);
    randomize_all(model, 101);
    model.log_z().v[0] = 1.2345678901234567;
    const std::string path = "/tmp/gflowot_test_ckpt.bin";
    model.save(path);
    PolicyModel loaded = PolicyModel::load(env, path);
    CHECK(loaded.widths().h1 == 24);
    CHECK(loaded.widths().h2 == 40);
    CHECK(loaded.uniform_backward() == model.uniform_backward());
    auto a = model.named_parameters();
    auto b = loaded.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].second->v.size() == b[i].second->v.size());
        for (std::size_t j = 0; j < a[i].second->v.size(); ++j) {
            CHECK(a[i].second->v[j] == b[i].second->v[j]);
        }
    }
    // save -> load -> save produces identical bytes
    const std::string path2 = "/tmp/gflowot_test_ckpt2.bin";
    loaded.save(path2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint loading validates the environment") {
    HypergridEnv env({2, 5, 1e-3});
    PolicyModel model(env, {16, 16}, false, 1);
    const std::string path = "/tmp/gflowot_test_ckpt3.bin";
    model.save(path);
    HypergridEnv other({3, 5, 1e-3});
    CHECK_THROWS_AS(PolicyModel::load(other, path), IoError);
    std::remove(path.c_str());
}
