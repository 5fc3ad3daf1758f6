#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace gflowot;
using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

// Central finite differences of f over every entry of every param tensor.
std::vector<Tensor> finite_difference(const std::function<double()>& f, std::vector<Tensor*> params, double h) {
    std::vector<Tensor> out;
    for (Tensor* p : params) {
        Tensor g(p->rows, p->cols);
        for (std::size_t i = 0; i < p->v.size(); ++i) {
            const double keep = p->v[i];
            p->v[i] = keep + h;
            const double fp = f();
            p->v[i] = keep - h;
            const double fm = f();
            p->v[i] = keep;
            g.v[i] = (fp - fm) / (2.0 * h);
        }
        out.push_back(std::move(g));
    }
    return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

void randomize(Tensor& t, Rng& rng, double scale) {
    for (double& x : t.v) x = rng.uniform(-scale, scale);
}

// Small random MLP ending in a masked log-softmax, scalarized so the loss
// exercises cdot, gather, exp, mul and square at once.
struct MlpFixture {
    Tensor w1, b1, w2, b2, w3, b3, x;
    std::vector<std::uint8_t> mask;
    std::vector<double> mix;

    explicit MlpFixture(Rng& rng) {
        const int in = 2 + static_cast<int>(rng.below(4));
        const int h1 = 3 + static_cast<int>(rng.below(6));
        const int h2 = 3 + static_cast<int>(rng.below(6));
        const int out = 2 + static_cast<int>(rng.below(3));
        w1 = Tensor(h1, in, true);
        b1 = Tensor(1, h1, true);
        w2 = Tensor(h2, h1, true);
        b2 = Tensor(1, h2, true);
        w3 = Tensor(out, h2, true);
        b3 = Tensor(1, out, true);
        x = Tensor(1, in);
        for (Tensor* t : {&w1, &b1, &w2, &b2, &w3, &b3, &x}) randomize(*t, rng, 0.8);
        mask.assign(static_cast<std::size_t>(out), 1);
        mix.resize(static_cast<std::size_t>(out));
        for (double& m : mix) m = rng.uniform(-1.0, 1.0);
    }

    std::vector<Tensor*> params() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

    double loss(Graph& g, Var* out_node = nullptr) {
        Var xin = g.constant(x.rows, x.cols, x.v);
        Var h1v = g.leaky_relu(g.linear(xin, g.param(w1), g.param(b1)), 0.01);
        Var h2v = g.leaky_relu(g.linear(h1v, g.param(w2), g.param(b2)), 0.01);
        Var logits = g.linear(h2v, g.param(w3), g.param(b3));
        Var lsm = g.masked_log_softmax(logits, mask);
        Var a = g.cdot(lsm, mix);
        Var b = g.square(g.gather(lsm, 0, 0));
        Var c = g.mul(g.exp(g.gather(lsm, 0, 1)), a);
        Var total = g.addn(std::vector<Var>{a, b, c});
        if (out_node) *out_node = total;
        return g.value(total);
    }
};

} // namespace

TEST_CASE("square function gradient") {
    Graph g;
    Tensor x = Tensor::scalar(3.0, true);
    Var loss = g.square(g.param(x));
    Tensor* px = &x;
    auto grads = g.grad(loss, std::span<Tensor* const>{&px, 1});
    CHECK(grads[0].v[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("log-softmax input gradients sum to zero") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g;
        Tensor logits(1, 5, true);
        randomize(logits, rng, 3.0);
        std::vector<std::uint8_t> mask(5, 1);
        Var lsm = g.masked_log_softmax(g.param(logits), mask);
        Var yi = g.gather(lsm, 0, static_cast<int>(rng.below(5)));
        g.backward(yi);
        auto grad = g.gradient(g.param(logits));
        double s = 0.0;
        for (double v : grad) s += v;
        CHECK(std::abs(s) < 1e-12);
        g.reset();
    }
}

TEST_CASE("masked log-softmax values") {
    Graph g;

    SUBCASE("equal logits over three valid lanes") {
        std::vector<double> logits{0.7, 0.7, 0.7, 0.7};
        std::vector<std::uint8_t> mask{1, 1, 0, 1};
        Var lsm = g.masked_log_softmax(g.constant(1, 4, logits), mask);
        auto vals = g.values(lsm);
        for (int j : {0, 1, 3}) {
            CHECK(vals[static_cast<std::size_t>(j)] == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
        }
        CHECK(std::isinf(vals[2]));
        CHECK(vals[2] < 0);
    }

    SUBCASE("single valid lane is forced to probability one") {
        std::vector<double> logits{-4.2, 11.0, 3.0};
        std::vector<std::uint8_t> mask{0, 0, 1};
        Var lsm = g.masked_log_softmax(g.constant(1, 3, logits), mask);
        CHECK(g.values(lsm)[2] == 0.0);
    }

    SUBCASE("two lanes at logits (0, ln 3)") {
        std::vector<double> logits{0.0, std::log(3.0)};
        std::vector<std::uint8_t> mask{1, 1};
        Var lsm = g.masked_log_softmax(g.constant(1, 2, logits), mask);
        CHECK(g.values(lsm)[0] == doctest::Approx(std::log(0.25)).epsilon(1e-14));
        CHECK(g.values(lsm)[1] == doctest::Approx(std::log(0.75)).epsilon(1e-14));
    }

    SUBCASE("all-false mask rejected") {
        std::vector<double> logits{1.0, 2.0};
        std::vector<std::uint8_t> mask{0, 0};
        CHECK_THROWS_AS(g.masked_log_softmax(g.constant(1, 2, logits), mask), InvalidArgument);
    }
}

TEST_CASE("masked lanes receive no gradient and cannot be gathered") {
    Graph g;
    Tensor logits(1, 3, true);
    logits.v = {0.2, -1.0, 2.0};
    std::vector<std::uint8_t> mask{1, 0, 1};
    Var lsm = g.masked_log_softmax(g.param(logits), mask);
    CHECK_THROWS_AS(g.gather(lsm, 0, 1), NumericError);
    Var loss = g.add(g.gather(lsm, 0, 0), g.gather(lsm, 0, 2));
    g.backward(loss);
    auto grad = g.gradient(g.param(logits));
    CHECK(grad[1] == 0.0);
}

TEST_CASE("MLP gradients match central finite differences over 100 seeds") {
    int instances = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        MlpFixture fx(rng);
        Graph g;
        Var node;
        fx.loss(g, &node);
        auto params = fx.params();
        auto grads = g.grad(node, params);
        auto fd = finite_difference(
            [&] {
                Graph g2;
                return fx.loss(g2);
            },
            params, 1e-5);
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t i = 0; i < fd[p].v.size(); ++i) {
                worst = std::max(worst, rel_err(grads[p].v[i], fd[p].v[i]));
            }
        }
        ++instances;
    }
    CHECK(instances == 100);
    CHECK(worst <= 1e-4);
}

TEST_CASE("identical seeds give bit-identical values and gradients") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        MlpFixture fx(rng);
        Graph g;
        Var node;
        const double v = fx.loss(g, &node);
        auto params = fx.params();
        auto grads = g.grad(node, params);
        std::vector<double> flat{v};
        for (const auto& t : grads) flat.insert(flat.end(), t.v.begin(), t.v.end());
        return flat;
    };
    const auto a = run(42);
    const auto b = run(42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("backward twice without a new forward is rejected") {
    Graph g;
    Tensor x = Tensor::scalar(2.0, true);
    Var loss = g.square(g.param(x));
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), InvalidArgument);
    g.reset();
    Var loss2 = g.square(g.param(x));
    CHECK_NOTHROW(g.backward(loss2));
}

TEST_CASE("error paths") {
    SUBCASE("non-scalar loss") {
        Graph g;
        Tensor x(1, 3, true);
        x.v = {1.0, 2.0, 3.0};
        Var v = g.param(x);
        CHECK_THROWS_AS(g.backward(v), InvalidArgument);
    }
    SUBCASE("param not in graph") {
        Graph g;
        Tensor x = Tensor::scalar(1.0, true);
        Tensor other = Tensor::scalar(5.0, true);
        Var loss = g.square(g.param(x));
        Tensor* pother = &other;
        CHECK_THROWS_AS(g.grad(loss, std::span<Tensor* const>{&pother, 1}), InvalidArgument);
    }
    SUBCASE("overflow to inf is a hard error") {
        Graph g;
        Var big = g.constant(1000.0);
        CHECK_THROWS_AS(g.exp(big), NumericError);
    }
}

TEST_CASE("clamp_min gradient semantics") {
    Graph g;
    Tensor x(1, 3, true);
    x.v = {-70.0, -60.0, -1.0};
    Var c = g.clamp_min(g.param(x), -60.0);
    CHECK(g.values(c)[0] == -60.0);
    CHECK(g.values(c)[1] == -60.0);
    CHECK(g.values(c)[2] == -1.0);
    g.backward(g.sum(c));
    auto grad = g.gradient(g.param(x));
    CHECK(grad[0] == 0.0); // below the floor
    CHECK(grad[1] == 1.0); // at the floor the value is untouched, gradient passes
    CHECK(grad[2] == 1.0);
}

TEST_CASE("min2 selects the first argument on ties") {
    Graph g;
    Tensor a = Tensor::scalar(1.5, true);
    Tensor b = Tensor::scalar(1.5, true);
    Var m = g.min2(g.param(a), g.param(b));
    g.backward(m);
    CHECK(g.gradient(g.param(a))[0] == 1.0);
    CHECK(g.gradient(g.param(b))[0] == 0.0);
}
