#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace gflowot::ad {

class Graph;

// Handle to a node in a Graph. Plain value type; the Graph owns all storage.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, which is a topological order by construction; backward() walks the
// tape once in reverse and accumulates each node's gradient over all of its
// consumers. Values and gradients live in flat arenas that keep their
// capacity across reset(), so a training loop reuses one Graph with no
// steady-state allocation.
//
// Every forward op checks its outputs for NaN/Inf and throws NumericError on
// violation. The only sanctioned non-finite value is the -inf sentinel in
// masked-off lanes of masked_log_softmax; gathering such a lane is an error.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- leaves ----
    Var constant(double x);
    Var constant(int rows, int cols, std::span<const double> values);
    // Registers t as a differentiable leaf (values copied). Repeated calls
    // for the same tensor return the same node.
    Var param(Tensor& t);

    // ---- tensor ops ----
    // x: (n x in), w: (out x in), b: (1 x out) -> (n x out)
    Var linear(Var x, Var w, Var b);
    Var leaky_relu(Var x, double slope);
    // Row-wise masked log-softmax; mask is row-major, same shape as x.
    Var masked_log_softmax(Var x, std::span<const std::uint8_t> mask);
    Var gather(Var x, int i, int j);
    Var sum(Var x);
    // sum_i weights[i] * x[i] over all elements, weights constant.
    Var cdot(Var x, std::span<const double> weights);

    // ---- elementwise / scalar ops ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a);
    Var exp(Var a);
    Var square(Var a);
    Var scale(Var a, double c);
    Var addn(std::span<const Var> xs);
    // Elementwise min; the subgradient follows the selected branch and ties
    // select the first argument.
    Var min2(Var a, Var b);
    // max(a, floor); gradient passes wherever a >= floor.
    Var clamp_min(Var a, double floor);

    // ---- access ----
    double value(Var v) const; // scalar nodes only
    std::span<const double> values(Var v) const;
    int rows(Var v) const;
    int cols(Var v) const;

    // ---- differentiation ----
    // loss must be scalar. A second backward without an intervening reset()
    // is rejected.
    void backward(Var loss);
    std::span<const double> gradient(Var v) const;
    // backward + gradient collection for registered params + reset().
    std::vector<Tensor> grad(Var loss, std::span<Tensor* const> params);

    void reset();
    std::size_t node_count() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    enum class Op : std::uint8_t {
        Constant,
        Param,
        Linear,
        LeakyRelu,
        MaskedLogSoftmax,
        Gather,
        Sum,
        CDot,
        Add,
        Sub,
        Mul,
        Neg,
        Exp,
        Square,
        Scale,
        AddN,
        Min2,
        ClampMin,
    };

    struct Node {
        Op op;
        std::int32_t a = -1;
        std::int32_t b = -1;
        std::int32_t c = -1; // third input (linear bias)
        std::int32_t rows = 0;
        std::int32_t cols = 0;
        std::int32_t val_off = 0;  // into val_/grad_
        std::int32_t aux_off = -1; // into aux_ (lsm probs, cdot weights)
        std::int32_t ints_off = -1;
        std::int32_t n_ints = 0;  // addn input count
        std::int32_t mask_off = -1;
        std::int32_t i0 = 0, j0 = 0; // gather indices
        double c0 = 0.0;             // scale factor / slope / clamp floor
        Tensor* bound = nullptr;     // param binding
    };

    Var push(Op op, int rows, int cols);
    std::span<double> val(int id);
    std::span<const double> val(int id) const;
    std::span<double> grd(int id);
    const Node& node(Var v) const;
    void check_finite(int id) const;
    void check_same_graph_shape(Var a, Var b) const;
    void forward_node(int id); // compute values of nodes_[id] from inputs
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<double> val_;
    std::vector<double> grad_;
    std::vector<double> aux_;
    std::vector<std::int32_t> ints_;
    std::vector<std::uint8_t> mask_;
    std::unordered_map<const Tensor*, std::int32_t> param_ids_;
    bool backward_done_ = false;
};

} // namespace gflowot::ad
