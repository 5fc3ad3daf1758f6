#include "graph.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "errors.hpp"
#include "kernels.hpp"

namespace gflowot::ad {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Var Graph::push(Op op, int rows, int cols) {
    if (backward_done_) {
        // Keep the tape immutable between backward() and reset() so stale
        // gradients can never be re-accumulated.
        throw InvalidArgument("Graph: cannot add nodes after backward(); call reset() first");
    }
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.val_off = static_cast<std::int32_t>(val_.size());
    const std::size_t sz = static_cast<std::size_t>(rows) * cols;
    val_.resize(val_.size() + sz, 0.0);
    grad_.resize(grad_.size() + sz, 0.0);
    nodes_.push_back(n);
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

std::span<double> Graph::val(int id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return {val_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}

std::span<const double> Graph::val(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return {val_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}

std::span<double> Graph::grd(int id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return {grad_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw InvalidArgument("Graph: invalid node handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check_finite(int id) const {
    for (double x : val(id)) {
        if (!std::isfinite(x)) throw NumericError("Graph: non-finite value in forward pass");
    }
}

void Graph::check_same_graph_shape(Var a, Var b) const {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) {
        throw InvalidArgument("Graph: shape mismatch between operands");
    }
}

Var Graph::constant(double x) {
    Var v = push(Op::Constant, 1, 1);
    val(v.id)[0] = x;
    check_finite(v.id);
    return v;
}

Var Graph::constant(int rows, int cols, std::span<const double> values) {
    if (values.size() != static_cast<std::size_t>(rows) * cols) {
        throw InvalidArgument("Graph::constant: value count does not match shape");
    }
    Var v = push(Op::Constant, rows, cols);
    std::memcpy(val(v.id).data(), values.data(), values.size() * sizeof(double));
    check_finite(v.id);
    return v;
}

Var Graph::param(Tensor& t) {
    auto it = param_ids_.find(&t);
    if (it != param_ids_.end()) return Var{it->second};
    Var v = push(Op::Param, t.rows, t.cols);
    std::memcpy(val(v.id).data(), t.v.data(), t.v.size() * sizeof(double));
    nodes_[static_cast<std::size_t>(v.id)].bound = &t;
    check_finite(v.id);
    param_ids_.emplace(&t, v.id);
    return v;
}

Var Graph::linear(Var x, Var w, Var b) {
    const Node& nx = node(x);
    const Node& nw = node(w);
    const Node& nb = node(b);
    if (nx.cols != nw.cols) throw InvalidArgument("Graph::linear: input width does not match weight");
    if (nb.rows != 1 || nb.cols != nw.rows) throw InvalidArgument("Graph::linear: bias shape mismatch");
    Var v = push(Op::Linear, nx.rows, nw.rows);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = x.id;
    n.b = w.id;
    n.c = b.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::leaky_relu(Var x, double slope) {
    const Node& nx = node(x);
    Var v = push(Op::LeakyRelu, nx.rows, nx.cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = x.id;
    n.c0 = slope;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::masked_log_softmax(Var x, std::span<const std::uint8_t> mask) {
    const Node& nx = node(x);
    const std::size_t sz = static_cast<std::size_t>(nx.rows) * nx.cols;
    if (mask.size() != sz) throw InvalidArgument("Graph::masked_log_softmax: mask shape mismatch");
    Var v = push(Op::MaskedLogSoftmax, nx.rows, nx.cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = x.id;
    n.mask_off = static_cast<std::int32_t>(mask_.size());
    mask_.insert(mask_.end(), mask.begin(), mask.end());
    n.aux_off = static_cast<std::int32_t>(aux_.size());
    aux_.resize(aux_.size() + sz, 0.0); // probabilities, kept for backward
    forward_node(v.id);
    // finiteness checked lane-wise inside forward_node (masked lanes are -inf)
    return v;
}

Var Graph::gather(Var x, int i, int j) {
    const Node& nx = node(x);
    if (i < 0 || i >= nx.rows || j < 0 || j >= nx.cols) {
        throw InvalidArgument("Graph::gather: index out of range");
    }
    Var v = push(Op::Gather, 1, 1);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = x.id;
    n.i0 = i;
    n.j0 = j;
    forward_node(v.id);
    if (!std::isfinite(val(v.id)[0])) {
        throw NumericError("Graph::gather: gathered a masked (-inf) or non-finite entry");
    }
    return v;
}

Var Graph::sum(Var x) {
    const Node& nx = node(x);
    Var v = push(Op::Sum, 1, 1);
    nodes_[static_cast<std::size_t>(v.id)].a = x.id;
    (void)nx;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::cdot(Var x, std::span<const double> weights) {
    const Node& nx = node(x);
    if (weights.size() != static_cast<std::size_t>(nx.rows) * nx.cols) {
        throw InvalidArgument("Graph::cdot: weight count does not match operand");
    }
    Var v = push(Op::CDot, 1, 1);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = x.id;
    n.aux_off = static_cast<std::int32_t>(aux_.size());
    aux_.insert(aux_.end(), weights.begin(), weights.end());
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::add(Var a, Var b) {
    check_same_graph_shape(a, b);
    Var v = push(Op::Add, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.b = b.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::sub(Var a, Var b) {
    check_same_graph_shape(a, b);
    Var v = push(Op::Sub, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.b = b.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::mul(Var a, Var b) {
    check_same_graph_shape(a, b);
    Var v = push(Op::Mul, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.b = b.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::neg(Var a) {
    Var v = push(Op::Neg, node(a).rows, node(a).cols);
    nodes_[static_cast<std::size_t>(v.id)].a = a.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::exp(Var a) {
    Var v = push(Op::Exp, node(a).rows, node(a).cols);
    nodes_[static_cast<std::size_t>(v.id)].a = a.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::square(Var a) {
    Var v = push(Op::Square, node(a).rows, node(a).cols);
    nodes_[static_cast<std::size_t>(v.id)].a = a.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::scale(Var a, double c) {
    Var v = push(Op::Scale, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.c0 = c;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::addn(std::span<const Var> xs) {
    if (xs.empty()) throw InvalidArgument("Graph::addn: empty input list");
    for (std::size_t i = 1; i < xs.size(); ++i) check_same_graph_shape(xs[0], xs[i]);
    Var v = push(Op::AddN, node(xs[0]).rows, node(xs[0]).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.ints_off = static_cast<std::int32_t>(ints_.size());
    n.n_ints = static_cast<std::int32_t>(xs.size());
    for (Var x : xs) ints_.push_back(x.id);
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::min2(Var a, Var b) {
    check_same_graph_shape(a, b);
    Var v = push(Op::Min2, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.b = b.id;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

Var Graph::clamp_min(Var a, double floor) {
    Var v = push(Op::ClampMin, node(a).rows, node(a).cols);
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.a = a.id;
    n.c0 = floor;
    forward_node(v.id);
    check_finite(v.id);
    return v;
}

void Graph::forward_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    std::span<double> out = val(id);
    switch (n.op) {
    case Op::Constant:
    case Op::Param:
        break;
    case Op::Linear: {
        const Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        const Node& nw = nodes_[static_cast<std::size_t>(n.b)];
        std::span<const double> x = val(n.a);
        std::span<const double> w = val(n.b);
        std::span<const double> b = val(n.c);
        for (int i = 0; i < nx.rows; ++i) {
            linear_row(x.data() + static_cast<std::size_t>(i) * nx.cols, w.data(), b.data(), nx.cols, nw.rows,
                       out.data() + static_cast<std::size_t>(i) * nw.rows);
        }
        break;
    }
    case Op::LeakyRelu: {
        std::span<const double> x = val(n.a);
        leaky_relu_row(x.data(), static_cast<int>(x.size()), n.c0, out.data());
        break;
    }
    case Op::MaskedLogSoftmax: {
        std::span<const double> x = val(n.a);
        const std::uint8_t* mask = mask_.data() + n.mask_off;
        double* probs = aux_.data() + n.aux_off;
        for (int i = 0; i < n.rows; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n.cols;
            if (!masked_log_softmax_row(x.data() + off, mask + off, n.cols, out.data() + off, probs + off)) {
                throw InvalidArgument("Graph::masked_log_softmax: all-false mask row");
            }
            for (int j = 0; j < n.cols; ++j) {
                if (mask[off + j] && !std::isfinite(out[off + j])) {
                    throw NumericError("Graph::masked_log_softmax: non-finite log-probability");
                }
            }
        }
        break;
    }
    case Op::Gather: {
        const Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        out[0] = val(n.a)[static_cast<std::size_t>(n.i0) * nx.cols + n.j0];
        break;
    }
    case Op::Sum: {
        double acc = 0.0;
        for (double x : val(n.a)) acc += x;
        out[0] = acc;
        break;
    }
    case Op::CDot: {
        std::span<const double> x = val(n.a);
        const double* w = aux_.data() + n.aux_off;
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
        out[0] = acc;
        break;
    }
    case Op::Add: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        break;
    }
    case Op::Sub: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
        break;
    }
    case Op::Mul: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
        break;
    }
    case Op::Neg: {
        std::span<const double> a = val(n.a);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
        break;
    }
    case Op::Exp: {
        std::span<const double> a = val(n.a);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
        break;
    }
    case Op::Square: {
        std::span<const double> a = val(n.a);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
        break;
    }
    case Op::Scale: {
        std::span<const double> a = val(n.a);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = n.c0 * a[i];
        break;
    }
    case Op::AddN: {
        for (int k = 0; k < n.n_ints; ++k) {
            std::span<const double> a = val(ints_[static_cast<std::size_t>(n.ints_off) + k]);
            if (k == 0) {
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
            } else {
                for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
            }
        }
        break;
    }
    case Op::Min2: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] <= b[i] ? a[i] : b[i];
        break;
    }
    case Op::ClampMin: {
        std::span<const double> a = val(n.a);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] >= n.c0 ? a[i] : n.c0;
        break;
    }
    }
}

void Graph::backward_node(int id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    std::span<const double> g = {grad_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
    switch (n.op) {
    case Op::Constant:
    case Op::Param:
        break;
    case Op::Linear: {
        const Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        const Node& nw = nodes_[static_cast<std::size_t>(n.b)];
        std::span<const double> x = val(n.a);
        std::span<const double> w = val(n.b);
        std::span<double> gx = grd(n.a);
        std::span<double> gw = grd(n.b);
        std::span<double> gb = grd(n.c);
        const int rows = nx.rows, in = nx.cols, out = nw.rows;
        for (int i = 0; i < rows; ++i) {
            const double* gi = g.data() + static_cast<std::size_t>(i) * out;
            const double* xi = x.data() + static_cast<std::size_t>(i) * in;
            double* gxi = gx.data() + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < out; ++j) {
                const double gj = gi[j];
                if (gj == 0.0) continue;
                const double* wj = w.data() + static_cast<std::size_t>(j) * in;
                double* gwj = gw.data() + static_cast<std::size_t>(j) * in;
                for (int k = 0; k < in; ++k) {
                    gxi[k] += gj * wj[k];
                    gwj[k] += gj * xi[k];
                }
                gb[j] += gj;
            }
        }
        break;
    }
    case Op::LeakyRelu: {
        std::span<const double> x = val(n.a);
        std::span<double> gx = grd(n.a);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * (x[i] > 0.0 ? 1.0 : n.c0);
        break;
    }
    case Op::MaskedLogSoftmax: {
        std::span<double> gx = grd(n.a);
        const std::uint8_t* mask = mask_.data() + n.mask_off;
        const double* probs = aux_.data() + n.aux_off;
        for (int i = 0; i < n.rows; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n.cols;
            double gsum = 0.0;
            for (int j = 0; j < n.cols; ++j) {
                if (mask[off + j]) gsum += g[off + j];
            }
            for (int j = 0; j < n.cols; ++j) {
                if (mask[off + j]) gx[off + j] += g[off + j] - probs[off + j] * gsum;
            }
        }
        break;
    }
    case Op::Gather: {
        const Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        grd(n.a)[static_cast<std::size_t>(n.i0) * nx.cols + n.j0] += g[0];
        break;
    }
    case Op::Sum: {
        std::span<double> gx = grd(n.a);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        break;
    }
    case Op::CDot: {
        std::span<double> gx = grd(n.a);
        const double* w = aux_.data() + n.aux_off;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * w[i];
        break;
    }
    case Op::Add: {
        std::span<double> ga = grd(n.a);
        std::span<double> gb = grd(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
        break;
    }
    case Op::Sub: {
        std::span<double> ga = grd(n.a);
        std::span<double> gb = grd(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
        break;
    }
    case Op::Mul: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        std::span<double> ga = grd(n.a);
        std::span<double> gb = grd(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i] * b[i];
            gb[i] += g[i] * a[i];
        }
        break;
    }
    case Op::Neg: {
        std::span<double> ga = grd(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= g[i];
        break;
    }
    case Op::Exp: {
        std::span<const double> y = val(id);
        std::span<double> ga = grd(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
        break;
    }
    case Op::Square: {
        std::span<const double> a = val(n.a);
        std::span<double> ga = grd(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * 2.0 * a[i];
        break;
    }
    case Op::Scale: {
        std::span<double> ga = grd(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * n.c0;
        break;
    }
    case Op::AddN: {
        for (int k = 0; k < n.n_ints; ++k) {
            std::span<double> ga = grd(ints_[static_cast<std::size_t>(n.ints_off) + k]);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        }
        break;
    }
    case Op::Min2: {
        std::span<const double> a = val(n.a);
        std::span<const double> b = val(n.b);
        std::span<double> ga = grd(n.a);
        std::span<double> gb = grd(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (a[i] <= b[i]) {
                ga[i] += g[i];
            } else {
                gb[i] += g[i];
            }
        }
        break;
    }
    case Op::ClampMin: {
        std::span<const double> a = val(n.a);
        std::span<double> ga = grd(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (a[i] >= n.c0) ga[i] += g[i];
        }
        break;
    }
    }
}

double Graph::value(Var v) const {
    const Node& n = node(v);
    if (n.rows != 1 || n.cols != 1) throw InvalidArgument("Graph::value: node is not scalar");
    return val(v.id)[0];
}

std::span<const double> Graph::values(Var v) const {
    node(v);
    return val(v.id);
}

int Graph::rows(Var v) const { return node(v).rows; }
int Graph::cols(Var v) const { return node(v).cols; }

void Graph::backward(Var loss) {
    const Node& n = node(loss);
    if (n.rows != 1 || n.cols != 1) throw InvalidArgument("Graph::backward: loss must be scalar");
    if (backward_done_) {
        throw InvalidArgument("Graph::backward: repeated backward without a new forward; call reset()");
    }
    backward_done_ = true;
    grd(loss.id)[0] = 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) backward_node(id);
    for (double gv : std::span<const double>{grad_.data(), grad_.size()}) {
        if (!std::isfinite(gv)) throw NumericError("Graph::backward: non-finite gradient");
    }
}

std::span<const double> Graph::gradient(Var v) const {
    const Node& n = node(v);
    if (!backward_done_) throw InvalidArgument("Graph::gradient: backward() has not run");
    return {grad_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}

std::vector<Tensor> Graph::grad(Var loss, std::span<Tensor* const> params) {
    for (Tensor* p : params) {
        if (param_ids_.find(p) == param_ids_.end()) {
            throw InvalidArgument("Graph::grad: parameter tensor was not registered in this graph");
        }
    }
    backward(loss);
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (Tensor* p : params) {
        const std::int32_t id = param_ids_.at(p);
        Tensor gt(p->rows, p->cols);
        std::span<const double> g = gradient(Var{id});
        std::copy(g.begin(), g.end(), gt.v.begin());
        out.push_back(std::move(gt));
    }
    reset();
    return out;
}

void Graph::reset() {
    nodes_.clear();
    val_.clear();
    grad_.clear();
    aux_.clear();
    ints_.clear();
    mask_.clear();
    param_ids_.clear();
    backward_done_ = false;
}

} // namespace gflowot::ad
