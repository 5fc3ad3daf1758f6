#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "kernels.hpp"

namespace gflowot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kChunkRows = 4096;

void init_uniform_fan_in(ad::Tensor& t, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
}

// Backward-head mask: lane a is valid iff s has a parent via action a. The
// initial state has none; its row gets a dummy all-true mask (the softmax
// needs one valid lane) and is never queried.
void backward_mask(const Environment& env, const State& s, std::span<std::uint8_t> mask) {
    std::fill(mask.begin(), mask.end(), 0);
    bool any = false;
    if (s == env.initial_state()) {
        std::fill(mask.begin(), mask.end(), 1);
        return;
    }
    for (const auto& [parent, action] : env.parents(s)) {
        mask[static_cast<std::size_t>(action)] = 1;
        any = true;
    }
    if (!any) std::fill(mask.begin(), mask.end(), 1);
}

// Same dummy treatment for states without outgoing edges (possible in test
// environments; hypergrid states always have the stop action).
std::vector<std::uint8_t> forward_mask(const Environment& env, const State& s) {
    auto mask = env.valid_actions(s);
    bool any = false;
    for (std::uint8_t m : mask) any = any || m;
    if (!any) std::fill(mask.begin(), mask.end(), 1);
    return mask;
}

} // namespace

PolicyModel::PolicyModel(const Environment& env, PolicyWidths widths, bool uniform_backward, std::uint64_t seed)
    : input_dim_(env.encoding_dim()),
      actions_(env.action_count()),
      widths_(widths),
      uniform_backward_(uniform_backward),
      w1_(widths.h1, input_dim_, true),
      b1_(1, widths.h1, true),
      w2_(widths.h2, widths.h1, true),
      b2_(1, widths.h2, true),
      wf_(actions_, widths.h2, true),
      bf_(1, actions_, true),
      wb_(actions_, widths.h2, true),
      bb_(1, actions_, true),
      log_z_(1, 1, true) {
    if (widths.h1 < 1 || widths.h2 < 1) throw InvalidArgument("PolicyModel: hidden widths must be positive");
    Rng rng(substream_seed(seed, RngStream::WeightInit));
    init_uniform_fan_in(w1_, rng);
    init_uniform_fan_in(w2_, rng);
    // heads stay zero: the initial policies are exactly uniform over valid lanes
}

std::vector<std::pair<std::string, ad::Tensor*>> PolicyModel::named_parameters() {
    return {{"w1", &w1_}, {"b1", &b1_}, {"w2", &w2_}, {"b2", &b2_},
            {"wf", &wf_}, {"bf", &bf_}, {"wb", &wb_}, {"bb", &bb_}, {"log_z", &log_z_}};
}

std::vector<std::pair<std::string, const ad::Tensor*>> PolicyModel::named_parameters() const {
    auto mut = const_cast<PolicyModel*>(this)->named_parameters();
    std::vector<std::pair<std::string, const ad::Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

void PolicyModel::forward_logits(std::span<const double> x, std::span<double> scratch, std::span<double> logits_f,
                                 std::span<double> logits_b) const {
    double* h1 = scratch.data();
    double* h2 = scratch.data() + widths_.h1;
    ad::linear_row(x.data(), w1_.v.data(), b1_.v.data(), input_dim_, widths_.h1, h1);
    ad::leaky_relu_row(h1, widths_.h1, kLeakySlope, h1);
    ad::linear_row(h1, w2_.v.data(), b2_.v.data(), widths_.h1, widths_.h2, h2);
    ad::leaky_relu_row(h2, widths_.h2, kLeakySlope, h2);
    ad::linear_row(h2, wf_.v.data(), bf_.v.data(), widths_.h2, actions_, logits_f.data());
    ad::linear_row(h2, wb_.v.data(), bb_.v.data(), widths_.h2, actions_, logits_b.data());
}

void PolicyModel::eval_log_probs(const Environment& env, std::span<const State> states, std::vector<double>& log_f,
                                 std::vector<double>& log_b) const {
    const std::size_t n = states.size();
    const std::size_t a = static_cast<std::size_t>(actions_);
    log_f.assign(n * a, 0.0);
    log_b.assign(n * a, 0.0);
    std::vector<double> x(static_cast<std::size_t>(input_dim_));
    std::vector<double> scratch(static_cast<std::size_t>(widths_.h1) + widths_.h2);
    std::vector<std::uint8_t> mask(a);
    for (std::size_t i = 0; i < n; ++i) {
        const State& s = states[i];
        if (s.kind != StateKind::Grid) throw InvalidArgument("PolicyModel::eval_log_probs: grid states only");
        env.encode(s, x);
        double* lf = log_f.data() + i * a;
        double* lb = log_b.data() + i * a;
        forward_logits(x, scratch, {lf, a}, {lb, a});
        const auto va = forward_mask(env, s);
        ad::masked_log_softmax_row(lf, va.data(), actions_, lf, nullptr);
        backward_mask(env, s, mask);
        if (uniform_backward_) {
            int k = 0;
            for (std::uint8_t m : mask) k += m;
            const double lp = -std::log(static_cast<double>(k));
            for (std::size_t j = 0; j < a; ++j) lb[j] = mask[j] ? lp : kNegInf;
        } else {
            ad::masked_log_softmax_row(lb, mask.data(), actions_, lb, nullptr);
        }
    }
}

std::vector<double> PolicyModel::forward_log_probs(const Environment& env, const State& s) const {
    std::vector<double> out(static_cast<std::size_t>(actions_), kNegInf);
    if (s.kind == StateKind::Final) throw InvalidArgument("PolicyModel::forward_log_probs: s_f has no forward policy");
    if (s.kind == StateKind::Flagged) {
        out[static_cast<std::size_t>(actions_ - 1)] = 0.0; // forced transition to s_f
        return out;
    }
    std::vector<double> lf, lb;
    eval_log_probs(env, std::span<const State>{&s, 1}, lf, lb);
    std::copy(lf.begin(), lf.end(), out.begin());
    return out;
}

std::vector<double> PolicyModel::backward_log_probs(const Environment& env, const State& s) const {
    if (s.kind == StateKind::Final) throw InvalidArgument("PolicyModel::backward_log_probs: undefined at s_f");
    if (s.kind == StateKind::Flagged) {
        // single parent through the stop action
        std::vector<double> out(static_cast<std::size_t>(actions_), kNegInf);
        out[static_cast<std::size_t>(actions_ - 1)] = 0.0;
        return out;
    }
    if (s == env.initial_state()) throw InvalidArgument("PolicyModel::backward_log_probs: undefined at s_0");
    std::vector<double> lf, lb;
    eval_log_probs(env, std::span<const State>{&s, 1}, lf, lb);
    return lb;
}

// ---------------------------------------------------------------------------
// PolicyTape

PolicyTape::PolicyTape(ad::Graph& g, const Environment& env, PolicyModel& model) : g_(g), env_(env), model_(model) {}

void PolicyTape::add_state(const State& s) {
    if (s.kind != StateKind::Grid) return;
    const std::uint64_t key = env_.state_key(s);
    if (index_.count(key)) return;
    if (built_) {
        // late registration: evaluate immediately as a single row
        const int idx = static_cast<int>(rows_.size());
        index_.emplace(key, idx);
        rows_.push_back(eval_single(s));
        return;
    }
    index_.emplace(key, static_cast<int>(pending_.size()));
    pending_.push_back(s);
}

void PolicyTape::add_state_and_children(const State& s) {
    add_state(s);
    if (s.kind != StateKind::Grid) return;
    for (const auto& [child, action] : children(env_, s)) add_state(child);
}

PolicyTape::RowRef PolicyTape::eval_single(const State& s) {
    const int a = model_.actions_;
    std::vector<double> x(static_cast<std::size_t>(model_.input_dim_));
    env_.encode(s, x);
    ad::Var xin = g_.constant(1, model_.input_dim_, x);
    ad::Var h1 = g_.leaky_relu(g_.linear(xin, g_.param(model_.w1_), g_.param(model_.b1_)), kLeakySlope);
    ad::Var h2 = g_.leaky_relu(g_.linear(h1, g_.param(model_.w2_), g_.param(model_.b2_)), kLeakySlope);
    ad::Var lf = g_.linear(h2, g_.param(model_.wf_), g_.param(model_.bf_));
    RowRef ref;
    ref.row = 0;
    ref.log_f = g_.masked_log_softmax(lf, forward_mask(env_, s));
    if (!model_.uniform_backward_) {
        ad::Var lb = g_.linear(h2, g_.param(model_.wb_), g_.param(model_.bb_));
        std::vector<std::uint8_t> bmask(static_cast<std::size_t>(a));
        backward_mask(env_, s, bmask);
        ref.log_b = g_.masked_log_softmax(lb, bmask);
    }
    return ref;
}

void PolicyTape::build() {
    if (built_) throw InvalidArgument("PolicyTape::build: already built");
    built_ = true;
    const std::size_t n = pending_.size();
    rows_.resize(n);
    if (n == 0) return;
    const int in = model_.input_dim_;
    const int a = model_.actions_;
    std::vector<double> x(n * static_cast<std::size_t>(in));
    std::vector<std::uint8_t> fmask(n * static_cast<std::size_t>(a));
    std::vector<std::uint8_t> bmask(n * static_cast<std::size_t>(a));
    for (std::size_t i = 0; i < n; ++i) {
        env_.encode(pending_[i], {x.data() + i * in, static_cast<std::size_t>(in)});
        const auto va = forward_mask(env_, pending_[i]);
        std::copy(va.begin(), va.end(), fmask.begin() + static_cast<std::ptrdiff_t>(i * a));
        backward_mask(env_, pending_[i], {bmask.data() + i * a, static_cast<std::size_t>(a)});
    }
    ad::Var xin = g_.constant(static_cast<int>(n), in, x);
    ad::Var h1 = g_.leaky_relu(g_.linear(xin, g_.param(model_.w1_), g_.param(model_.b1_)), kLeakySlope);
    ad::Var h2 = g_.leaky_relu(g_.linear(h1, g_.param(model_.w2_), g_.param(model_.b2_)), kLeakySlope);
    batch_log_f_ = g_.masked_log_softmax(g_.linear(h2, g_.param(model_.wf_), g_.param(model_.bf_)), fmask);
    if (!model_.uniform_backward_) {
        batch_log_b_ = g_.masked_log_softmax(g_.linear(h2, g_.param(model_.wb_), g_.param(model_.bb_)), bmask);
    }
    for (std::size_t i = 0; i < n; ++i) {
        rows_[i].log_f = batch_log_f_;
        rows_[i].log_b = batch_log_b_;
        rows_[i].row = static_cast<int>(i);
    }
    pending_.clear();
}

int PolicyTape::row_of(const State& s) {
    if (!built_) throw InvalidArgument("PolicyTape: build() must run before queries");
    const std::uint64_t key = env_.state_key(s);
    auto it = index_.find(key);
    if (it == index_.end()) {
        add_state(s); // lazy single-row path
        it = index_.find(key);
    }
    return it->second;
}

ad::Var PolicyTape::log_z() { return g_.param(model_.log_z_); }

ad::Var PolicyTape::log_forward(const State& s, int action) {
    if (s.kind == StateKind::Final) throw InvalidArgument("PolicyTape::log_forward: s_f has no forward policy");
    if (s.kind == StateKind::Flagged) {
        if (action != model_.actions_ - 1) throw InvalidArgument("PolicyTape::log_forward: flagged states only stop");
        return g_.constant(0.0);
    }
    const int idx = row_of(s);
    const std::uint64_t mkey = (static_cast<std::uint64_t>(idx) * 2ULL) * 64ULL + static_cast<std::uint64_t>(action);
    auto it = memo_.find(mkey);
    if (it != memo_.end()) return it->second;
    const RowRef& ref = rows_[static_cast<std::size_t>(idx)];
    ad::Var v = g_.clamp_min(g_.gather(ref.log_f, ref.row, action), kLogFloor);
    memo_.emplace(mkey, v);
    return v;
}

ad::Var PolicyTape::log_backward(const State& s, int parent_action) {
    if (s.kind == StateKind::Final) throw InvalidArgument("PolicyTape::log_backward: undefined at s_f");
    if (s.kind == StateKind::Flagged) return g_.constant(0.0); // unique parent through stop
    if (s == env_.initial_state()) throw InvalidArgument("PolicyTape::log_backward: undefined at s_0");
    if (model_.uniform_backward_) {
        const auto ps = env_.parents(s);
        return g_.constant(std::max(-std::log(static_cast<double>(ps.size())), kLogFloor));
    }
    const int idx = row_of(s);
    const std::uint64_t mkey = (static_cast<std::uint64_t>(idx) * 2ULL + 1ULL) * 64ULL + static_cast<std::uint64_t>(parent_action);
    auto it = memo_.find(mkey);
    if (it != memo_.end()) return it->second;
    const RowRef& ref = rows_[static_cast<std::size_t>(idx)];
    ad::Var v = g_.clamp_min(g_.gather(ref.log_b, ref.row, parent_action), kLogFloor);
    memo_.emplace(mkey, v);
    return v;
}

double PolicyTape::log_forward_value(const State& s, int action) {
    ad::Var v = log_forward(s, action);
    return g_.value(v);
}

double PolicyTape::log_backward_value(const State& s, int parent_action) {
    ad::Var v = log_backward(s, parent_action);
    return g_.value(v);
}

// ---------------------------------------------------------------------------
// checkpoint io: little-endian binary, bit-exact round trip

namespace {

constexpr char kMagic[4] = {'G', 'F', 'O', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x;
}

void put_f64(std::ofstream& f, double d) {
    std::uint64_t x;
    std::memcpy(&x, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &x, 8);
    return d;
}

} // namespace

void PolicyModel::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("PolicyModel::save: cannot open " + path);
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_u32(f, static_cast<std::uint32_t>(input_dim_));
    put_u32(f, static_cast<std::uint32_t>(actions_));
    put_u32(f, static_cast<std::uint32_t>(widths_.h1));
    put_u32(f, static_cast<std::uint32_t>(widths_.h2));
    put_u32(f, uniform_backward_ ? 1u : 0u);
    const auto params = named_parameters();
    put_u32(f, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(t->rows));
        put_u32(f, static_cast<std::uint32_t>(t->cols));
        for (double d : t->v) put_f64(f, d);
    }
    if (!f) throw IoError("PolicyModel::save: write failed for " + path);
}

PolicyModel PolicyModel::load(const Environment& env, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("PolicyModel::load: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IoError("PolicyModel::load: bad magic in " + path);
    if (get_u32(f) != kVersion) throw IoError("PolicyModel::load: unsupported version in " + path);
    const int input_dim = static_cast<int>(get_u32(f));
    const int actions = static_cast<int>(get_u32(f));
    PolicyWidths widths;
    widths.h1 = static_cast<int>(get_u32(f));
    widths.h2 = static_cast<int>(get_u32(f));
    const bool uniform_backward = get_u32(f) != 0;
    if (input_dim != env.encoding_dim() || actions != env.action_count()) {
        throw IoError("PolicyModel::load: checkpoint does not match the environment dimensions");
    }
    PolicyModel model(env, widths, uniform_backward, /*seed=*/0);
    auto params = model.named_parameters();
    const std::uint32_t count = get_u32(f);
    if (count != params.size()) throw IoError("PolicyModel::load: unexpected tensor count");
    for (auto& [name, t] : params) {
        const std::uint32_t name_len = get_u32(f);
        std::string stored(name_len, '\0');
        f.read(stored.data(), name_len);
        if (stored != name) throw IoError("PolicyModel::load: tensor name mismatch: " + stored);
        const int rows = static_cast<int>(get_u32(f));
        const int cols = static_cast<int>(get_u32(f));
        if (rows != t->rows || cols != t->cols) throw IoError("PolicyModel::load: tensor shape mismatch: " + stored);
        for (double& d : t->v) d = get_f64(f);
    }
    if (!f) throw IoError("PolicyModel::load: truncated file " + path);
    return model;
}

} // namespace gflowot
