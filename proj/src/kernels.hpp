#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace gflowot::ad {

// Shared numeric kernels. The tape ops and the tape-free policy evaluation
// both call these, so a value computed either way is bit-identical (fixed
// accumulation order, no FMA contraction surprises between call sites).

// y[j] = sum_k x[k] * w[j*in + k] + b[j]; w is (out x in) row-major.
inline void linear_row(const double* x, const double* w, const double* b, int in, int out, double* y) {
    for (int j = 0; j < out; ++j) {
        const double* wr = w + static_cast<std::size_t>(j) * in;
        double acc = 0.0;
        for (int k = 0; k < in; ++k) acc += x[k] * wr[k];
        y[j] = acc + b[j];
    }
}

inline void leaky_relu_row(const double* x, int n, double slope, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

// Max-shifted masked log-softmax over one row. Masked-off lanes get a -inf
// sentinel and probability 0. Requires at least one valid lane.
// probs may be null when the caller does not need them.
inline bool masked_log_softmax_row(const double* x, const std::uint8_t* mask, int n, double* out, double* probs) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int i = 0; i < n; ++i) {
        if (mask[i] && x[i] > mx) mx = x[i];
        if (mask[i]) any = true;
    }
    if (!any) return false;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (mask[i]) sum += std::exp(x[i] - mx);
    }
    const double lse = std::log(sum);
    for (int i = 0; i < n; ++i) {
        if (mask[i]) {
            out[i] = x[i] - mx - lse;
            if (probs) probs[i] = std::exp(out[i]);
        } else {
            out[i] = -std::numeric_limits<double>::infinity();
            if (probs) probs[i] = 0.0;
        }
    }
    return true;
}

} // namespace gflowot::ad
