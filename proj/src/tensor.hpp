#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"

namespace gflowot::ad {

// Dense 2-D tensor of doubles, row-major. Vectors are 1xN, scalars 1x1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(int r, int c, bool rg = false) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0), requires_grad(rg) {
        if (r < 0 || c < 0) throw InvalidArgument("Tensor: negative dimension");
    }

    static Tensor scalar(double x, bool rg = false) {
        Tensor t(1, 1, rg);
        t.v[0] = x;
        return t;
    }

    int size() const { return rows * cols; }

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }

    std::span<double> row(int i) { return {v.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int i) const {
        return {v.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
    }
};

} // namespace gflowot::ad
