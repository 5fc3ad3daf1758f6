#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace gflowot {

// Adam with per-group learning rates and shared (beta1, beta2, eps). Groups
// register once; step() consumes gradients aligned with the concatenation of
// all registered parameters in registration order.
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void add_group(std::span<ad::Tensor* const> params, double lr);
    void step(std::span<const ad::Tensor> grads);
    std::int64_t steps_taken() const { return t_; }
    std::size_t parameter_count() const { return params_.size(); }

private:
    struct Slot {
        ad::Tensor* param;
        double lr;
        std::vector<double> m;
        std::vector<double> v;
    };

    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Slot> params_;
};

} // namespace gflowot
