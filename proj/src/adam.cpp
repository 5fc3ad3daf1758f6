#include "adam.hpp"

#include <cmath>

#include "errors.hpp"

namespace gflowot {

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
        throw InvalidArgument("Adam: invalid hyperparameters");
    }
}

void Adam::add_group(std::span<ad::Tensor* const> params, double lr) {
    if (!(lr > 0.0)) throw InvalidArgument("Adam::add_group: learning rate must be positive");
    if (t_ != 0) throw InvalidArgument("Adam::add_group: groups must be registered before stepping");
    for (ad::Tensor* p : params) {
        Slot s;
        s.param = p;
        s.lr = lr;
        s.m.assign(p->v.size(), 0.0);
        s.v.assign(p->v.size(), 0.0);
        params_.push_back(std::move(s));
    }
}

void Adam::step(std::span<const ad::Tensor> grads) {
    if (grads.size() != params_.size()) throw InvalidArgument("Adam::step: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t s = 0; s < params_.size(); ++s) {
        Slot& slot = params_[s];
        const ad::Tensor& g = grads[s];
        if (g.rows != slot.param->rows || g.cols != slot.param->cols) {
            throw InvalidArgument("Adam::step: gradient shape mismatch");
        }
        for (std::size_t i = 0; i < slot.m.size(); ++i) {
            const double gi = g.v[i];
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            slot.param->v[i] -= slot.lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

} // namespace gflowot
