#include "grouprec/numkit/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "grouprec/numkit/kernels.hpp"
#include "grouprec/numkit/matrix.hpp"

namespace grouprec::nk {

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, float lr) {
    require_shape(params.size() == grads.size(), "adam_step: gradient size != parameter size");
    require_shape(state.m.size() == params.size() && state.v.size() == params.size(),
                  "adam_step: moment buffers do not match parameter block");
    for (float g : grads)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient (training diverged)");

    state.t += 1;
    const double t = static_cast<double>(state.t);
    AdamCoeffs c{};
    c.lr = lr;
    c.beta1 = state.beta1;
    c.beta2 = state.beta2;
    c.epsilon = state.epsilon;
    c.bias_correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
    c.bias_correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
    kernels().adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(), c);
}

AdamOptimizer::AdamOptimizer(std::vector<ParamBlock> blocks, float lr) : blocks_(std::move(blocks)), lr_(lr) {
    if (!(lr > 0.0f)) throw std::invalid_argument("AdamOptimizer: learning rate must be > 0");
    states_.reserve(blocks_.size());
    for (const auto& b : blocks_) {
        require_shape(b.value.size() == b.grad.size(), "AdamOptimizer: gradient buffer size mismatch");
        states_.emplace_back(b.value.size());
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& b : blocks_) std::fill(b.grad.begin(), b.grad.end(), 0.0f);
}

void AdamOptimizer::step() {
    for (std::size_t i = 0; i < blocks_.size(); ++i) adam_step(blocks_[i].value, blocks_[i].grad, states_[i], lr_);
}

}  // namespace grouprec::nk
