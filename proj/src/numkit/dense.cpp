#include "grouprec/numkit/dense.hpp"

#include <cmath>
#include <string>

#include "grouprec/numkit/kernels.hpp"

namespace grouprec::nk {

std::string_view to_string(Activation a) noexcept { return a == Activation::ReLU ? "relu" : "linear"; }

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "linear") return Activation::Linear;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

void glorot_uniform(DenseLayer& layer, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (float& w : layer.weights.values()) w = static_cast<float>(rng.uniform(-s, s));
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0f);
}

namespace {

void activate(Activation act, std::span<const double> pre, std::span<double> out) {
    if (act == Activation::Linear) {
        if (out.data() != pre.data()) std::copy(pre.begin(), pre.end(), out.begin());
        return;
    }
    for (std::size_t j = 0; j < pre.size(); ++j) out[j] = pre[j] > 0.0 ? pre[j] : 0.0;
}

// dL/dpre from dL/dy. ReLU'(0) is taken as 0.
void activation_grad(Activation act, std::span<const double> pre, std::span<const double> grad_out,
                     std::vector<double>& grad_pre) {
    grad_pre.assign(grad_out.begin(), grad_out.end());
    if (act == Activation::ReLU)
        for (std::size_t j = 0; j < pre.size(); ++j)
            if (!(pre[j] > 0.0)) grad_pre[j] = 0.0;
}

}  // namespace

void dense_forward(const DenseLayer& layer, std::span<const double> x, std::span<double> pre,
                   std::span<double> out) {
    require_shape(x.size() == layer.in_dim(), "dense_forward: input has " + std::to_string(x.size()) +
                                                  " values, layer expects " + std::to_string(layer.in_dim()));
    require_shape(pre.size() == layer.out_dim() && out.size() == layer.out_dim(),
                  "dense_forward: output buffer size mismatch");
    const auto& k = kernels();
    const std::size_t n = layer.out_dim();
    for (std::size_t j = 0; j < n; ++j) pre[j] = layer.bias[j];
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) k.axpy_fd(pre.data(), x[i], layer.weights.row(i).data(), n);
    activate(layer.activation, pre, out);
}

std::vector<double> dense_forward(const DenseLayer& layer, std::span<const double> x) {
    std::vector<double> out(layer.out_dim());
    dense_forward(layer, x, out, out);
    return out;
}

void dense_forward_sparse(const DenseLayer& layer, std::span<const std::uint32_t> active, double weight,
                          std::span<double> pre, std::span<double> out) {
    require_shape(pre.size() == layer.out_dim() && out.size() == layer.out_dim(),
                  "dense_forward_sparse: output buffer size mismatch");
    const auto& k = kernels();
    const std::size_t n = layer.out_dim();
    for (std::size_t j = 0; j < n; ++j) pre[j] = layer.bias[j];
    for (std::uint32_t idx : active) {
        require_shape(idx < layer.in_dim(), "dense_forward_sparse: active index out of range");
        k.axpy_fd(pre.data(), weight, layer.weights.row(idx).data(), n);
    }
    activate(layer.activation, pre, out);
}

void dense_backward(const DenseLayer& layer, std::span<const double> x, std::span<const double> pre,
                    std::span<const double> grad_out, DenseGrad* grad, std::span<double> grad_x) {
    require_shape(x.size() == layer.in_dim(), "dense_backward: input size mismatch");
    require_shape(pre.size() == layer.out_dim(), "dense_backward: missing cached pre-activations");
    require_shape(grad_out.size() == layer.out_dim(), "dense_backward: upstream gradient size mismatch");
    const auto& k = kernels();
    const std::size_t n = layer.out_dim();
    thread_local std::vector<double> grad_pre;
    activation_grad(layer.activation, pre, grad_out, grad_pre);

    if (grad != nullptr) {
        require_shape(grad->weights.same_shape(layer.weights), "dense_backward: gradient buffer shape mismatch");
        for (std::size_t j = 0; j < n; ++j) grad->bias[j] += static_cast<float>(grad_pre[j]);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] != 0.0) k.axpy_acc_d(grad->weights.row(i).data(), x[i], grad_pre.data(), n);
    }
    if (!grad_x.empty()) {
        require_shape(grad_x.size() == layer.in_dim(), "dense_backward: grad_x size mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) grad_x[i] = k.dot_fd(layer.weights.row(i).data(), grad_pre.data(), n);
    }
}

void dense_backward_sparse(const DenseLayer& layer, std::span<const std::uint32_t> active, double weight,
                           std::span<const double> pre, std::span<const double> grad_out, DenseGrad& grad) {
    require_shape(pre.size() == layer.out_dim(), "dense_backward_sparse: missing cached pre-activations");
    require_shape(grad_out.size() == layer.out_dim(), "dense_backward_sparse: upstream gradient size mismatch");
    require_shape(grad.weights.same_shape(layer.weights), "dense_backward_sparse: gradient buffer shape mismatch");
    const auto& k = kernels();
    const std::size_t n = layer.out_dim();
    thread_local std::vector<double> grad_pre;
    activation_grad(layer.activation, pre, grad_out, grad_pre);
    for (std::size_t j = 0; j < n; ++j) grad.bias[j] += static_cast<float>(grad_pre[j]);
    for (std::uint32_t idx : active) k.axpy_acc_d(grad.weights.row(idx).data(), weight, grad_pre.data(), n);
}

DenseStack::DenseStack(std::span<const DenseLayer> layers)
    : layers_(layers), inputs_(layers.size()), pre_(layers.size()), grad_bufs_(layers.size() + 1) {
    require_shape(!layers.empty(), "DenseStack: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l > 0)
            require_shape(layers[l].in_dim() == layers[l - 1].out_dim(),
                          "DenseStack: layer " + std::to_string(l) + " input width " +
                              std::to_string(layers[l].in_dim()) + " != previous output " +
                              std::to_string(layers[l - 1].out_dim()));
        inputs_[l].resize(layers[l].in_dim());
        pre_[l].resize(layers[l].out_dim());
        grad_bufs_[l].resize(layers[l].in_dim());
    }
    output_.resize(layers.back().out_dim());
    grad_bufs_.back().resize(layers.back().out_dim());
}

std::span<const double> DenseStack::forward(std::span<const double> x) {
    last_sparse_ = false;
    inputs_[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        std::span<double> out = l + 1 < layers_.size() ? std::span<double>(inputs_[l + 1]) : std::span<double>(output_);
        dense_forward(layers_[l], inputs_[l], pre_[l], out);
    }
    return output_;
}

std::span<const double> DenseStack::forward_sparse(std::span<const std::uint32_t> active, double weight) {
    last_sparse_ = true;
    sparse_active_ = active;
    sparse_weight_ = weight;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        std::span<double> out = l + 1 < layers_.size() ? std::span<double>(inputs_[l + 1]) : std::span<double>(output_);
        if (l == 0)
            dense_forward_sparse(layers_[0], active, weight, pre_[0], out);
        else
            dense_forward(layers_[l], inputs_[l], pre_[l], out);
    }
    return output_;
}

std::span<const double> DenseStack::backward(std::span<const double> grad_out, std::span<DenseGrad> grads) {
    require_shape(grads.empty() || grads.size() == layers_.size(), "DenseStack::backward: gradient count mismatch");
    std::vector<double>& top = grad_bufs_.back();
    top.assign(grad_out.begin(), grad_out.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        DenseGrad* g = grads.empty() ? nullptr : &grads[l];
        if (l == 0 && last_sparse_) {
            if (g != nullptr) dense_backward_sparse(layers_[0], sparse_active_, sparse_weight_, pre_[0], grad_bufs_[1], *g);
            return {};
        }
        const std::span<const double> upstream = grad_bufs_[l + 1];
        // grad_x of the first layer is only needed when someone asks for it
        dense_backward(layers_[l], inputs_[l], pre_[l], upstream, g, grad_bufs_[l]);
    }
    return grad_bufs_[0];
}

void DenseStack::activation_pattern(std::vector<bool>& out) const {
    out.clear();
    for (std::size_t l = 0; l < layers_.size(); ++l)
        if (layers_[l].activation == Activation::ReLU)
            for (double p : pre_[l]) out.push_back(p > 0.0);
}

}  // namespace grouprec::nk
