#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "grouprec/numkit/matrix.hpp"
#include "grouprec/numkit/rng.hpp"

namespace grouprec::nk {

enum class Activation { ReLU, Linear };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view s);

/// y = act(x^T W + b), W stored in_dim x out_dim.
struct DenseLayer {
    Matrix weights;
    std::vector<float> bias;
    Activation activation = Activation::ReLU;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
        : weights(in_dim, out_dim), bias(out_dim, 0.0f), activation(act) {}

    std::size_t in_dim() const noexcept { return weights.rows(); }
    std::size_t out_dim() const noexcept { return weights.cols(); }
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    bool operator==(const DenseLayer&) const = default;
};

/// Uniform(-s, s), s = sqrt(6 / (in + out)); zero bias.
void glorot_uniform(DenseLayer& layer, Rng& rng);

/// Gradient buffers shaped like a DenseLayer.
struct DenseGrad {
    Matrix weights;
    std::vector<float> bias;

    DenseGrad() = default;
    explicit DenseGrad(const DenseLayer& layer)
        : weights(layer.in_dim(), layer.out_dim()), bias(layer.out_dim(), 0.0f) {}

    void zero() {
        weights.fill(0.0f);
        std::fill(bias.begin(), bias.end(), 0.0f);
    }
};

/// Forward pass. `pre` receives the pre-activation values needed by
/// dense_backward; `out` may alias `pre`.
void dense_forward(const DenseLayer& layer, std::span<const double> x, std::span<double> pre,
                   std::span<double> out);

std::vector<double> dense_forward(const DenseLayer& layer, std::span<const double> x);

/// Forward pass for a multi-hot input: x is zero everywhere except `active`,
/// where it equals `weight`. Costs O(|active| * out_dim).
void dense_forward_sparse(const DenseLayer& layer, std::span<const std::uint32_t> active, double weight,
                          std::span<double> pre, std::span<double> out);

/// Backward pass. Accumulates dL/dW and dL/db into `grad` (skipped when null)
/// and writes dL/dx into `grad_x` (skipped when empty). `grad_out` is dL/dy.
void dense_backward(const DenseLayer& layer, std::span<const double> x, std::span<const double> pre,
                    std::span<const double> grad_out, DenseGrad* grad, std::span<double> grad_x);

/// Backward counterpart of dense_forward_sparse. Only rows in `active` of
/// grad->weights are touched; no input gradient is produced.
void dense_backward_sparse(const DenseLayer& layer, std::span<const std::uint32_t> active, double weight,
                           std::span<const double> pre, std::span<const double> grad_out, DenseGrad& grad);

/// A stack of dense layers with its activation scratch.
class DenseStack {
public:
    explicit DenseStack(std::span<const DenseLayer> layers);

    /// Runs the stack on x; returns the final output.
    std::span<const double> forward(std::span<const double> x);
    std::span<const double> forward_sparse(std::span<const std::uint32_t> active, double weight);

    /// Back-propagates dL/dy through the last forward call. `grads` may be
    /// empty (frozen stack). Returns dL/dx (empty after forward_sparse).
    std::span<const double> backward(std::span<const double> grad_out, std::span<DenseGrad> grads);

    /// ReLU on/off pattern of the last forward call.
    void activation_pattern(std::vector<bool>& out) const;

private:
    std::span<const DenseLayer> layers_;
    std::vector<std::vector<double>> inputs_;  // input to each layer
    std::vector<std::vector<double>> pre_;
    std::vector<double> output_;
    std::vector<std::vector<double>> grad_bufs_;
    std::span<const std::uint32_t> sparse_active_;
    double sparse_weight_ = 0.0;
    bool last_sparse_ = false;
};

}  // namespace grouprec::nk
