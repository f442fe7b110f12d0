#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace grouprec::nk {

struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
    std::uint64_t t = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0f), v(n, 0.0f) {}
};

/// One bias-corrected Adam step on a parameter block. Throws on a
/// non-finite gradient (surfaced by the trainer as divergence).
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, float lr);

/// A parameter block and its gradient buffer.
struct ParamBlock {
    std::span<float> value;
    std::span<float> grad;
};

/// Adam over several blocks sharing one step counter.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ParamBlock> blocks, float lr);

    void zero_grad();
    void step();

    std::uint64_t steps() const noexcept { return states_.empty() ? 0 : states_.front().t; }
    std::span<const ParamBlock> blocks() const noexcept { return blocks_; }

private:
    std::vector<ParamBlock> blocks_;
    std::vector<AdamState> states_;
    float lr_;
};

}  // namespace grouprec::nk
