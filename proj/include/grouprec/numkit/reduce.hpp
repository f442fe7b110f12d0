#pragma once

#include <cstddef>
#include <span>

namespace grouprec::nk {

/// Pairwise (cascade) summation; result depends only on the values and
/// their order, never on threading.
double pairwise_sum(std::span<const double> values) noexcept;

inline double pairwise_mean(std::span<const double> values) noexcept {
    return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace grouprec::nk
