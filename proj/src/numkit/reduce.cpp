#include "grouprec/numkit/reduce.hpp"

namespace grouprec::nk {

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t kBlock = 32;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace grouprec::nk
