#include "grouprec/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grouprec/numkit/matrix.hpp"

namespace grouprec::nk {

double relative_error(double analytic, double numeric) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<float> params,
                           std::span<const float> analytic, Rng& rng, GradCheckOptions options,
                           const std::function<void(std::vector<bool>&)>& pattern) {
    require_shape(params.size() == analytic.size(), "grad_check: analytic gradient size mismatch");
    GradCheckResult result;
    if (params.empty()) return result;

    std::vector<bool> base_pattern, plus_pattern, minus_pattern;
    if (pattern) {
        loss();
        pattern(base_pattern);
    }

    // Sampling order: a seeded permutation so each coordinate is tried once.
    std::vector<std::size_t> order(params.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t idx : order) {
        if (result.checked >= options.samples) break;
        const float original = params[idx];
        const float up = static_cast<float>(original + options.step);
        const float down = static_cast<float>(original - options.step);

        params[idx] = up;
        const double f_up = loss();
        if (pattern) pattern(plus_pattern);
        params[idx] = down;
        const double f_down = loss();
        if (pattern) pattern(minus_pattern);
        params[idx] = original;

        if (pattern && (plus_pattern != base_pattern || minus_pattern != base_pattern)) {
            ++result.skipped_kinks;
            continue;
        }
        // use the actually representable step
        const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
        result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[idx], numeric));
        ++result.checked;
    }
    return result;
}

}  // namespace grouprec::nk
