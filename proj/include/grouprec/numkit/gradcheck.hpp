#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "grouprec/numkit/rng.hpp"

namespace grouprec::nk {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  // coordinates whose +-step crossed a ReLU kink
};

struct GradCheckOptions {
    std::size_t samples = 100;
    double step = 1e-3;
};

/// Compares `analytic` (dLoss/dparams at the current point) against central
/// finite differences on randomly sampled coordinates of `params`.
///
/// `loss` re-evaluates the model with whatever is currently in `params`.
/// When `pattern` is given it must report the ReLU on/off pattern of the
/// last `loss` call; coordinates whose perturbation flips the pattern are
/// resampled since the function is not differentiable across them.
///
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const std::function<double()>& loss, std::span<float> params,
                           std::span<const float> analytic, Rng& rng, GradCheckOptions options = {},
                           const std::function<void(std::vector<bool>&)>& pattern = {});

double relative_error(double analytic, double numeric) noexcept;

}  // namespace grouprec::nk
