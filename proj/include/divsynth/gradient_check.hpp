#pragma once

#include "divsynth/autodiff.hpp"

#include <functional>
#include <stdexcept>

namespace divsynth {

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FiniteDifference {
    central,
    /// Accept the analytic derivative if it matches either the forward or the
    /// backward difference. Used at points sitting on a kink (hinge, abs).
    one_sided,
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool passed = false;
};

using ScalarFunction = std::function<Var<double>(Tape<double>&, Var<double>)>;

/// Compares the reverse-mode gradient of fn at point with finite differences
/// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradientCheckReport gradient_check(const ScalarFunction& fn, const Tensor<double>& point, double step,
                                   double tolerance, FiniteDifference mode = FiniteDifference::central);

} // namespace divsynth
