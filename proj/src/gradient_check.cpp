#include "divsynth/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace divsynth {

namespace {

double evaluate(const ScalarFunction& fn, const Tensor<double>& x)
{
    Tape<double> tape;
    const Var<double> out = fn(tape, tape.constant(x));
    const double v = out.value().item();
    if (!std::isfinite(v)) throw NonFiniteError("gradient_check: function value is not finite");
    return v;
}

double relative_error(double a, double n)
{
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

} // namespace

GradientCheckReport gradient_check(const ScalarFunction& fn, const Tensor<double>& point, double step,
                                   double tolerance, FiniteDifference mode)
{
    if (!(step > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");

    Tape<double> tape;
    const Var<double> x = tape.variable(point);
    const Var<double> out = fn(tape, x);
    if (out.size() != 1) throw ShapeError("gradient_check: function must return a scalar");
    if (!std::isfinite(out.value().item())) throw NonFiniteError("gradient_check: function value is not finite");
    tape.backward(out);
    const Tensor<double> analytic = tape.grad(x);

    GradientCheckReport report;
    Tensor<double> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double orig = point[i];
        probe[i] = orig + step;
        const double fp = evaluate(fn, probe);
        probe[i] = orig - step;
        const double fm = evaluate(fn, probe);
        probe[i] = orig;

        double numeric = (fp - fm) / (2.0 * step);
        double err = relative_error(analytic[i], numeric);
        if (mode == FiniteDifference::one_sided) {
            const double f0 = evaluate(fn, probe);
            const double forward = (fp - f0) / step;
            const double backward = (f0 - fm) / step;
            const double ef = relative_error(analytic[i], forward);
            const double eb = relative_error(analytic[i], backward);
            if (ef <= eb) {
                numeric = forward;
                err = ef;
            } else {
                numeric = backward;
                err = eb;
            }
        }
        if (err > report.max_relative_error || i == 0) {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_relative_error <= tolerance;
    return report;
}

} // namespace divsynth
