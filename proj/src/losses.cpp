#include "divsynth/losses.hpp"

#include <numeric>

namespace divsynth {

void LossConfig::validate(std::size_t classes) const
{
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
    if (lambda_c.size() != 1 && lambda_c.size() != classes) {
        throw std::invalid_argument("lambda_c needs 1 or " + std::to_string(classes) + " entries");
    }
    for (double l : lambda_c)
        if (!(l >= 0.0)) throw std::invalid_argument("lambda_c entries must be >= 0");
    if (lambda_k.empty()) throw std::invalid_argument("lambda_k must not be empty");
    for (double l : lambda_k)
        if (!(l >= 0.0)) throw std::invalid_argument("lambda_k entries must be >= 0");
    if (!(std::accumulate(lambda_k.begin(), lambda_k.end(), 0.0) > 0.0)) {
        throw std::invalid_argument("lambda_k must have a positive sum");
    }
    if (!(log_epsilon > 0.0 && log_epsilon < 0.5)) throw std::invalid_argument("log epsilon must lie in (0, 0.5)");
}

std::vector<double> LossConfig::class_bounds(std::size_t classes) const
{
    if (lambda_c.size() == 1) return std::vector<double>(classes, lambda_c[0]);
    if (lambda_c.size() != classes) throw std::invalid_argument("lambda_c arity does not match class count");
    return lambda_c;
}

} // namespace divsynth
