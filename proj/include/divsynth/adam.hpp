#pragma once

#include "divsynth/parameters.hpp"

#include <cstdint>
#include <vector>

namespace divsynth {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// First/second moment buffers in parameter-set order, plus the step count.
struct AdamState {
    std::vector<Tensor<float>> m;
    std::vector<Tensor<float>> v;
    std::uint64_t t = 0;

    static AdamState zeros_like(const ParameterSet& params);
};

/// One bias-corrected Adam step. Throws NonFiniteError, leaving params and
/// state untouched, if any gradient entry is NaN or infinite.
void adam_update(ParameterSet& params, const std::vector<Tensor<float>>& grads, AdamState& state,
                 const AdamConfig& config);

/// Euclidean norm over all gradient entries.
double gradient_norm(const std::vector<Tensor<float>>& grads);

} // namespace divsynth
