#include "divsynth/adam.hpp"
#include "divsynth/gradient_check.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace divsynth {

void AdamConfig::validate() const
{
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam beta2 must lie in [0,1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam epsilon must be > 0");
}

AdamState AdamState::zeros_like(const ParameterSet& params)
{
    AdamState s;
    for (const NamedTensor& e : params.entries()) {
        s.m.emplace_back(e.value.shape(), 0.0f);
        s.v.emplace_back(e.value.shape(), 0.0f);
    }
    return s;
}

void adam_update(ParameterSet& params, const std::vector<Tensor<float>>& grads, AdamState& state,
                 const AdamConfig& config)
{
    auto& entries = params.entries();
    if (grads.size() != entries.size() || state.m.size() != entries.size() || state.v.size() != entries.size()) {
        throw std::invalid_argument("adam: " + std::to_string(grads.size()) + " gradients and " +
                                    std::to_string(state.m.size()) + " moment buffers for " +
                                    std::to_string(entries.size()) + " parameters");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Shape& s = entries[i].value.shape();
        if (grads[i].shape() != s || state.m[i].shape() != s || state.v[i].shape() != s) {
            throw ShapeError("adam: shape mismatch for " + entries[i].name);
        }
        if (!grads[i].all_finite()) {
            throw NonFiniteError("adam: non-finite gradient for parameter " + entries[i].name + " at step " +
                                 std::to_string(state.t + 1));
        }
    }

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto p = entries[i].value.data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        const auto g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            const double vj = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            p[j] = static_cast<float>(p[j] - config.lr * (mj / c1) / (std::sqrt(vj / c2) + config.eps));
        }
    }
}

double gradient_norm(const std::vector<Tensor<float>>& grads)
{
    double acc = 0.0;
    for (const auto& g : grads)
        for (float v : g.data()) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
}

} // namespace divsynth
