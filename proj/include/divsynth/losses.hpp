#pragma once

#include "divsynth/autodiff.hpp"
#include "divsynth/layout.hpp"
#include "divsynth/models.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace divsynth {

/// Loss hyperparameters. lambda_c holds either one value for every class or
/// one per class.
struct LossConfig {
    double alpha = 100.0;
    double beta = 10.0;
    std::vector<double> lambda_c{0.3};
    std::vector<double> lambda_k{0.5, 0.5};
    double log_epsilon = 1e-7;

    void validate(std::size_t classes) const;
    /// lambda_c expanded to one entry per class.
    std::vector<double> class_bounds(std::size_t classes) const;
};

// All image distances are mean-normalized: global L1 averages |a-b| over every
// pixel and channel, segmentwise L1 over the pixels of one class (3 channels).
namespace losses {

template <typename T>
Var<T> global_l1(const Var<T>& a, const Var<T>& b)
{
    return ops::mean(ops::abs(ops::sub(a, b)));
}

/// Mean |a-b| over class-c pixels; 0 if c is absent from the layout.
template <typename T>
Var<T> segmentwise_l1(const Var<T>& a, const Var<T>& b, const SemanticLayout& layout, std::size_t cls)
{
    if (cls >= layout.class_count()) {
        throw std::invalid_argument("segmentwise_l1: class " + std::to_string(cls) + " outside [0," +
                                    std::to_string(layout.class_count()) + ")");
    }
    if (a.shape().at(1) != layout.height() || a.shape().at(2) != layout.width()) {
        throw ShapeError("segmentwise_l1: image " + shape_string(a.shape()) + " vs layout " +
                         std::to_string(layout.height()) + "x" + std::to_string(layout.width()));
    }
    return ops::masked_mean(ops::abs(ops::sub(a, b)), class_mask<T>(layout, cls, a.shape()[0]));
}

/// mean log D(l,i) + mean log(1 - D(l,G(l,n))). The discriminator step
/// maximizes this value.
template <typename T>
Var<T> loss_discriminator(const Var<T>& d_real, const Var<T>& d_fake, T epsilon)
{
    const T lo = epsilon, hi = T(1) - epsilon;
    const Var<T> real_term = ops::mean(ops::log_clamped(d_real, lo, hi));
    const Var<T> fake_term = ops::mean(ops::log_clamped(ops::add_scalar(ops::scale(d_fake, T(-1)), T(1)), lo, hi));
    return ops::add(real_term, fake_term);
}

/// mean log(1 - D(l,G(l,n))) + alpha * L1(G(l,n), i).
template <typename T>
Var<T> loss_generator(const Var<T>& d_fake, const Var<T>& fake, const Var<T>& real, T alpha, T epsilon)
{
    const T lo = epsilon, hi = T(1) - epsilon;
    const Var<T> adv = ops::mean(ops::log_clamped(ops::add_scalar(ops::scale(d_fake, T(-1)), T(1)), lo, hi));
    return ops::add(adv, ops::scale(global_l1(fake, real), alpha));
}

/// sum_k lambda_k * mean |Phi_k(fake) - Phi_k(real)| given precomputed features.
template <typename T>
Var<T> loss_content(const std::vector<Var<T>>& fake_features, const std::vector<Var<T>>& real_features,
                    const std::vector<double>& lambda_k)
{
    if (fake_features.size() != real_features.size() || fake_features.size() != lambda_k.size() ||
        fake_features.empty()) {
        throw std::invalid_argument("loss_content: need one weight per feature stage");
    }
    Var<T> total = ops::scale(global_l1(fake_features[0], real_features[0]), static_cast<T>(lambda_k[0]));
    for (std::size_t k = 1; k < fake_features.size(); ++k) {
        total = ops::add(total, ops::scale(global_l1(fake_features[k], real_features[k]), static_cast<T>(lambda_k[k])));
    }
    return total;
}

template <typename T>
Var<T> loss_content(const FeatureExtractor& phi, const Var<T>& fake, const Var<T>& real,
                    const std::vector<double>& lambda_k)
{
    Tape<T>& tape = *fake.tape();
    return loss_content(phi.features(tape, fake), phi.features(tape, real), lambda_k);
}

/// Best-of-n content loss: the minimum over outputs, so only the output
/// closest to the target receives gradient. Ties go to the lowest index.
template <typename T>
Var<T> loss_hindsight(const FeatureExtractor& phi, const std::vector<Var<T>>& outputs, const Var<T>& real,
                      const std::vector<double>& lambda_k, std::size_t* chosen = nullptr)
{
    if (outputs.empty()) throw std::invalid_argument("loss_hindsight: no outputs");
    Tape<T>& tape = *real.tape();
    const auto real_features = phi.features(tape, real);
    std::size_t best = 0;
    Var<T> best_loss;
    for (std::size_t j = 0; j < outputs.size(); ++j) {
        Var<T> l = loss_content(phi.features(tape, outputs[j]), real_features, lambda_k);
        if (j == 0 || l.value().item() < best_loss.value().item()) {
            best = j;
            best_loss = l;
        }
    }
    if (chosen) *chosen = best;
    return best_loss;
}

/// -(mean_c |n^c|) * L1(G(l,0), G(l,n)).
template <typename T>
Var<T> diversity_unconditional(const Var<T>& g0, const Var<T>& gn, const NoiseVector& noise)
{
    return ops::scale(global_l1(g0, gn), static_cast<T>(-noise.mean_abs()));
}

/// -sum_c |n^c| * L1_c(G(l,0), G(l,n)) over classes present in the layout.
template <typename T>
Var<T> diversity_segmentwise(const Var<T>& g0, const Var<T>& gn, const SemanticLayout& layout,
                             const NoiseVector& noise)
{
    if (noise.size() != layout.class_count()) throw ShapeError("diversity: noise arity does not match class count");
    Var<T> total = g0.tape()->constant(Tensor<T>::scalar(T(0)));
    for (std::size_t c : layout.present_classes()) {
        const T weight = static_cast<T>(-std::abs(noise[c]));
        total = ops::add(total, ops::scale(segmentwise_l1(g0, gn, layout, c), weight));
    }
    return total;
}

/// sum_c |n^c| * max(0, lambda_c - L1_c(G(l,0), G(l,n))). Absent classes add 0.
template <typename T>
Var<T> diversity_hinged(const Var<T>& g0, const Var<T>& gn, const SemanticLayout& layout, const NoiseVector& noise,
                        const std::vector<double>& lambda_c)
{
    if (noise.size() != layout.class_count()) throw ShapeError("diversity: noise arity does not match class count");
    if (lambda_c.size() != layout.class_count()) {
        throw std::invalid_argument("diversity_hinged: need one bound per class");
    }
    Var<T> total = g0.tape()->constant(Tensor<T>::scalar(T(0)));
    for (std::size_t c : layout.present_classes()) {
        if (lambda_c[c] < 0.0) throw std::invalid_argument("diversity_hinged: negative bound");
        const Var<T> dist = segmentwise_l1(g0, gn, layout, c);
        const Var<T> gap = ops::relu(ops::add_scalar(ops::scale(dist, T(-1)), static_cast<T>(lambda_c[c])));
        total = ops::add(total, ops::scale(gap, static_cast<T>(std::abs(noise[c]))));
    }
    return total;
}

/// base + beta * div.
template <typename T>
Var<T> objective_combined(const Var<T>& base, const Var<T>& div, T beta)
{
    if (!(beta >= T(0))) throw std::invalid_argument("objective_combined: beta must be >= 0");
    return ops::add(base, ops::scale(div, beta));
}

} // namespace losses

} // namespace divsynth
