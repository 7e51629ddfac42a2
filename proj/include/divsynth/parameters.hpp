#pragma once

#include "divsynth/autodiff.hpp"
#include "divsynth/layout.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace divsynth {

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

/// Ordered, named collection of 32-bit parameter tensors.
class ParameterSet {
public:
    void add(std::string name, Tensor<float> value);

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
    std::vector<NamedTensor>& entries() noexcept { return entries_; }

    const Tensor<float>& get(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    std::size_t scalar_count() const;

    /// Copies values from `source` entries named prefix + <param name>.
    /// Unknown names under the prefix, missing names and shape mismatches throw.
    void assign_from(const std::vector<NamedTensor>& source, std::string_view prefix);
    std::vector<NamedTensor> with_prefix(std::string_view prefix) const;

    friend bool operator==(const ParameterSet& a, const ParameterSet& b);

private:
    std::vector<NamedTensor> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Places every parameter of a set on a tape, as variables when trainable and
/// as constants otherwise.
template <typename T>
class BoundParameters {
public:
    BoundParameters(Tape<T>& tape, const ParameterSet& params, bool trainable) : params_(&params)
    {
        vars_.reserve(params.size());
        for (const NamedTensor& e : params.entries()) {
            Tensor<T> v = e.value.template cast<T>();
            vars_.push_back(trainable ? tape.variable(std::move(v)) : tape.constant(std::move(v)));
        }
    }

    Var<T> operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }
    const std::vector<Var<T>>& vars() const noexcept { return vars_; }

    /// Gradients of the last backward() w.r.t. each parameter, in set order.
    std::vector<Tensor<float>> gradients() const
    {
        std::vector<Tensor<float>> out;
        out.reserve(vars_.size());
        for (const Var<T>& v : vars_) out.push_back(v.tape()->grad(v).template cast<float>());
        return out;
    }

private:
    const ParameterSet* params_;
    std::vector<Var<T>> vars_;
};

/// Kaiming-uniform conv kernel [cout,cin,k,k] and zero bias, named <prefix>.w / <prefix>.b.
void add_conv(ParameterSet& ps, const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k,
              float slope, Rng& rng);
/// Layer-norm gain (ones) and bias (zeros), named <prefix>.g / <prefix>.beta.
void add_norm(ParameterSet& ps, const std::string& prefix, std::size_t channels);

} // namespace divsynth
