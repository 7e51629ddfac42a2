#include "divsynth/parameters.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace divsynth {

void ParameterSet::add(std::string name, Tensor<float> value)
{
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(NamedTensor{std::move(name), std::move(value)});
}

const Tensor<float>& ParameterSet::get(std::string_view name) const
{
    return entries_[index_of(name)].value;
}

std::size_t ParameterSet::index_of(std::string_view name) const
{
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
    return it->second;
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const NamedTensor& e : entries_) n += e.value.size();
    return n;
}

void ParameterSet::assign_from(const std::vector<NamedTensor>& source, std::string_view prefix)
{
    std::set<std::string> seen;
    for (const NamedTensor& e : source) {
        if (e.name.compare(0, prefix.size(), prefix) != 0) continue;
        const std::string local = e.name.substr(prefix.size());
        const auto it = index_.find(local);
        if (it == index_.end()) throw std::runtime_error("unknown tensor name " + e.name);
        Tensor<float>& dst = entries_[it->second].value;
        if (dst.shape() != e.value.shape()) {
            throw ShapeError("tensor " + e.name + " has shape " + shape_string(e.value.shape()) + ", model expects " +
                             shape_string(dst.shape()));
        }
        dst = e.value;
        seen.insert(local);
    }
    for (const NamedTensor& e : entries_) {
        if (!seen.count(e.name)) throw std::runtime_error("missing tensor " + std::string(prefix) + e.name);
    }
}

std::vector<NamedTensor> ParameterSet::with_prefix(std::string_view prefix) const
{
    std::vector<NamedTensor> out;
    out.reserve(entries_.size());
    for (const NamedTensor& e : entries_) out.push_back(NamedTensor{std::string(prefix) + e.name, e.value});
    return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b)
{
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
}

void add_conv(ParameterSet& ps, const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k,
              float slope, Rng& rng)
{
    const double fan_in = static_cast<double>(cin * k * k);
    const double bound = std::sqrt(6.0 / ((1.0 + double(slope) * slope) * fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<float> w(Shape{cout, cin, k, k});
    for (float& v : w.data()) v = static_cast<float>(dist(rng));
    ps.add(prefix + ".w", std::move(w));
    ps.add(prefix + ".b", Tensor<float>(Shape{cout}, 0.0f));
}

void add_norm(ParameterSet& ps, const std::string& prefix, std::size_t channels)
{
    ps.add(prefix + ".g", Tensor<float>(Shape{channels}, 1.0f));
    ps.add(prefix + ".beta", Tensor<float>(Shape{channels}, 0.0f));
}

} // namespace divsynth
