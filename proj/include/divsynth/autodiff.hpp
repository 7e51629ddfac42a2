#pragma once

#include "divsynth/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace divsynth {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const { return tape_->value(*this); }
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    std::size_t id() const noexcept { return id_; }
    Tape<T>* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording. Nodes are appended in evaluation order, which is a
/// topological order, so backward() walks the node list from the root down.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}); }
    Var<T> variable(Tensor<T> value) { return push(std::move(value), true, {}); }

    /// Records the result of a primitive. The node requires a gradient iff any
    /// parent does; otherwise the backward closure is dropped.
    Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, Backward backward)
    {
        bool needs = false;
        for (const Var<T>& p : parents) {
            check_owner(p);
            needs = needs || nodes_[p.id()].requires_grad;
        }
        return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, Backward backward)
    {
        bool needs = false;
        for (const Var<T>& p : parents) {
            check_owner(p);
            needs = needs || nodes_[p.id()].requires_grad;
        }
        return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    const Tensor<T>& value(const Var<T>& v) const
    {
        check_owner(v);
        return nodes_[v.id()].value;
    }

    bool requires_grad(const Var<T>& v) const
    {
        check_owner(v);
        return nodes_[v.id()].requires_grad;
    }

    /// Gradient buffer to accumulate into. Callers must only use it for nodes
    /// that require a gradient.
    std::span<T> grad_buffer(const Var<T>& v)
    {
        Node& n = nodes_[v.id()];
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.value.shape(), T(0));
            n.has_grad = true;
        }
        return n.grad.data();
    }

    /// Gradient of the last backward() root w.r.t. v; zeros if v was not reached.
    Tensor<T> grad(const Var<T>& v) const
    {
        check_owner(v);
        const Node& n = nodes_[v.id()];
        if (!n.has_grad) return Tensor<T>(n.value.shape(), T(0));
        return n.grad;
    }

    void backward(const Var<T>& root)
    {
        check_owner(root);
        if (nodes_[root.id()].value.size() != 1) {
            throw ShapeError("backward() needs a scalar root, got shape " +
                             shape_string(nodes_[root.id()].value.shape()));
        }
        for (Node& n : nodes_) {
            n.has_grad = false;
            n.grad = Tensor<T>();
        }
        if (!nodes_[root.id()].requires_grad) return;
        grad_buffer(root)[0] = T(1);
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        bool has_grad = false;
        Backward backward;
    };

    Var<T> push(Tensor<T> value, bool requires_grad, Backward backward)
    {
        nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, false, std::move(backward)});
        return Var<T>(this, nodes_.size() - 1);
    }

    void check_owner(const Var<T>& v) const
    {
        if (v.tape() != this || v.id() >= nodes_.size()) {
            throw std::logic_error("variable does not belong to this tape");
        }
    }

    // deque keeps references to node values stable while new nodes are appended
    std::deque<Node> nodes_;
};

namespace ops {

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

template <typename T>
void require_rank(const Var<T>& a, std::size_t rank, const char* op)
{
    if (a.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(a.shape()));
    }
}

} // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    detail::require_same_shape(a, b, "add");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
        for (const Var<T>& p : {a, b}) {
            if (!t.requires_grad(p)) continue;
            auto dst = t.grad_buffer(p);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    detail::require_same_shape(a, b, "sub");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(a)) {
            auto dst = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        if (t.requires_grad(b)) {
            auto dst = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    detail::require_same_shape(a, b, "mul");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = a.value();
        const Tensor<T>& bv = b.value();
        if (t.requires_grad(a)) {
            auto dst = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            auto dst = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s)
{
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * s;
    return x.tape()->record(std::move(out), {x}, [x, s](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * s;
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s)
{
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + s;
    return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

/// Shared implementation of elementwise maps whose derivative depends on the input only.
template <typename T, typename F, typename D>
Var<T> elementwise(const Var<T>& x, F f, D dfdx)
{
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return x.tape()->record(std::move(out), {x}, [x, dfdx](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = x.value();
        auto dst = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dfdx(xv[i]);
    });
}

template <typename T>
Var<T> abs(const Var<T>& x)
{
    return elementwise(
        x, [](T v) { return std::abs(v); },
        [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

/// max(0, x). Subgradient at 0 is 0.
template <typename T>
Var<T> relu(const Var<T>& x)
{
    return elementwise(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope)
{
    if (!(slope >= T(0) && slope < T(1))) {
        throw std::invalid_argument("leaky_relu: slope must lie in [0,1)");
    }
    return elementwise(
        x, [slope](T v) { return v >= T(0) ? v : slope * v; },
        [slope](T v) { return v >= T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x)
{
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = xv[i];
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }
    Tape<T>& tape = *x.tape();
    const std::size_t self = tape.size();
    return tape.record(std::move(out), {x}, [x, self](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& y = t.value(Var<T>(&t, self));
        auto dst = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i] * (T(1) - y[i]);
    });
}

/// log(clamp(x, lo, hi)); zero gradient where the clamp is active.
template <typename T>
Var<T> log_clamped(const Var<T>& x, T lo, T hi)
{
    if (!(lo > T(0) && lo <= hi)) throw std::invalid_argument("log_clamped: need 0 < lo <= hi");
    return elementwise(
        x, [lo, hi](T v) { return std::log(std::clamp(v, lo, hi)); },
        [lo, hi](T v) { return (v > lo && v < hi) ? T(1) / v : T(0); });
}

template <typename T>
Var<T> sum(const Var<T>& x)
{
    const Tensor<T>& xv = x.value();
    T acc = T(0);
    for (T v : xv.data()) acc += v;
    return x.tape()->record(Tensor<T>::scalar(acc), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (T& d : dst) d += g[0];
    });
}

template <typename T>
Var<T> mean(const Var<T>& x)
{
    const Tensor<T>& xv = x.value();
    T acc = T(0);
    for (T v : xv.data()) acc += v;
    const T inv = T(1) / static_cast<T>(xv.size());
    return x.tape()->record(Tensor<T>::scalar(acc * inv), {x}, [x, inv](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (T& d : dst) d += g[0] * inv;
    });
}

/// sum(x * mask) / sum(mask) for a 0/1 mask; 0 when the mask is empty.
template <typename T>
Var<T> masked_mean(const Var<T>& x, const Tensor<T>& mask)
{
    if (x.shape() != mask.shape()) {
        throw ShapeError("masked_mean: input " + shape_string(x.shape()) + " vs mask " +
                         shape_string(mask.shape()));
    }
    const Tensor<T>& xv = x.value();
    T count = T(0);
    T acc = T(0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        count += mask[i];
        acc += xv[i] * mask[i];
    }
    if (count == T(0)) {
        return x.tape()->constant(Tensor<T>::scalar(T(0)));
    }
    const T inv = T(1) / count;
    return x.tape()->record(Tensor<T>::scalar(acc * inv), {x},
                            [x, mask, inv](Tape<T>& t, const Tensor<T>& g) {
                                auto dst = t.grad_buffer(x);
                                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * inv * mask[i];
                            });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts)
{
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    std::size_t channels = 0;
    const std::size_t h = parts.front().shape().at(1);
    const std::size_t w = parts.front().shape().at(2);
    for (const Var<T>& p : parts) {
        detail::require_rank(p, 3, "concat_channels");
        if (p.shape()[1] != h || p.shape()[2] != w) {
            throw ShapeError("concat_channels: spatial extent " + shape_string(p.shape()) +
                             " does not match " + std::to_string(h) + "x" + std::to_string(w));
        }
        channels += p.shape()[0];
    }
    Tensor<T> out(Shape{channels, h, w});
    std::size_t offset = 0;
    for (const Var<T>& p : parts) {
        const auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += src.size();
    }
    return parts.front().tape()->record(std::move(out), parts, [parts](Tape<T>& t, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const Var<T>& p : parts) {
            const std::size_t n = p.size();
            if (t.requires_grad(p)) {
                auto dst = t.grad_buffer(p);
                for (std::size_t i = 0; i < n; ++i) dst[i] += g[offset + i];
            }
            offset += n;
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count)
{
    detail::require_rank(x, 3, "slice_channels");
    const Shape& s = x.shape();
    if (count == 0 || begin + count > s[0]) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") outside " + std::to_string(s[0]) + " channels");
    }
    const std::size_t plane = s[1] * s[2];
    Tensor<T> out(Shape{count, s[1], s[2]});
    const auto src = x.value().data();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin * plane),
              src.begin() + static_cast<std::ptrdiff_t>((begin + count) * plane), out.data().begin());
    return x.tape()->record(std::move(out), {x}, [x, begin, plane](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[begin * plane + i] += g[i];
    });
}

/// Nearest-neighbour x2 upsampling of a [C,H,W] map.
template <typename T>
Var<T> upsample2x(const Var<T>& x)
{
    detail::require_rank(x, 3, "upsample2x");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const Tensor<T>& xv = x.value();
    Tensor<T> out(Shape{c, 2 * h, 2 * w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t i = 0; i < 2 * w; ++i) out.at(k, y, i) = xv.at(k, y / 2, i / 2);
    return x.tape()->record(std::move(out), {x}, [x, c, h, w](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t i = 0; i < 2 * w; ++i)
                    dst[(k * h + y / 2) * w + i / 2] += g.at(k, y, i);
    });
}

/// 2x2 mean pooling of a [C,H,W] map with even H and W.
template <typename T>
Var<T> avg_pool2x(const Var<T>& x)
{
    detail::require_rank(x, 3, "avg_pool2x");
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (h % 2 || w % 2) throw ShapeError("avg_pool2x: odd spatial extent " + shape_string(x.shape()));
    const Tensor<T>& xv = x.value();
    Tensor<T> out(Shape{c, h / 2, w / 2});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t i = 0; i < w / 2; ++i)
                out.at(k, y, i) = T(0.25) * (xv.at(k, 2 * y, 2 * i) + xv.at(k, 2 * y, 2 * i + 1) +
                                             xv.at(k, 2 * y + 1, 2 * i) + xv.at(k, 2 * y + 1, 2 * i + 1));
    return x.tape()->record(std::move(out), {x}, [x, c, h, w](Tape<T>& t, const Tensor<T>& g) {
        auto dst = t.grad_buffer(x);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t i = 0; i < w; ++i) dst[(k * h + y) * w + i] += T(0.25) * g.at(k, y / 2, i / 2);
    });
}

/// Zero-padded 2-D cross-correlation. input [Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout].
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride,
              std::size_t padding)
{
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMap = Eigen::Map<const Mat>;
    using MutMap = Eigen::Map<Mat>;

    detail::require_rank(input, 3, "conv2d input");
    detail::require_rank(kernel, 4, "conv2d kernel");
    detail::require_rank(bias, 1, "conv2d bias");
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
    const Shape& is = input.shape();
    const Shape& ks = kernel.shape();
    const std::size_t cin = is[0], h = is[1], w = is[2];
    const std::size_t cout = ks[0], kh = ks[2], kw = ks[3];
    if (ks[1] != cin) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, input has " +
                         std::to_string(cin));
    }
    if (bias.shape()[0] != cout) {
        throw ShapeError("conv2d: bias has " + std::to_string(bias.shape()[0]) + " entries for " +
                         std::to_string(cout) + " output channels");
    }
    if (kh > h + 2 * padding || kw > w + 2 * padding) {
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * padding) + "x" +
                         std::to_string(w + 2 * padding));
    }
    const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
    const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
    const std::size_t k = cin * kh * kw;
    const std::size_t p = ho * wo;

    AlignedVector<T> cols(k * p, T(0));
    const Tensor<T>& xv = input.value();
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
                T* row = cols.data() + ((ci * kh + ky) * kw + kx) * p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        row[oy * wo + ox] = xv.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                    }
                }
            }

    Tensor<T> out(Shape{cout, ho, wo});
    {
        ConstMap wm(kernel.value().data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
        ConstMap cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        MutMap om(out.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(p));
        om.noalias() = wm * cm;
        const Tensor<T>& bv = bias.value();
        for (std::size_t co = 0; co < cout; ++co) om.row(static_cast<Eigen::Index>(co)).array() += bv[co];
    }

    return input.tape()->record(
        std::move(out), {input, kernel, bias},
        [input, kernel, bias, cols = std::move(cols), cin, h, w, kh, kw, ho, wo, k, p, cout, stride,
         padding](Tape<T>& t, const Tensor<T>& g) {
            ConstMap gm(g.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(p));
            if (t.requires_grad(kernel)) {
                ConstMap cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
                MutMap dw(t.grad_buffer(kernel).data(), static_cast<Eigen::Index>(cout),
                          static_cast<Eigen::Index>(k));
                dw.noalias() += gm * cm.transpose();
            }
            if (t.requires_grad(bias)) {
                auto db = t.grad_buffer(bias);
                for (std::size_t co = 0; co < cout; ++co) db[co] += gm.row(static_cast<Eigen::Index>(co)).sum();
            }
            if (t.requires_grad(input)) {
                ConstMap wm(kernel.value().data().data(), static_cast<Eigen::Index>(cout),
                            static_cast<Eigen::Index>(k));
                Mat dcols = wm.transpose() * gm;
                auto dx = t.grad_buffer(input);
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const T* row = dcols.data() + ((ci * kh + ky) * kw + kx) * p;
                            for (std::size_t oy = 0; oy < ho; ++oy) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                          static_cast<std::ptrdiff_t>(padding);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t ox = 0; ox < wo; ++ox) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                              static_cast<std::ptrdiff_t>(padding);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                    dx[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                                        row[oy * wo + ox];
                                }
                            }
                        }
            }
        });
}

/// Normalizes a [C,H,W] sample over all of its elements, then applies a
/// per-channel affine gain * x + bias.
template <typename T>
Var<T> layer_norm(const Var<T>& input, const Var<T>& gain, const Var<T>& bias, T epsilon)
{
    detail::require_rank(input, 3, "layer_norm input");
    if (!(epsilon > T(0))) throw std::invalid_argument("layer_norm: epsilon must be positive");
    const std::size_t c = input.shape()[0];
    const std::size_t plane = input.shape()[1] * input.shape()[2];
    if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
        throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " must both be [" + std::to_string(c) + "]");
    }
    const Tensor<T>& xv = input.value();
    const std::size_t n = xv.size();
    double acc = 0.0;
    for (T v : xv.data()) acc += static_cast<double>(v);
    const double mu = acc / static_cast<double>(n);
    double var = 0.0;
    for (T v : xv.data()) {
        const double d = static_cast<double>(v) - mu;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
    const T mu_t = static_cast<T>(mu);

    Tensor<T> xhat(xv.shape());
    for (std::size_t i = 0; i < n; ++i) xhat[i] = (xv[i] - mu_t) * inv_std;
    Tensor<T> out(xv.shape());
    const Tensor<T>& gv = gain.value();
    const Tensor<T>& bv = bias.value();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = gv[ch] * xhat[ch * plane + i] + bv[ch];

    return input.tape()->record(
        std::move(out), {input, gain, bias},
        [input, gain, bias, xhat = std::move(xhat), inv_std, c, plane, n](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& gv = gain.value();
            if (t.requires_grad(gain)) {
                auto dg = t.grad_buffer(gain);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    T s = T(0);
                    for (std::size_t i = 0; i < plane; ++i) s += g[ch * plane + i] * xhat[ch * plane + i];
                    dg[ch] += s;
                }
            }
            if (t.requires_grad(bias)) {
                auto db = t.grad_buffer(bias);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    T s = T(0);
                    for (std::size_t i = 0; i < plane; ++i) s += g[ch * plane + i];
                    db[ch] += s;
                }
            }
            if (t.requires_grad(input)) {
                std::vector<T> dxhat(n);
                T sum_d = T(0);
                T sum_dx = T(0);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < plane; ++i) {
                        const std::size_t j = ch * plane + i;
                        dxhat[j] = g[j] * gv[ch];
                        sum_d += dxhat[j];
                        sum_dx += dxhat[j] * xhat[j];
                    }
                const T nn = static_cast<T>(n);
                auto dx = t.grad_buffer(input);
                for (std::size_t j = 0; j < n; ++j) {
                    dx[j] += inv_std / nn * (nn * dxhat[j] - sum_d - xhat[j] * sum_dx);
                }
            }
        });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

} // namespace ops

} // namespace divsynth
