#pragma once

#include "divsynth/autodiff.hpp"
#include "divsynth/layout.hpp"
#include "divsynth/parameters.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace divsynth {

inline constexpr float kLeakySlope = 0.2f;
inline constexpr float kNormEpsilon = 1e-5f;

/// Anything that maps (layout, noise) to an image deterministically. Evaluation
/// and serving only see this interface.
class Synthesizer {
public:
    virtual ~Synthesizer() = default;
    virtual std::size_t class_count() const = 0;
    virtual ImageRGB render(const SemanticLayout& layout, const NoiseVector& noise) const = 0;
};

namespace nn {

template <typename T>
Var<T> conv(const BoundParameters<T>& p, const std::string& name, const Var<T>& x, std::size_t stride,
            std::size_t padding)
{
    return ops::conv2d(x, p[name + ".w"], p[name + ".b"], stride, padding);
}

template <typename T>
Var<T> norm(const BoundParameters<T>& p, const std::string& name, const Var<T>& x)
{
    return ops::layer_norm(x, p[name + ".g"], p[name + ".beta"], static_cast<T>(kNormEpsilon));
}

template <typename T>
Var<T> lrelu(const Var<T>& x)
{
    return ops::leaky_relu(x, static_cast<T>(kLeakySlope));
}

inline bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

} // namespace nn

/// Per-stage multiplicative dropout masks (0 or 1/(1-p)) for the U-Net decoder.
struct DropoutMasks {
    std::vector<Tensor<float>> stages;
};

/// Encoder-decoder generator with skip connections. Input is the one-hot
/// layout plus one noise channel; output is a sigmoid RGB image.
class GeneratorUNet {
public:
    struct Config {
        std::size_t classes = 4;
        std::vector<std::size_t> widths{16, 32, 64};
        double dropout = 0.5;
    };

    GeneratorUNet(Config config, std::uint64_t seed);

    const Config& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    std::size_t depth() const noexcept { return config_.widths.size(); }
    void check_input(std::size_t height, std::size_t width) const;

    /// Masks for the decoder stages that use dropout, for an H x W input.
    DropoutMasks sample_dropout(Rng& rng, std::size_t height, std::size_t width) const;

    /// layout_onehot [|C|,H,W], noise_channel [1,H,W] -> [3,H,W] in (0,1).
    /// A null `dropout` disables dropout.
    template <typename T>
    Var<T> forward(const BoundParameters<T>& p, const Var<T>& layout_onehot, const Var<T>& noise_channel,
                   const DropoutMasks* dropout) const;

private:
    Config config_;
    ParameterSet params_;
};

/// Stride-2 conv stack emitting one sigmoid realness score per patch.
class PatchDiscriminator {
public:
    struct Config {
        std::size_t classes = 4;
        std::vector<std::size_t> widths{16, 32, 64};
    };

    PatchDiscriminator(Config config, std::uint64_t seed);

    const Config& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    /// Side of the square score map for an input of side `size`.
    std::size_t patch_grid(std::size_t size) const;

    /// layout_onehot [|C|,H,W], image [3,H,W] -> [1,P,P] scores in (0,1).
    template <typename T>
    Var<T> forward(const BoundParameters<T>& p, const Var<T>& layout_onehot, const Var<T>& image) const;

private:
    Config config_;
    ParameterSet params_;
};

/// Cascade of refinement modules. Module i sees the layout (and noise channel)
/// at base * 2^i and the previous module's features, and emits features at
/// twice that resolution. The head maps the final features to 3 * outputs
/// sigmoid channels.
class CrnCascade {
public:
    struct Config {
        std::size_t classes = 4;
        std::size_t base_width = 2;
        std::size_t base_height = 2;
        std::size_t doublings = 4;
        std::size_t width = 32;
        std::size_t outputs = 1;
    };

    CrnCascade(Config config, std::uint64_t seed);

    const Config& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    std::size_t output_width() const noexcept { return config_.base_width << config_.doublings; }
    std::size_t output_height() const noexcept { return config_.base_height << config_.doublings; }

    /// [3 * outputs, H, W] for the given layout and noise.
    template <typename T>
    Var<T> forward(Tape<T>& tape, const BoundParameters<T>& p, const SemanticLayout& layout,
                   const NoiseVector& noise) const;

    /// forward() split into `outputs` separate [3,H,W] images.
    template <typename T>
    std::vector<Var<T>> forward_images(Tape<T>& tape, const BoundParameters<T>& p, const SemanticLayout& layout,
                                       const NoiseVector& noise) const
    {
        const Var<T> all = forward(tape, p, layout, noise);
        std::vector<Var<T>> out;
        for (std::size_t j = 0; j < config_.outputs; ++j) out.push_back(ops::slice_channels(all, 3 * j, 3));
        return out;
    }

private:
    Config config_;
    ParameterSet params_;
};

/// Fixed, seeded random conv stack standing in for a pretrained perceptual
/// network. Each stage halves the resolution. Never trained.
class FeatureExtractor {
public:
    struct Config {
        std::vector<std::size_t> channels{16, 32};
        std::uint64_t seed = 7;
        // multiplies every feature map; sets how hard the content loss pulls
        // relative to pixel-space terms
        double gain = 10.0;
        // >1 rotates RGB into luminance + two opponent chroma axes and scales the
        // chroma pair, so hue errors cost more than brightness errors (early
        // filters of trained image nets are largely colour-opponent)
        double chroma_weight = 6.0;
    };

    explicit FeatureExtractor(Config config);

    const Config& config() const noexcept { return config_; }
    const ParameterSet& params() const noexcept { return params_; }
    std::size_t stages() const noexcept { return config_.channels.size(); }

    /// Features Phi_1..Phi_K of a [3,H,W] image; Phi_k is (H/2^k) x (W/2^k).
    template <typename T>
    std::vector<Var<T>> features(Tape<T>& tape, const Var<T>& image) const;

private:
    Config config_;
    ParameterSet params_;
};

/// Deterministic inference (dropout off) for either generator kind.
class UNetSynthesizer : public Synthesizer {
public:
    explicit UNetSynthesizer(const GeneratorUNet& net) : net_(&net) {}
    std::size_t class_count() const override { return net_->config().classes; }
    ImageRGB render(const SemanticLayout& layout, const NoiseVector& noise) const override;

private:
    const GeneratorUNet* net_;
};

class CrnSynthesizer : public Synthesizer {
public:
    explicit CrnSynthesizer(const CrnCascade& net, std::size_t output_index = 0)
        : net_(&net), output_index_(output_index)
    {
    }
    std::size_t class_count() const override { return net_->config().classes; }
    ImageRGB render(const SemanticLayout& layout, const NoiseVector& noise) const override;

private:
    const CrnCascade* net_;
    std::size_t output_index_;
};

// ---------------------------------------------------------------------------

template <typename T>
Var<T> GeneratorUNet::forward(const BoundParameters<T>& p, const Var<T>& layout_onehot, const Var<T>& noise_channel,
                              const DropoutMasks* dropout) const
{
    const std::size_t h = layout_onehot.shape().at(1);
    const std::size_t w = layout_onehot.shape().at(2);
    check_input(h, w);
    if (layout_onehot.shape()[0] != config_.classes) {
        throw ShapeError("unet: layout has " + std::to_string(layout_onehot.shape()[0]) + " channels, expected " +
                         std::to_string(config_.classes));
    }
    Tape<T>& tape = *layout_onehot.tape();
    const Var<T> input = ops::concat_channels<T>({layout_onehot, noise_channel});

    std::vector<Var<T>> skips;
    Var<T> x = input;
    for (std::size_t i = 0; i < depth(); ++i) {
        x = nn::conv(p, "enc" + std::to_string(i), x, 2, 1);
        if (i > 0) x = nn::norm(p, "enc" + std::to_string(i) + ".ln", x);
        x = nn::lrelu(x);
        skips.push_back(x);
    }
    // decoder stages run deepest first; every stage but the outermost uses dropout
    for (std::size_t d = depth(); d-- > 0;) {
        const Var<T> in = d + 1 == depth() ? skips[d] : ops::concat_channels<T>({x, skips[d]});
        x = nn::conv(p, "dec" + std::to_string(d), ops::upsample2x(in), 1, 1);
        x = ops::relu(nn::norm(p, "dec" + std::to_string(d) + ".ln", x));
        if (d > 0 && dropout) {
            x = ops::mul(x, tape.constant(dropout->stages.at(depth() - 1 - d).template cast<T>()));
        }
    }
    x = nn::conv(p, "head", ops::concat_channels<T>({x, input}), 1, 1);
    return ops::sigmoid(x);
}

template <typename T>
Var<T> PatchDiscriminator::forward(const BoundParameters<T>& p, const Var<T>& layout_onehot,
                                   const Var<T>& image) const
{
    if (layout_onehot.shape().at(1) != image.shape().at(1) || layout_onehot.shape().at(2) != image.shape().at(2)) {
        throw ShapeError("discriminator: layout " + shape_string(layout_onehot.shape()) + " vs image " +
                         shape_string(image.shape()));
    }
    if (image.shape()[0] != 3 || layout_onehot.shape()[0] != config_.classes) {
        throw ShapeError("discriminator: expected " + std::to_string(config_.classes) + "+3 input channels");
    }
    Var<T> x = ops::concat_channels<T>({layout_onehot, image});
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        x = nn::conv(p, "stage" + std::to_string(i), x, 2, 1);
        if (i > 0) x = nn::norm(p, "stage" + std::to_string(i) + ".ln", x);
        x = nn::lrelu(x);
    }
    return ops::sigmoid(nn::conv(p, "score", x, 1, 1));
}

template <typename T>
Var<T> CrnCascade::forward(Tape<T>& tape, const BoundParameters<T>& p, const SemanticLayout& layout,
                           const NoiseVector& noise) const
{
    if (layout.width() != output_width() || layout.height() != output_height()) {
        throw ShapeError("crn: layout is " + std::to_string(layout.width()) + "x" + std::to_string(layout.height()) +
                         ", cascade produces " + std::to_string(output_width()) + "x" +
                         std::to_string(output_height()));
    }
    if (layout.class_count() != config_.classes || noise.size() != config_.classes) {
        throw ShapeError("crn: expected " + std::to_string(config_.classes) + " classes");
    }
    auto conditioning = [&](std::size_t w, std::size_t h) {
        const SemanticLayout small = resize_nearest(layout, w, h);
        return ops::concat_channels<T>(
            {tape.constant(one_hot_encode<T>(small)), tape.constant(build_noise_channel<T>(small, noise))});
    };

    std::optional<Var<T>> features;
    std::size_t w = config_.base_width, h = config_.base_height;
    for (std::size_t i = 0; i < config_.doublings; ++i) {
        const std::string m = "m" + std::to_string(i);
        Var<T> in = conditioning(w, h);
        if (features) {
            if (features->shape()[1] != h || features->shape()[2] != w) {
                throw std::logic_error("crn: module " + m + " input features are not " + std::to_string(w) + "x" +
                                       std::to_string(h));
            }
            in = ops::concat_channels<T>({*features, in});
        }
        Var<T> x = nn::lrelu(nn::norm(p, m + ".ln0", nn::conv(p, m + ".conv0", in, 1, 1)));
        x = ops::upsample2x(x);
        w *= 2;
        h *= 2;
        x = ops::concat_channels<T>({x, conditioning(w, h)});
        x = nn::lrelu(nn::norm(p, m + ".ln1", nn::conv(p, m + ".conv1", x, 1, 1)));
        if (x.shape()[1] != h || x.shape()[2] != w) {
            throw std::logic_error("crn: module " + m + " broke the doubling recurrence");
        }
        features = x;
    }
    return ops::sigmoid(nn::conv(p, "head", *features, 1, 0));
}

template <typename T>
std::vector<Var<T>> FeatureExtractor::features(Tape<T>& tape, const Var<T>& image) const
{
    const Shape& s = image.shape();
    const std::size_t div = std::size_t{1} << stages();
    if (s.size() != 3 || s[0] != 3) throw ShapeError("features: expected [3,H,W], got " + shape_string(s));
    if (s[1] % div || s[2] % div) {
        throw ShapeError("features: " + std::to_string(s[1]) + "x" + std::to_string(s[2]) + " not divisible by " +
                         std::to_string(div));
    }
    const BoundParameters<T> p(tape, params_, false);
    std::vector<Var<T>> out;
    Var<T> x = image;
    if (config_.chroma_weight != 1.0) {
        const T c = static_cast<T>(config_.chroma_weight);
        const T r3 = static_cast<T>(1.0 / std::sqrt(3.0)), r2 = static_cast<T>(1.0 / std::sqrt(2.0)),
                r6 = static_cast<T>(1.0 / std::sqrt(6.0));
        Tensor<T> k(Shape{3, 3, 1, 1}, std::vector<T>{r3, r3, r3, c * r2, -c * r2, T(0), c * r6, c * r6, T(-2) * c * r6});
        x = ops::conv2d(x, tape.constant(std::move(k)), tape.constant(Tensor<T>(Shape{3})), 1, 0);
    }
    for (std::size_t k = 0; k < stages(); ++k) {
        x = nn::lrelu(nn::conv(p, "phi" + std::to_string(k), x, 2, 1));
        out.push_back(config_.gain == 1.0 ? x : ops::scale(x, static_cast<T>(config_.gain)));
    }
    return out;
}

} // namespace divsynth
