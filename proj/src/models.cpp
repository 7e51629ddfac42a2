#include "divsynth/models.hpp"

#include <cmath>
#include <stdexcept>

namespace divsynth {

namespace {

// distinct streams per network so changing one architecture leaves the others' init untouched
constexpr std::uint64_t kUNetSalt = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kDiscSalt = 0xbf58476d1ce4e5b9ull;
constexpr std::uint64_t kCrnSalt = 0x94d049bb133111ebull;
constexpr std::uint64_t kPhiSalt = 0x2545f4914f6cdd1dull;

} // namespace

GeneratorUNet::GeneratorUNet(Config config, std::uint64_t seed) : config_(std::move(config))
{
    if (config_.widths.empty()) throw std::invalid_argument("unet needs at least one encoder stage");
    if (!(config_.dropout >= 0.0 && config_.dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
    Rng rng(seed ^ kUNetSalt);
    const std::size_t in = config_.classes + 1;
    const auto& wd = config_.widths;
    for (std::size_t i = 0; i < wd.size(); ++i) {
        add_conv(params_, "enc" + std::to_string(i), i == 0 ? in : wd[i - 1], wd[i], 4, kLeakySlope, rng);
        if (i > 0) add_norm(params_, "enc" + std::to_string(i) + ".ln", wd[i]);
    }
    for (std::size_t d = wd.size(); d-- > 0;) {
        const std::size_t cin = d + 1 == wd.size() ? wd[d] : 2 * wd[d];
        const std::size_t cout = d > 0 ? wd[d - 1] : wd[0];
        add_conv(params_, "dec" + std::to_string(d), cin, cout, 3, 0.0f, rng);
        add_norm(params_, "dec" + std::to_string(d) + ".ln", cout);
    }
    add_conv(params_, "head", wd[0] + in, 3, 3, 1.0f, rng);
}

void GeneratorUNet::check_input(std::size_t height, std::size_t width) const
{
    const std::size_t min = std::size_t{1} << depth();
    if (!nn::is_power_of_two(height) || !nn::is_power_of_two(width) || height < min || width < min) {
        throw ShapeError("unet: input " + std::to_string(width) + "x" + std::to_string(height) +
                         " must be powers of two >= " + std::to_string(min));
    }
}

DropoutMasks GeneratorUNet::sample_dropout(Rng& rng, std::size_t height, std::size_t width) const
{
    check_input(height, width);
    DropoutMasks masks;
    std::bernoulli_distribution drop(config_.dropout);
    const float keep_scale = static_cast<float>(1.0 / (1.0 - config_.dropout));
    for (std::size_t d = depth(); d-- > 1;) {
        Tensor<float> m(Shape{config_.widths[d - 1], height >> d, width >> d});
        for (float& v : m.data()) v = drop(rng) ? 0.0f : keep_scale;
        masks.stages.push_back(std::move(m));
    }
    return masks;
}

PatchDiscriminator::PatchDiscriminator(Config config, std::uint64_t seed) : config_(std::move(config))
{
    if (config_.widths.empty()) throw std::invalid_argument("discriminator needs at least one stage");
    Rng rng(seed ^ kDiscSalt);
    std::size_t cin = config_.classes + 3;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        add_conv(params_, "stage" + std::to_string(i), cin, config_.widths[i], 4, kLeakySlope, rng);
        if (i > 0) add_norm(params_, "stage" + std::to_string(i) + ".ln", config_.widths[i]);
        cin = config_.widths[i];
    }
    add_conv(params_, "score", cin, 1, 3, 1.0f, rng);
}

std::size_t PatchDiscriminator::patch_grid(std::size_t size) const
{
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        // 4x4 kernel, stride 2, padding 1
        if (size + 2 < 4) throw ShapeError("discriminator input too small");
        size = (size + 2 - 4) / 2 + 1;
    }
    return size;
}

CrnCascade::CrnCascade(Config config, std::uint64_t seed) : config_(config)
{
    if (config_.doublings == 0 || config_.base_width == 0 || config_.base_height == 0 || config_.outputs == 0) {
        throw std::invalid_argument("crn: base size, doublings and outputs must be positive");
    }
    Rng rng(seed ^ kCrnSalt);
    const std::size_t cond = config_.classes + 1;
    for (std::size_t i = 0; i < config_.doublings; ++i) {
        const std::string m = "m" + std::to_string(i);
        add_conv(params_, m + ".conv0", (i == 0 ? 0 : config_.width) + cond, config_.width, 3, kLeakySlope, rng);
        add_norm(params_, m + ".ln0", config_.width);
        add_conv(params_, m + ".conv1", config_.width + cond, config_.width, 3, kLeakySlope, rng);
        add_norm(params_, m + ".ln1", config_.width);
    }
    add_conv(params_, "head", config_.width, 3 * config_.outputs, 1, 1.0f, rng);
}

FeatureExtractor::FeatureExtractor(Config config) : config_(std::move(config))
{
    if (config_.channels.empty()) throw std::invalid_argument("feature extractor needs at least one stage");
    if (!(config_.gain > 0.0) || !std::isfinite(config_.gain)) throw std::invalid_argument("phi gain must be positive");
    if (!(config_.chroma_weight > 0.0) || !std::isfinite(config_.chroma_weight)) {
        throw std::invalid_argument("phi chroma weight must be positive");
    }
    Rng rng(config_.seed ^ kPhiSalt);
    std::size_t cin = 3;
    for (std::size_t k = 0; k < config_.channels.size(); ++k) {
        add_conv(params_, "phi" + std::to_string(k), cin, config_.channels[k], 3, kLeakySlope, rng);
        cin = config_.channels[k];
    }
}

ImageRGB UNetSynthesizer::render(const SemanticLayout& layout, const NoiseVector& noise) const
{
    Tape<float> tape;
    const BoundParameters<float> p(tape, net_->params(), false);
    const Var<float> out = net_->forward(p, tape.constant(one_hot_encode<float>(layout)),
                                         tape.constant(build_noise_channel<float>(layout, noise)), nullptr);
    return ImageRGB::from_tensor(out.value());
}

ImageRGB CrnSynthesizer::render(const SemanticLayout& layout, const NoiseVector& noise) const
{
    Tape<float> tape;
    const BoundParameters<float> p(tape, net_->params(), false);
    const auto outs = net_->forward_images(tape, p, layout, noise);
    return ImageRGB::from_tensor(outs.at(output_index_).value());
}

} // namespace divsynth
