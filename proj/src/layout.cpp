#include "divsynth/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace divsynth {

SemanticLayout::SemanticLayout(std::size_t width, std::size_t height, std::size_t class_count, std::uint8_t fill)
    : SemanticLayout(width, height, class_count, std::vector<std::uint8_t>(width * height, fill))
{
}

SemanticLayout::SemanticLayout(std::size_t width, std::size_t height, std::size_t class_count,
                               std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), class_count_(class_count), pixels_(std::move(pixels))
{
    if (width == 0 || height == 0) throw std::invalid_argument("layout dimensions must be positive");
    if (class_count == 0 || class_count > 256) {
        throw std::invalid_argument("layout class count must lie in [1,256], got " + std::to_string(class_count));
    }
    if (pixels_.size() != width * height) {
        throw ShapeError("layout has " + std::to_string(pixels_.size()) + " pixels, expected " +
                         std::to_string(width) + "x" + std::to_string(height));
    }
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        if (pixels_[i] >= class_count) {
            throw std::invalid_argument("layout pixel " + std::to_string(i) + " has class " +
                                        std::to_string(pixels_[i]) + " >= " + std::to_string(class_count));
        }
    }
}

void SemanticLayout::set(std::size_t y, std::size_t x, std::size_t cls)
{
    if (cls >= class_count_) throw std::invalid_argument("class index " + std::to_string(cls) + " out of range");
    pixels_[y * width_ + x] = static_cast<std::uint8_t>(cls);
}

std::vector<std::size_t> SemanticLayout::class_histogram() const
{
    std::vector<std::size_t> hist(class_count_, 0);
    for (std::uint8_t p : pixels_) ++hist[p];
    return hist;
}

bool SemanticLayout::contains(std::size_t cls) const
{
    return std::find(pixels_.begin(), pixels_.end(), cls) != pixels_.end();
}

std::vector<std::size_t> SemanticLayout::present_classes() const
{
    std::vector<std::size_t> out;
    const auto hist = class_histogram();
    for (std::size_t c = 0; c < hist.size(); ++c)
        if (hist[c] > 0) out.push_back(c);
    return out;
}

ImageRGB::ImageRGB(std::size_t width, std::size_t height, float fill)
    : ImageRGB(width, height, std::vector<float>(3 * width * height, fill))
{
}

ImageRGB::ImageRGB(std::size_t width, std::size_t height, std::vector<float> planar)
    : width_(width), height_(height), values_(std::move(planar))
{
    if (width == 0 || height == 0) throw std::invalid_argument("image dimensions must be positive");
    if (values_.size() != 3 * width * height) {
        throw ShapeError("image has " + std::to_string(values_.size()) + " values, expected 3x" +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    for (float v : values_) {
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("image intensity outside [0,1]");
    }
}

void ImageRGB::set(std::size_t channel, std::size_t y, std::size_t x, float v)
{
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("image intensity outside [0,1]");
    values_[(channel * height_ + y) * width_ + x] = v;
}

ImageRGB ImageRGB::from_tensor(const Tensor<float>& t)
{
    if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("image tensor must be [3,H,W], got " + shape_string(t.shape()));
    return ImageRGB(t.dim(2), t.dim(1), t.to_vector());
}

NoiseVector::NoiseVector(std::vector<double> entries) : entries_(std::move(entries))
{
    for (double v : entries_) {
        if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("noise entry outside [-1,1]");
    }
}

NoiseVector NoiseVector::uniform(std::size_t classes, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(classes);
    for (double& e : v) e = dist(rng);
    return NoiseVector(std::move(v));
}

NoiseVector NoiseVector::clamped(std::span<const double> raw, std::size_t* clamped_count)
{
    std::size_t changed = 0;
    std::vector<double> v(raw.begin(), raw.end());
    for (double& e : v) {
        if (std::isnan(e)) throw std::invalid_argument("noise entry is NaN");
        const double c = std::clamp(e, -1.0, 1.0);
        if (c != e) ++changed;
        e = c;
    }
    if (clamped_count) *clamped_count = changed;
    return NoiseVector(std::move(v));
}

double NoiseVector::mean_abs() const
{
    if (entries_.empty()) return 0.0;
    double acc = 0.0;
    for (double v : entries_) acc += std::abs(v);
    return acc / static_cast<double>(entries_.size());
}

SemanticLayout resize_nearest(const SemanticLayout& layout, std::size_t width, std::size_t height)
{
    if (width == 0 || height == 0) throw std::invalid_argument("resize target must be positive");
    std::vector<std::uint8_t> px(width * height);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(layout.height() - 1, (2 * y + 1) * layout.height() / (2 * height));
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = std::min(layout.width() - 1, (2 * x + 1) * layout.width() / (2 * width));
            px[y * width + x] = layout.at(sy, sx);
        }
    }
    return SemanticLayout(width, height, layout.class_count(), std::move(px));
}

std::uint64_t count_compositions(std::span<const std::uint64_t> values_per_class)
{
    if (values_per_class.empty()) throw std::invalid_argument("count_compositions: empty class list");
    std::uint64_t product = 1;
    for (std::uint64_t k : values_per_class) {
        if (k == 0) throw std::invalid_argument("count_compositions: every class needs at least one value");
        if (product > std::numeric_limits<std::uint64_t>::max() / k) {
            throw std::overflow_error("count_compositions: product exceeds 64 bits");
        }
        product *= k;
    }
    return product;
}

} // namespace divsynth
