#pragma once

#include "divsynth/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace divsynth {

/// Single RNG type used across data generation, training and evaluation so
/// that one seed reproduces a whole run.
using Rng = std::mt19937_64;

/// Per-pixel class-index map. Pixels are stored row-major, one byte each.
class SemanticLayout {
public:
    SemanticLayout() = default;
    SemanticLayout(std::size_t width, std::size_t height, std::size_t class_count, std::uint8_t fill = 0);
    SemanticLayout(std::size_t width, std::size_t height, std::size_t class_count, std::vector<std::uint8_t> pixels);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t class_count() const noexcept { return class_count_; }
    std::size_t pixel_count() const noexcept { return pixels_.size(); }

    std::uint8_t at(std::size_t y, std::size_t x) const { return pixels_[y * width_ + x]; }
    void set(std::size_t y, std::size_t x, std::size_t cls);

    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

    /// Pixel count per class; sums to width * height.
    std::vector<std::size_t> class_histogram() const;
    bool contains(std::size_t cls) const;
    std::vector<std::size_t> present_classes() const;

    friend bool operator==(const SemanticLayout&, const SemanticLayout&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::size_t class_count_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// RGB image with intensities in [0,1], stored channel-planar ([3,H,W]) so it
/// maps directly onto network tensors.
class ImageRGB {
public:
    ImageRGB() = default;
    ImageRGB(std::size_t width, std::size_t height, float fill = 0.0f);
    ImageRGB(std::size_t width, std::size_t height, std::vector<float> planar);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }

    float at(std::size_t channel, std::size_t y, std::size_t x) const
    {
        return values_[(channel * height_ + y) * width_ + x];
    }
    void set(std::size_t channel, std::size_t y, std::size_t x, float v);

    std::span<const float> values() const noexcept { return values_; }

    template <typename T>
    Tensor<T> to_tensor() const
    {
        std::vector<T> data(values_.begin(), values_.end());
        return Tensor<T>(Shape{3, height_, width_}, std::move(data));
    }

    /// Accepts a [3,H,W] tensor with every value in [0,1].
    static ImageRGB from_tensor(const Tensor<float>& t);

    friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<float> values_;
};

/// One noise value per semantic class, each in [-1,1].
class NoiseVector {
public:
    NoiseVector() = default;
    explicit NoiseVector(std::vector<double> entries);

    static NoiseVector zeros(std::size_t classes) { return NoiseVector(std::vector<double>(classes, 0.0)); }
    static NoiseVector uniform(std::size_t classes, Rng& rng);

    /// Clamps out-of-range entries into [-1,1]; returns how many were changed.
    static NoiseVector clamped(std::span<const double> raw, std::size_t* clamped_count = nullptr);

    std::size_t size() const noexcept { return entries_.size(); }
    double operator[](std::size_t c) const { return entries_[c]; }
    std::span<const double> entries() const noexcept { return entries_; }
    double mean_abs() const;

    friend bool operator==(const NoiseVector&, const NoiseVector&) = default;

private:
    std::vector<double> entries_;
};

/// [|C|,H,W]; channel c is 1 at pixels of class c.
template <typename T>
Tensor<T> one_hot_encode(const SemanticLayout& layout)
{
    const std::size_t h = layout.height(), w = layout.width();
    Tensor<T> out(Shape{layout.class_count(), h, w}, T(0));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(layout.at(y, x), y, x) = T(1);
    return out;
}

/// [1,H,W]; pixel value is the noise entry of the pixel's class.
template <typename T>
Tensor<T> build_noise_channel(const SemanticLayout& layout, const NoiseVector& noise)
{
    if (noise.size() != layout.class_count()) {
        throw ShapeError("noise has " + std::to_string(noise.size()) + " entries, layout has " +
                         std::to_string(layout.class_count()) + " classes");
    }
    const std::size_t h = layout.height(), w = layout.width();
    Tensor<T> out(Shape{1, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(0, y, x) = static_cast<T>(noise[layout.at(y, x)]);
    return out;
}

/// Per-class 0/1 mask replicated across `channels` planes.
template <typename T>
Tensor<T> class_mask(const SemanticLayout& layout, std::size_t cls, std::size_t channels)
{
    const std::size_t h = layout.height(), w = layout.width();
    Tensor<T> out(Shape{channels, h, w}, T(0));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (layout.at(y, x) == cls)
                for (std::size_t c = 0; c < channels; ++c) out.at(c, y, x) = T(1);
    return out;
}

/// Nearest-neighbour resize; source index floor((i + 0.5) * src / dst).
SemanticLayout resize_nearest(const SemanticLayout& layout, std::size_t width, std::size_t height);

/// Product of valid-value counts per class. Throws on an empty list, a zero
/// entry, or 64-bit overflow.
std::uint64_t count_compositions(std::span<const std::uint64_t> values_per_class);

} // namespace divsynth
