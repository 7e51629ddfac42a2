#pragma once

#include "divsynth/layout.hpp"

#include <utility>

namespace divsynth {

/// Resize to (resize_width, resize_height), random-crop to the crop size, and
/// flip horizontally with probability flip_prob. Layout and image always
/// receive the same geometry.
struct AugmentParams {
    std::size_t resize_width = 0;
    std::size_t resize_height = 0;
    std::size_t crop_width = 0;
    std::size_t crop_height = 0;
    double flip_prob = 0.5;

    static AugmentParams jittered(std::size_t width, std::size_t height, std::size_t jitter, double flip_prob)
    {
        return AugmentParams{width + jitter, height + jitter, width, height, flip_prob};
    }
};

/// Bilinear resize with half-pixel centres, edges clamped.
ImageRGB resize_bilinear(const ImageRGB& image, std::size_t width, std::size_t height);

SemanticLayout flip_horizontal(const SemanticLayout& layout);
ImageRGB flip_horizontal(const ImageRGB& image);

SemanticLayout crop(const SemanticLayout& layout, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height);
ImageRGB crop(const ImageRGB& image, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height);

/// Always consumes exactly three draws from rng (x offset, y offset, flip).
std::pair<SemanticLayout, ImageRGB> augment(const SemanticLayout& layout, const ImageRGB& image,
                                            const AugmentParams& params, Rng& rng);

} // namespace divsynth
