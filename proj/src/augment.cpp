#include "divsynth/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace divsynth {

ImageRGB resize_bilinear(const ImageRGB& image, std::size_t width, std::size_t height)
{
    if (width == 0 || height == 0) throw std::invalid_argument("resize target must be positive");
    if (width == image.width() && height == image.height()) return image;
    const double sx = static_cast<double>(image.width()) / static_cast<double>(width);
    const double sy = static_cast<double>(image.height()) / static_cast<double>(height);
    const double max_x = static_cast<double>(image.width() - 1);
    const double max_y = static_cast<double>(image.height() - 1);
    ImageRGB out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height() - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width() - 1);
            const double tx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = image.at(c, y0, x0) * (1.0 - tx) + image.at(c, y0, x1) * tx;
                const double bot = image.at(c, y1, x0) * (1.0 - tx) + image.at(c, y1, x1) * tx;
                out.set(c, y, x, static_cast<float>(std::clamp(top * (1.0 - ty) + bot * ty, 0.0, 1.0)));
            }
        }
    }
    return out;
}

SemanticLayout flip_horizontal(const SemanticLayout& layout)
{
    SemanticLayout out = layout;
    for (std::size_t y = 0; y < layout.height(); ++y)
        for (std::size_t x = 0; x < layout.width(); ++x) out.set(y, x, layout.at(y, layout.width() - 1 - x));
    return out;
}

ImageRGB flip_horizontal(const ImageRGB& image)
{
    ImageRGB out = image;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < image.height(); ++y)
            for (std::size_t x = 0; x < image.width(); ++x) out.set(c, y, x, image.at(c, y, image.width() - 1 - x));
    return out;
}

SemanticLayout crop(const SemanticLayout& layout, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height)
{
    if (x0 + width > layout.width() || y0 + height > layout.height()) {
        throw std::invalid_argument("crop window exceeds layout bounds");
    }
    SemanticLayout out(width, height, layout.class_count());
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) out.set(y, x, layout.at(y0 + y, x0 + x));
    return out;
}

ImageRGB crop(const ImageRGB& image, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height)
{
    if (x0 + width > image.width() || y0 + height > image.height()) {
        throw std::invalid_argument("crop window exceeds image bounds");
    }
    ImageRGB out(width, height);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) out.set(c, y, x, image.at(c, y0 + y, x0 + x));
    return out;
}

std::pair<SemanticLayout, ImageRGB> augment(const SemanticLayout& layout, const ImageRGB& image,
                                            const AugmentParams& params, Rng& rng)
{
    if (layout.width() != image.width() || layout.height() != image.height()) {
        throw ShapeError("augment: layout and image sizes differ");
    }
    if (params.crop_width == 0 || params.crop_height == 0) throw std::invalid_argument("augment: empty crop");
    if (params.crop_width > params.resize_width || params.crop_height > params.resize_height) {
        throw std::invalid_argument("augment: crop " + std::to_string(params.crop_width) + "x" +
                                    std::to_string(params.crop_height) + " larger than resized source " +
                                    std::to_string(params.resize_width) + "x" + std::to_string(params.resize_height));
    }
    const SemanticLayout big_l = resize_nearest(layout, params.resize_width, params.resize_height);
    const ImageRGB big_i = resize_bilinear(image, params.resize_width, params.resize_height);

    const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, params.resize_width - params.crop_width)(rng);
    const std::size_t oy = std::uniform_int_distribution<std::size_t>(0, params.resize_height - params.crop_height)(rng);
    const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < params.flip_prob;

    SemanticLayout l = crop(big_l, ox, oy, params.crop_width, params.crop_height);
    ImageRGB i = crop(big_i, ox, oy, params.crop_width, params.crop_height);
    if (flip) {
        l = flip_horizontal(l);
        i = flip_horizontal(i);
    }
    return {std::move(l), std::move(i)};
}

} // namespace divsynth
