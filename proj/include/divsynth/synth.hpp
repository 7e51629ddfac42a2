#pragma once

#include "divsynth/layout.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace divsynth {

using Rgb = std::array<float, 3>;

enum class Split { train, val, test };

const char* split_name(Split s);

struct Sample {
    SemanticLayout layout;
    ImageRGB image;
    Split split = Split::train;
};

/// Layout/image pairs sharing dimensions and class count.
struct Dataset {
    std::size_t class_count = 0;
    std::vector<Sample> samples;

    std::vector<const Sample*> split(Split s) const;
    void append(const Dataset& other);
    /// Throws unless every pair matches class_count and the first pair's size.
    void validate() const;
};

/// Procedural facade world: wall background, a roof band, a window grid and a
/// door. Rendering multiplies the class colour by a per-sample illumination
/// factor and a fixed horizontal shading ramp; the factor is not part of the
/// layout, so each layout admits many images.
struct SyntheticWorldConfig {
    std::size_t width = 32;
    std::size_t height = 32;
    std::vector<std::string> class_names{"wall", "window", "door", "roof"};
    std::vector<Rgb> palette{Rgb{0.80f, 0.55f, 0.35f}, Rgb{0.20f, 0.35f, 0.75f}, Rgb{0.30f, 0.70f, 0.30f},
                             Rgb{0.60f, 0.15f, 0.45f}};

    // Geometry, in pixels at the configured size.
    std::size_t roof_min = 3, roof_max = 6;
    std::size_t window_rows_min = 2, window_rows_max = 3;
    std::size_t window_cols_min = 2, window_cols_max = 4;
    std::size_t window_size_min = 3, window_size_max = 5;
    std::size_t door_width_min = 4, door_width_max = 7;
    std::size_t door_height_min = 7, door_height_max = 11;

    double illumination_lo = 0.35;
    double illumination_hi = 1.1;
    double shading_strength = 0.2; // shade(x) = 1 + s * (x/(W-1) - 0.5)
    double min_separation_deg = 20.0;
    std::uint64_t seed = 1;
    std::size_t max_retries = 32;

    std::size_t class_count() const { return palette.size(); }
    void validate() const;
};

/// Smallest pairwise angle (degrees) between palette colours.
double palette_min_angle_deg(const std::vector<Rgb>& palette);

/// Samples one layout from the facade grammar. Throws std::runtime_error when
/// max_retries consecutive draws leave some class with zero area.
SemanticLayout synth_layout(const SyntheticWorldConfig& config, Rng& rng);

ImageRGB render_layout(const SyntheticWorldConfig& config, const SemanticLayout& layout, double illumination);

/// Generates count pairs tagged with `tag`. A given (config.seed, count) always
/// reproduces the same dataset bit for bit.
Dataset synth_generate(const SyntheticWorldConfig& config, std::size_t count, Split tag = Split::train);

/// Train and test splits drawn from one seeded stream.
Dataset synth_generate_splits(const SyntheticWorldConfig& config, std::size_t train_count, std::size_t test_count);

} // namespace divsynth
