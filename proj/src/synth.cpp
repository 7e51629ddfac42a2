#include "divsynth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace divsynth {

namespace {

constexpr std::size_t kWall = 0;
constexpr std::size_t kWindow = 1;
constexpr std::size_t kDoor = 2;
constexpr std::size_t kRoof = 3;

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void fill_rect(SemanticLayout& l, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h, std::size_t cls)
{
    for (std::size_t y = y0; y < std::min(l.height(), y0 + h); ++y)
        for (std::size_t x = x0; x < std::min(l.width(), x0 + w); ++x) l.set(y, x, cls);
}

} // namespace

const char* split_name(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

std::vector<const Sample*> Dataset::split(Split s) const
{
    std::vector<const Sample*> out;
    for (const Sample& p : samples)
        if (p.split == s) out.push_back(&p);
    return out;
}

void Dataset::append(const Dataset& other)
{
    if (class_count == 0) class_count = other.class_count;
    if (other.class_count != class_count) throw std::invalid_argument("cannot merge datasets with different class counts");
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

void Dataset::validate() const
{
    if (samples.empty()) throw std::invalid_argument("dataset is empty");
    const std::size_t w = samples.front().layout.width();
    const std::size_t h = samples.front().layout.height();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.layout.class_count() != class_count) {
            throw std::invalid_argument("pair " + std::to_string(i) + " has class count " +
                                        std::to_string(s.layout.class_count()) + ", dataset has " +
                                        std::to_string(class_count));
        }
        if (s.layout.width() != w || s.layout.height() != h || s.image.width() != w || s.image.height() != h) {
            throw ShapeError("pair " + std::to_string(i) + " does not match dataset size " + std::to_string(w) + "x" +
                             std::to_string(h));
        }
    }
}

double palette_min_angle_deg(const std::vector<Rgb>& palette)
{
    double best = 180.0;
    for (std::size_t i = 0; i < palette.size(); ++i)
        for (std::size_t j = i + 1; j < palette.size(); ++j) {
            double dot = 0, ni = 0, nj = 0;
            for (int k = 0; k < 3; ++k) {
                dot += double(palette[i][k]) * palette[j][k];
                ni += double(palette[i][k]) * palette[i][k];
                nj += double(palette[j][k]) * palette[j][k];
            }
            const double c = std::clamp(dot / std::sqrt(ni * nj), -1.0, 1.0);
            best = std::min(best, std::acos(c) * 180.0 / std::numbers::pi);
        }
    return best;
}

void SyntheticWorldConfig::validate() const
{
    if (width < 8 || height < 8) throw std::invalid_argument("synthetic world needs at least 8x8 pixels");
    if (palette.size() != 4 || class_names.size() != 4) {
        throw std::invalid_argument("facade world has exactly 4 classes (wall, window, door, roof)");
    }
    for (const Rgb& c : palette) {
        for (float v : c) {
            if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("palette colour outside [0,1]");
        }
        if (c[0] + c[1] + c[2] <= 0.0f) throw std::invalid_argument("palette colour must be non-zero");
    }
    if (palette_min_angle_deg(palette) < min_separation_deg) {
        throw std::invalid_argument("palette colours closer than " + std::to_string(min_separation_deg) + " degrees");
    }
    if (!(illumination_lo > 0.0 && illumination_lo <= illumination_hi)) {
        throw std::invalid_argument("illumination range must satisfy 0 < lo <= hi");
    }
    if (roof_min > roof_max || window_rows_min > window_rows_max || window_cols_min > window_cols_max ||
        window_size_min > window_size_max || door_width_min > door_width_max || door_height_min > door_height_max) {
        throw std::invalid_argument("geometry ranges must satisfy min <= max");
    }
    if (window_rows_min == 0 || window_cols_min == 0 || window_size_min == 0) {
        throw std::invalid_argument("window grid must be non-empty");
    }
}

SemanticLayout synth_layout(const SyntheticWorldConfig& config, Rng& rng)
{
    for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
        SemanticLayout l(config.width, config.height, config.class_count(), static_cast<std::uint8_t>(kWall));
        const std::size_t w = config.width, h = config.height;

        const std::size_t roof = draw(rng, config.roof_min, config.roof_max);
        fill_rect(l, 0, 0, w, roof, kRoof);

        const std::size_t door_w = draw(rng, config.door_width_min, config.door_width_max);
        const std::size_t door_h = draw(rng, config.door_height_min, config.door_height_max);
        const std::size_t rows = draw(rng, config.window_rows_min, config.window_rows_max);
        const std::size_t cols = draw(rng, config.window_cols_min, config.window_cols_max);
        const std::size_t win_w = draw(rng, config.window_size_min, config.window_size_max);
        const std::size_t win_h = draw(rng, config.window_size_min, config.window_size_max);
        const std::size_t door_slack = w > door_w + 4 ? w - door_w - 4 : 0;
        const std::size_t door_x = 2 + draw(rng, 0, door_slack);

        // windows fill the band between the roof and the ground floor
        const std::size_t top = roof + 1;
        const std::size_t bottom = h > door_h ? h - door_h : 0;
        if (bottom > top + rows) {
            const std::size_t pitch_y = (bottom - top) / rows;
            const std::size_t pitch_x = (w - 2) / cols;
            const std::size_t ww = std::min(win_w, pitch_x > 1 ? pitch_x - 1 : 0);
            const std::size_t wh = std::min(win_h, pitch_y > 1 ? pitch_y - 1 : 0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t y0 = top + r * pitch_y + (pitch_y - wh) / 2;
                    const std::size_t x0 = 1 + c * pitch_x + (pitch_x - ww) / 2;
                    fill_rect(l, x0, y0, ww, wh, kWindow);
                }
        }
        if (door_h > 0 && door_w > 0 && door_h <= h) fill_rect(l, door_x, h - door_h, door_w, door_h, kDoor);

        const auto hist = l.class_histogram();
        if (std::all_of(hist.begin(), hist.end(), [](std::size_t n) { return n > 0; })) return l;
    }
    throw std::runtime_error("synthetic layout stayed degenerate (zero-area class) after " +
                             std::to_string(config.max_retries + 1) + " attempts");
}

ImageRGB render_layout(const SyntheticWorldConfig& config, const SemanticLayout& layout, double illumination)
{
    const std::size_t w = layout.width(), h = layout.height();
    ImageRGB img(w, h);
    for (std::size_t x = 0; x < w; ++x) {
        const double ramp = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) - 0.5 : 0.0;
        const double shade = 1.0 + config.shading_strength * ramp;
        for (std::size_t y = 0; y < h; ++y) {
            const Rgb& base = config.palette.at(layout.at(y, x));
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = static_cast<double>(base[c]) * illumination * shade;
                img.set(c, y, x, static_cast<float>(std::clamp(v, 0.0, 1.0)));
            }
        }
    }
    return img;
}

namespace {

void generate_into(const SyntheticWorldConfig& config, std::size_t count, Split tag, Rng& rng, Dataset& out)
{
    std::uniform_real_distribution<double> illum(config.illumination_lo, config.illumination_hi);
    for (std::size_t i = 0; i < count; ++i) {
        SemanticLayout layout = synth_layout(config, rng);
        const double factor = config.illumination_lo == config.illumination_hi ? config.illumination_lo : illum(rng);
        ImageRGB image = render_layout(config, layout, factor);
        out.samples.push_back(Sample{std::move(layout), std::move(image), tag});
    }
}

} // namespace

Dataset synth_generate(const SyntheticWorldConfig& config, std::size_t count, Split tag)
{
    if (count == 0) throw std::invalid_argument("synth_generate: count must be >= 1");
    config.validate();
    Rng rng(config.seed);
    Dataset ds;
    ds.class_count = config.class_count();
    generate_into(config, count, tag, rng, ds);
    return ds;
}

Dataset synth_generate_splits(const SyntheticWorldConfig& config, std::size_t train_count, std::size_t test_count)
{
    if (train_count == 0) throw std::invalid_argument("synth_generate: train count must be >= 1");
    config.validate();
    Rng rng(config.seed);
    Dataset ds;
    ds.class_count = config.class_count();
    generate_into(config, train_count, Split::train, rng, ds);
    generate_into(config, test_count, Split::test, rng, ds);
    return ds;
}

} // namespace divsynth
