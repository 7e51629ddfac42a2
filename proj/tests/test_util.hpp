#pragma once

#include "divsynth/layout.hpp"
#include "divsynth/synth.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

using namespace divsynth;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(std::move(shape));
    for (double& v : t.data()) v = u(rng);
    return t;
}

inline SemanticLayout random_layout(std::size_t w, std::size_t h, std::size_t classes, Rng& rng)
{
    std::uniform_int_distribution<int> u(0, static_cast<int>(classes) - 1);
    SemanticLayout l(w, h, classes);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) l.set(y, x, static_cast<std::size_t>(u(rng)));
    return l;
}

inline ImageRGB random_image(std::size_t w, std::size_t h, Rng& rng)
{
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageRGB img(w, h);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) img.set(c, y, x, u(rng));
    return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("divsynth_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testutil
