#pragma once

#include "divsynth/models.hpp"
#include "divsynth/synth.hpp"

#include <optional>
#include <string>
#include <vector>

namespace divsynth {

/// Assigns each pixel the palette class whose colour makes the smallest angle
/// with the pixel's RGB vector. Illumination only scales a colour, so the
/// angle ignores it. Ties go to the lower class index; black pixels get class 0.
SemanticLayout oracle_segment(const ImageRGB& image, const std::vector<Rgb>& palette);

double accuracy(const SemanticLayout& pred, const SemanticLayout& truth);

struct IoUResult {
    /// Mean over classes present in the ground truth.
    double mean = 0.0;
    /// One entry per class; empty for classes absent from both maps.
    std::vector<std::optional<double>> per_class;
};

IoUResult iou(const SemanticLayout& pred, const SemanticLayout& truth);

/// Mean |a-b| over every pixel and channel.
double image_l1(const ImageRGB& a, const ImageRGB& b);

/// Mean image_l1 over all unordered pairs.
double mean_pairwise_l1(const std::vector<ImageRGB>& images);

/// Mean pairwise distance of K renders of one layout under i.i.d. uniform noise.
double diversity_score(const Synthesizer& model, const SemanticLayout& layout, std::size_t samples, Rng& rng);

inline constexpr double kLinkageFloor = 1e-6;
inline constexpr double kLinkageCap = 1e6;

std::vector<double> default_linkage_steps();

/// inside / max(outside, floor), capped; exactly zero change outside gives the cap.
double linkage_ratio(double inside, double outside);

/// Sweeps n^cls over `steps` with every other entry at 0 and compares how much
/// consecutive renders change inside versus outside segment cls.
double linkage_score(const Synthesizer& model, const SemanticLayout& layout, std::size_t cls,
                     const std::vector<double>& steps);

/// Same measurement from a precomputed sweep of renders.
double linkage_from_sweep(const std::vector<ImageRGB>& sweep, const SemanticLayout& layout, std::size_t cls);

struct EvalOptions {
    std::size_t samples_per_layout = 4; // reality images per layout
    std::size_t diversity_samples = 8;  // K
    std::vector<double> linkage_steps = default_linkage_steps();
    std::size_t max_layouts = 0; // 0 = whole split
};

struct MetricsReport {
    std::string label;
    std::size_t layouts = 0;
    std::size_t images = 0;
    double accuracy = 0.0;
    double mean_iou = 0.0;
    std::vector<std::optional<double>> per_class_iou;
    double diversity = 0.0;
    /// Mean linkage per class over layouts containing it.
    std::vector<std::optional<double>> linkage;
    double mean_linkage = 0.0;
};

/// Running accuracy / IoU totals over generated images.
class RealityAccumulator {
public:
    RealityAccumulator(std::vector<Rgb> palette);
    void add(const ImageRGB& image, const SemanticLayout& truth);
    std::size_t images() const noexcept { return images_; }
    double accuracy() const;
    double mean_iou() const;
    std::vector<std::optional<double>> per_class_iou() const;

private:
    std::vector<Rgb> palette_;
    std::size_t images_ = 0;
    double accuracy_sum_ = 0.0;
    double iou_sum_ = 0.0;
    std::vector<double> class_sum_;
    std::vector<std::size_t> class_count_;
};

MetricsReport reality_report(const Synthesizer& model, const std::vector<const Sample*>& split,
                             const std::vector<Rgb>& palette, const EvalOptions& options, Rng& rng,
                             std::string label = "model");

std::string report_csv(const std::vector<MetricsReport>& reports, const std::vector<std::string>& class_names);
/// Aligned text table with Accuracy and IoU columns per model, headed by a
/// note on the segmenter used.
std::string report_table(const std::vector<MetricsReport>& reports, const std::vector<std::string>& class_names);

} // namespace divsynth
