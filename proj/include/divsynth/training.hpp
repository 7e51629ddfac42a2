#pragma once

#include "divsynth/adam.hpp"
#include "divsynth/gradient_check.hpp"
#include "divsynth/losses.hpp"
#include "divsynth/models.hpp"
#include "divsynth/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace divsynth {

enum class BaseKind { gan, crn };

const char* base_kind_name(BaseKind kind);
BaseKind parse_base_kind(const std::string& text);

/// Architecture of every network a run may build.
struct ModelSpec {
    std::size_t classes = 4;
    std::size_t width = 32;
    std::size_t height = 32;
    GeneratorUNet::Config unet;
    PatchDiscriminator::Config disc;
    CrnCascade::Config crn;
    FeatureExtractor::Config phi;

    void validate(BaseKind base) const;
};

struct TrainConfig {
    BaseKind base = BaseKind::crn;
    std::size_t epochs = 100;
    AdamConfig adam;
    LossConfig loss;
    /// false drops the diversity term entirely: the base network trained alone
    /// under the same noise and shuffling stream.
    bool use_diversity = true;
    std::uint64_t seed = 1;
    /// Write a checkpoint every N epochs; 0 writes only the final one.
    std::size_t checkpoint_every = 0;
    // random resize/crop/flip, GAN path only
    bool augment = true;
    std::size_t augment_jitter = 4;
    double flip_prob = 0.5;

    void validate(std::size_t classes) const;
    /// Defaults for a base kind: CRN 100 epochs and beta 10, GAN 200 epochs and beta 0.1.
    static TrainConfig defaults_for(BaseKind base);
};

struct StepReport {
    std::vector<std::string> phases; // in execution order, e.g. {"D", "G"}
    NoiseVector noise;
    double loss_base = 0.0;
    double loss_div = 0.0;
    double loss_total = 0.0;
    std::optional<double> loss_disc_before;
    std::optional<double> loss_disc_after;
    double grad_norm_g = 0.0;
    double grad_norm_d = 0.0;
    std::size_t hindsight_index = 0;

    bool disc_improved() const { return loss_disc_before && loss_disc_after && *loss_disc_after > *loss_disc_before; }
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss_base = 0.0;
    double loss_div = 0.0;
    double loss_total = 0.0;
    std::optional<double> loss_disc;
};

/// Raised when a step produces a non-finite loss. Carries the inputs of the
/// offending step so they can be written out for inspection.
class TrainingAborted : public NonFiniteError {
public:
    TrainingAborted(const std::string& what, std::vector<NamedTensor> inputs)
        : NonFiniteError(what), inputs_(std::move(inputs))
    {
    }
    const std::vector<NamedTensor>& inputs() const noexcept { return inputs_; }

private:
    std::vector<NamedTensor> inputs_;
};

struct TrainHooks {
    std::function<void(std::size_t epoch, std::size_t index, const StepReport&)> on_step;
    std::function<void(const EpochMetrics&)> on_epoch;
};

/// Owns the networks, optimizer state and RNG stream of one run.
class Trainer {
public:
    Trainer(ModelSpec spec, TrainConfig config);

    const ModelSpec& spec() const noexcept { return spec_; }
    const TrainConfig& config() const noexcept { return config_; }
    std::size_t epochs_done() const noexcept { return epochs_done_; }
    const std::vector<EpochMetrics>& history() const noexcept { return history_; }
    Rng& rng() noexcept { return rng_; }
    /// Text stored as meta.config in every checkpoint this trainer writes.
    void set_config_echo(std::string text) { config_echo_ = std::move(text); }
    const std::string& config_echo() const noexcept { return config_echo_; }

    const CrnCascade* crn() const noexcept { return crn_ ? &*crn_ : nullptr; }
    const GeneratorUNet* unet() const noexcept { return unet_ ? &*unet_ : nullptr; }
    const PatchDiscriminator* disc() const noexcept { return disc_ ? &*disc_ : nullptr; }
    const FeatureExtractor& phi() const noexcept { return phi_; }
    const ParameterSet& generator_params() const;
    std::unique_ptr<Synthesizer> synthesizer() const;

    /// One training step on a pair: draws noise (and dropout masks on the GAN
    /// path) from the run's stream.
    StepReport step(const SemanticLayout& layout, const ImageRGB& image);
    /// Same, with the noise supplied by the caller.
    StepReport step_with_noise(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise);

    /// Shuffles the train split, augments if configured, steps through every pair.
    EpochMetrics run_epoch(const std::vector<const Sample*>& train, const TrainHooks& hooks = {});

    /// Runs the remaining epochs up to config().epochs. With a non-empty
    /// out_dir, writes metrics.csv after every epoch and checkpoints per cadence.
    void train(const Dataset& dataset, const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

    /// Full run state: parameters, Adam moments, RNG stream, epoch count,
    /// metrics history and the config echo.
    std::vector<NamedTensor> checkpoint() const;
    /// Restores state saved by checkpoint(); unknown or missing entries throw.
    void restore(const std::vector<NamedTensor>& entries);

    std::string metrics_csv() const;

private:
    StepReport crn_step(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise);
    StepReport gan_step(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise);
    std::vector<NamedTensor> abort_inputs(const SemanticLayout& layout, const ImageRGB& image,
                                          const NoiseVector& noise) const;

    ModelSpec spec_;
    TrainConfig config_;
    std::optional<CrnCascade> crn_;
    std::optional<GeneratorUNet> unet_;
    std::optional<PatchDiscriminator> disc_;
    FeatureExtractor phi_;
    AdamState adam_g_;
    AdamState adam_d_;
    Rng rng_;
    std::size_t epochs_done_ = 0;
    std::vector<EpochMetrics> history_;
    std::string config_echo_;
};

/// Rebuilds the generator stored in a checkpoint for inference.
std::unique_ptr<Synthesizer> load_synthesizer(const ModelSpec& spec, BaseKind base,
                                              const std::vector<NamedTensor>& entries);

std::string format_metrics_csv(const std::vector<EpochMetrics>& rows, bool with_disc);

} // namespace divsynth
