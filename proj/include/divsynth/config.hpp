#pragma once

#include "divsynth/evaluation.hpp"
#include "divsynth/synth.hpp"
#include "divsynth/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace divsynth {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pass/fail bounds for the end-to-end comparison of a diversity-trained model
/// against its beta = 0 twin.
struct Thresholds {
    double diversity_ratio = 3.0;
    double linkage = 2.0;
    double accuracy_gap = 0.05;
};

/// Every tunable of a run as flat `key = value` pairs. Later assignments win,
/// so callers apply the file first, then the environment, then flags.
class RunConfig {
public:
    RunConfig();

    /// Assigns one key; unknown keys and malformed values throw ConfigError.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    bool is_key(const std::string& key) const;
    static std::vector<std::string> keys();

    /// `key = value` lines; `#` starts a comment; blank lines ignored.
    void apply_text(const std::string& text, const std::string& source = "<config>");
    void apply_file(const std::filesystem::path& path);
    /// Honours DIVSYNTH_SEED if set.
    void apply_env();

    /// Every key with its resolved value, in a fixed order.
    std::string resolved_text() const;

    BaseKind base() const noexcept { return base_; }
    std::uint64_t seed() const noexcept { return seed_; }

    SyntheticWorldConfig world() const;
    ModelSpec model_spec() const;
    TrainConfig train_config() const;
    EvalOptions eval_options() const;
    Thresholds thresholds() const { return thresholds_; }
    std::size_t train_count() const noexcept { return train_count_; }
    std::size_t test_count() const noexcept { return test_count_; }

    /// Cross-field checks; throws ConfigError.
    void validate() const;

private:
    struct Field;
    static const std::vector<Field>& fields();

    std::uint64_t seed_ = 1;
    BaseKind base_ = BaseKind::crn;
    std::optional<std::size_t> epochs_;
    std::optional<double> lr_;
    std::optional<double> beta_;
    std::optional<bool> augment_;
    TrainConfig train_;
    SyntheticWorldConfig world_;
    ModelSpec spec_;
    EvalOptions eval_;
    Thresholds thresholds_;
    std::size_t train_count_ = 256;
    std::size_t test_count_ = 64;
};

/// Parses the config echo stored in a checkpoint.
RunConfig config_from_text(const std::string& text);

} // namespace divsynth
