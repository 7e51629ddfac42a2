// divsynth: dataset generation, training, evaluation, sweeps and serving.

#include "divsynth/checkpoint.hpp"
#include "divsynth/config.hpp"
#include "divsynth/evaluation.hpp"
#include "divsynth/netpbm.hpp"
#include "divsynth/serve.hpp"
#include "divsynth/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace divsynth;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr std::size_t kSeparator = 2;

/// Failures caused by what the user passed in, as opposed to the run itself.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigFlags {
    std::string file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
        cmd->add_option("--set", sets, "override one key, e.g. --set beta=0 (repeatable)");
        cmd->add_option("--seed", seed, "run seed (overrides DIVSYNTH_SEED and the config file)");
    }

    /// file < DIVSYNTH_SEED < flags
    RunConfig resolve() const
    {
        RunConfig c;
        if (!file.empty()) c.apply_file(file);
        c.apply_env();
        for (const std::string& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            c.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) c.set("seed", std::to_string(*seed));
        c.validate();
        return c;
    }
};

struct LoadedModel {
    RunConfig config;
    std::unique_ptr<Synthesizer> model;
};

LoadedModel load_model(const fs::path& checkpoint)
{
    const auto entries = checkpoint_load(checkpoint);
    LoadedModel m{config_from_text(unpack_text(find_entry(entries, "meta.config").value)), nullptr};
    m.model = load_synthesizer(m.config.model_spec(), m.config.base(), entries);
    return m;
}

/// Side-by-side montage with white separator columns (none at the edges).
ImageRGB montage_row(const std::vector<ImageRGB>& images)
{
    const std::size_t w = images.at(0).width(), h = images[0].height();
    ImageRGB out(images.size() * w + (images.size() - 1) * kSeparator, h, 1.0f);
    for (std::size_t k = 0; k < images.size(); ++k)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) out.set(c, y, k * (w + kSeparator) + x, images[k].at(c, y, x));
    return out;
}

ImageRGB montage_grid(const std::vector<ImageRGB>& images, std::size_t rows, std::size_t cols)
{
    const std::size_t w = images.at(0).width(), h = images[0].height();
    ImageRGB out(cols * w + (cols - 1) * kSeparator, rows * h + (rows - 1) * kSeparator, 1.0f);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t q = 0; q < cols; ++q) {
            const ImageRGB& img = images[r * cols + q];
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        out.set(c, r * (h + kSeparator) + y, q * (w + kSeparator) + x, img.at(c, y, x));
        }
    return out;
}

std::vector<double> parse_steps(const std::string& text)
{
    std::vector<double> out;
    if (text.find(',') == std::string::npos) {
        std::size_t count = 0;
        try {
            count = std::stoul(text);
        } catch (const std::exception&) {
            throw UsageError("--steps must be a count or a comma-separated list, got '" + text + "'");
        }
        if (count < 2) throw UsageError("--steps count must be >= 2");
        for (std::size_t k = 0; k < count; ++k) out.push_back(-1.0 + 2.0 * double(k) / double(count - 1));
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("--steps: '" + item + "' is not a number");
        }
    }
    if (out.size() < 2) throw UsageError("--steps needs at least two values");
    return out;
}

int cmd_synth(const ConfigFlags& flags, const fs::path& out, std::optional<std::size_t> count,
              std::optional<std::size_t> test_count)
{
    RunConfig c = flags.resolve();
    if (count) c.set("train_count", std::to_string(*count));
    if (test_count) c.set("test_count", std::to_string(*test_count));
    c.validate();
    std::cerr << "# resolved config\n" << c.resolved_text();
    const Dataset ds = synth_generate_splits(c.world(), c.train_count(), c.test_count());
    fs::create_directories(out);
    save_dataset(out, ds);
    write_file_atomic(out / "config.txt", c.resolved_text());
    std::cout << "wrote " << ds.split(Split::train).size() << " train and " << ds.split(Split::test).size()
              << " test pairs to " << out.string() << "\n";
    return 0;
}

Dataset load_data_dir(const fs::path& dir, std::size_t classes, bool need_train, bool need_test)
{
    Dataset ds;
    ds.class_count = classes;
    const fs::path train = dir / "train_manifest.tsv", test = dir / "test_manifest.tsv";
    if (need_train && !fs::exists(train)) throw UsageError("no train_manifest.tsv in " + dir.string());
    if (need_test && !fs::exists(test)) throw UsageError("no test_manifest.tsv in " + dir.string());
    if (fs::exists(train)) ds.append(load_dataset(train, classes, Split::train));
    if (fs::exists(test)) ds.append(load_dataset(test, classes, Split::test));
    return ds;
}

int cmd_train(const ConfigFlags& flags, const fs::path& data, const fs::path& out, const std::string& resume)
{
    RunConfig c;
    std::vector<NamedTensor> restored;
    if (!resume.empty()) {
        restored = checkpoint_load(resume);
        c = config_from_text(unpack_text(find_entry(restored, "meta.config").value));
    } else {
        c = flags.resolve();
    }
    const std::string resolved = c.resolved_text();
    std::cerr << "# resolved config\n" << resolved;
    const Dataset ds = load_data_dir(data, c.world().class_count(), true, false);

    Trainer trainer(c.model_spec(), c.train_config());
    trainer.set_config_echo(resolved);
    if (!restored.empty()) trainer.restore(restored);
    fs::create_directories(out);
    write_file_atomic(out / "config.txt", resolved);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochMetrics& m) {
        std::fprintf(stderr, "epoch %zu/%zu base %.5f div %.5f total %.5f\n", m.epoch, trainer.config().epochs,
                     m.loss_base, m.loss_div, m.loss_total);
    };
    try {
        trainer.train(ds, out, hooks);
    } catch (const TrainingAborted& e) {
        checkpoint_save(out / "abort_inputs.dsyn", e.inputs());
        throw std::runtime_error(std::string(e.what()) + "; inputs written to " + (out / "abort_inputs.dsyn").string());
    }
    std::cout << "trained " << trainer.epochs_done() << " epochs; checkpoint " << (out / "final.dsyn").string() << "\n";
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, std::optional<std::size_t> samples,
             std::uint64_t seed, const std::string& baseline, const std::string& out_csv)
{
    LoadedModel m = load_model(checkpoint);
    EvalOptions opt = m.config.eval_options();
    if (samples) opt.diversity_samples = *samples;
    if (opt.diversity_samples < 2) throw UsageError("--samples must be >= 2");
    const SyntheticWorldConfig world = m.config.world();
    const Dataset ds = load_data_dir(data, world.class_count(), false, true);
    const auto split = ds.split(Split::test);

    std::vector<MetricsReport> reports;
    if (!baseline.empty()) {
        LoadedModel b = load_model(baseline);
        Rng rng(seed);
        reports.push_back(reality_report(*b.model, split, world.palette, opt, rng, "baseline"));
    }
    Rng rng(seed);
    reports.push_back(reality_report(*m.model, split, world.palette, opt, rng, "model"));

    std::string table = report_table(reports, world.class_names);
    if (reports.size() == 2) {
        const Thresholds t = m.config.thresholds();
        const MetricsReport &base = reports[0], &mod = reports[1];
        const double ratio = mod.diversity / std::max(base.diversity, 1e-12);
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "\nthresholds: diversity ratio %.2f (need >= %.2f) %s; mean linkage %.2f (need >= %.2f) %s; "
                      "accuracy gap %.4f (need <= %.4f) %s\n",
                      ratio, t.diversity_ratio, ratio >= t.diversity_ratio ? "PASS" : "FAIL", mod.mean_linkage,
                      t.linkage, mod.mean_linkage >= t.linkage ? "PASS" : "FAIL",
                      std::abs(mod.accuracy - base.accuracy), t.accuracy_gap,
                      std::abs(mod.accuracy - base.accuracy) <= t.accuracy_gap ? "PASS" : "FAIL");
        table += buf;
    }
    std::cout << table;
    if (!out_csv.empty()) write_file_atomic(out_csv, report_csv(reports, world.class_names));
    return 0;
}

int cmd_sweep(const fs::path& checkpoint, const fs::path& layout_path, std::size_t cls, const std::string& steps_text,
              const fs::path& out)
{
    LoadedModel m = load_model(checkpoint);
    const std::size_t classes = m.model->class_count();
    if (cls >= classes) throw UsageError("--class must lie in [0," + std::to_string(classes) + ")");
    const std::vector<double> steps = parse_steps(steps_text);
    const SemanticLayout layout = read_layout(layout_path, classes);
    std::vector<ImageRGB> row;
    for (double v : steps) {
        std::vector<double> n(classes, 0.0);
        n[cls] = v;
        row.push_back(m.model->render(layout, NoiseVector::clamped(n)));
    }
    write_image(out, montage_row(row));
    if (layout.contains(cls)) std::cout << "linkage " << linkage_from_sweep(row, layout, cls) << "\n";
    return 0;
}

int cmd_grid(const fs::path& checkpoint, const fs::path& layout_path, std::size_t rows, std::size_t cols,
             std::uint64_t seed, const fs::path& out)
{
    if (rows == 0 || cols == 0) throw UsageError("--rows and --cols must be >= 1");
    LoadedModel m = load_model(checkpoint);
    const SemanticLayout layout = read_layout(layout_path, m.model->class_count());
    Rng rng(seed);
    std::vector<ImageRGB> images;
    for (std::size_t k = 0; k < rows * cols; ++k)
        images.push_back(m.model->render(layout, NoiseVector::uniform(m.model->class_count(), rng)));
    write_image(out, montage_grid(images, rows, cols));
    return 0;
}

int cmd_compositions(const std::string& list)
{
    std::vector<std::uint64_t> ks;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            throw UsageError("--k-per-class: '" + item + "' is not a positive integer");
        }
        if (used != item.size() || item.find('-') != std::string::npos) {
            throw UsageError("--k-per-class: '" + item + "' is not a positive integer");
        }
        ks.push_back(v);
    }
    try {
        std::cout << count_compositions(ks) << "\n";
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Layout-to-image synthesis with per-segment noise control"};
    app.require_subcommand(1);

    ConfigFlags synth_flags, train_flags;
    std::string out, data, checkpoint, layout, steps = "5", resume, baseline, klist, layouts_dir, bind = "127.0.0.1";
    std::optional<std::size_t> count, test_count, samples;
    std::size_t cls = 0, rows = 3, cols = 3;
    std::uint64_t seed = 1;
    int port = 7878;

    auto* synth = app.add_subcommand("synth", "generate the synthetic facade dataset");
    synth_flags.add_to(synth);
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--count", count, "training pairs");
    synth->add_option("--test-count", test_count, "test pairs");

    auto* train = app.add_subcommand("train", "train a generator");
    train_flags.add_to(train);
    train->add_option("--data", data, "dataset directory with train_manifest.tsv")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", out, "run directory for checkpoints and metrics.csv")->required();
    train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "accuracy, IoU, diversity and linkage on the test split");
    eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data, "dataset directory with test_manifest.tsv")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--samples", samples, "K renders per layout for the diversity score");
    eval->add_option("--seed", seed, "evaluation noise seed");
    eval->add_option("--baseline", baseline, "second checkpoint to compare against")->check(CLI::ExistingFile);
    eval->add_option("--out", out, "also write the report as CSV");

    auto* sweep = app.add_subcommand("sweep", "render one class's noise sweep as a montage");
    sweep->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    sweep->add_option("--layout", layout, "layout PGM")->required()->check(CLI::ExistingFile);
    sweep->add_option("--class", cls, "class index")->required();
    sweep->add_option("--steps", steps, "step count (spread over [-1,1]) or comma-separated values");
    sweep->add_option("--out", out, "output PPM")->required();

    auto* grid = app.add_subcommand("grid", "render a grid of samples under i.i.d. noise");
    grid->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    grid->add_option("--layout", layout, "layout PGM")->required()->check(CLI::ExistingFile);
    grid->add_option("--rows", rows);
    grid->add_option("--cols", cols);
    grid->add_option("--seed", seed);
    grid->add_option("--out", out, "output PPM")->required();

    auto* comps = app.add_subcommand("compositions", "print the product of valid values per class");
    comps->add_option("--k-per-class", klist, "comma-separated counts, e.g. 2,2,2")->required();

    auto* serve = app.add_subcommand("serve", "HTTP inference service");
    serve->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    serve->add_option("--layouts-dir", layouts_dir)->required()->check(CLI::ExistingDirectory);
    serve->add_option("--port", port)->check(CLI::Range(1, 65535));
    serve->add_option("--bind", bind);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "divsynth: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(synth_flags, out, count, test_count);
        if (*train) return cmd_train(train_flags, data, out, resume);
        if (*eval) return cmd_eval(checkpoint, data, samples, seed, baseline, out);
        if (*sweep) return cmd_sweep(checkpoint, layout, cls, steps, out);
        if (*grid) return cmd_grid(checkpoint, layout, rows, cols, seed, out);
        if (*comps) return cmd_compositions(klist);
        if (*serve) {
            run_server(ServeState::load(checkpoint, layouts_dir), bind, port);
            return 0;
        }
    } catch (const std::invalid_argument& e) { // ConfigError, ShapeError, UsageError
        std::cerr << "divsynth: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "divsynth: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "divsynth: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "divsynth: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
