#include "divsynth/training.hpp"
#include "divsynth/augment.hpp"
#include "divsynth/checkpoint.hpp"
#include "divsynth/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace divsynth {

const char* base_kind_name(BaseKind kind)
{
    return kind == BaseKind::gan ? "gan" : "crn";
}

BaseKind parse_base_kind(const std::string& text)
{
    if (text == "gan") return BaseKind::gan;
    if (text == "crn") return BaseKind::crn;
    throw std::invalid_argument("base must be 'gan' or 'crn', got '" + text + "'");
}

void ModelSpec::validate(BaseKind base) const
{
    if (classes == 0) throw std::invalid_argument("model needs at least one class");
    if (unet.classes != classes || disc.classes != classes || crn.classes != classes) {
        throw std::invalid_argument("network class counts disagree with the model spec");
    }
    if (base == BaseKind::crn) {
        if ((crn.base_width << crn.doublings) != width || (crn.base_height << crn.doublings) != height) {
            throw std::invalid_argument("crn base size * 2^doublings must equal the image size " +
                                        std::to_string(width) + "x" + std::to_string(height));
        }
    }
    const std::size_t div = std::size_t{1} << phi.channels.size();
    if (width % div || height % div) throw std::invalid_argument("image size must be divisible by 2^phi stages");
    if (!(phi.gain > 0.0) || !std::isfinite(phi.gain)) throw std::invalid_argument("phi gain must be positive");
    if (!(phi.chroma_weight > 0.0) || !std::isfinite(phi.chroma_weight)) {
        throw std::invalid_argument("phi chroma weight must be positive");
    }
}

void TrainConfig::validate(std::size_t classes) const
{
    if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
    adam.validate();
    loss.validate(classes);
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw std::invalid_argument("flip probability must lie in [0,1]");
}

TrainConfig TrainConfig::defaults_for(BaseKind base)
{
    TrainConfig c;
    c.base = base;
    if (base == BaseKind::gan) {
        c.epochs = 200;
        c.loss.beta = 0.1;
    } else {
        c.epochs = 100;
        c.loss.beta = 10.0;
        // at 2e-4 the hinge is driven to its degenerate optimum (one fixed
        // offset of size lambda_c for any nonzero noise) well inside 100 epochs
        c.adam.lr = 5e-5;
        c.augment = false;
    }
    return c;
}

namespace {

std::string rng_to_text(const Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_text(const std::string& text)
{
    std::istringstream is(text);
    Rng rng;
    is >> rng;
    if (!is) throw CheckpointError("rng.state does not hold a valid generator state");
    return rng;
}

template <typename Inputs>
void require_finite(double v, const char* what, Inputs&& inputs)
{
    if (!std::isfinite(v)) throw TrainingAborted(std::string("non-finite ") + what + " loss", inputs());
}

void push_adam(std::vector<NamedTensor>& out, const std::string& prefix, const ParameterSet& params,
               const AdamState& state)
{
    const auto& e = params.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
        out.push_back({prefix + "m." + e[i].name, state.m[i]});
        out.push_back({prefix + "v." + e[i].name, state.v[i]});
    }
    out.push_back({prefix + "t", pack_u64(state.t)});
}

void restore_adam(const std::vector<NamedTensor>& entries, const std::string& prefix, const ParameterSet& params,
                  AdamState& state)
{
    AdamState s = AdamState::zeros_like(params);
    const auto& e = params.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
        const NamedTensor& m = find_entry(entries, prefix + "m." + e[i].name);
        const NamedTensor& v = find_entry(entries, prefix + "v." + e[i].name);
        if (m.value.shape() != e[i].value.shape() || v.value.shape() != e[i].value.shape()) {
            throw CheckpointError("optimizer moments for " + e[i].name + " do not match the parameter shape");
        }
        s.m[i] = m.value;
        s.v[i] = v.value;
    }
    s.t = unpack_u64(find_entry(entries, prefix + "t").value);
    state = std::move(s);
}

std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text)
{
    std::vector<EpochMetrics> rows;
    std::istringstream is(text);
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4 && cells.size() != 5) throw CheckpointError("malformed metrics row: " + line);
        EpochMetrics m;
        m.epoch = std::stoull(cells[0]);
        m.loss_base = std::stod(cells[1]);
        m.loss_div = std::stod(cells[2]);
        m.loss_total = std::stod(cells[3]);
        if (cells.size() == 5) m.loss_disc = std::stod(cells[4]);
        rows.push_back(m);
    }
    return rows;
}

class OwnedCrn : public Synthesizer {
public:
    OwnedCrn(CrnCascade net) : net_(std::move(net)), synth_(net_) {}
    std::size_t class_count() const override { return synth_.class_count(); }
    ImageRGB render(const SemanticLayout& l, const NoiseVector& n) const override { return synth_.render(l, n); }

private:
    CrnCascade net_;
    CrnSynthesizer synth_;
};

class OwnedUNet : public Synthesizer {
public:
    OwnedUNet(GeneratorUNet net) : net_(std::move(net)), synth_(net_) {}
    std::size_t class_count() const override { return synth_.class_count(); }
    ImageRGB render(const SemanticLayout& l, const NoiseVector& n) const override { return synth_.render(l, n); }

private:
    GeneratorUNet net_;
    UNetSynthesizer synth_;
};

} // namespace

Trainer::Trainer(ModelSpec spec, TrainConfig config)
    : spec_(std::move(spec)), config_(std::move(config)), phi_(spec_.phi), rng_(config_.seed)
{
    spec_.validate(config_.base);
    config_.validate(spec_.classes);
    if (config_.base == BaseKind::crn) {
        crn_.emplace(spec_.crn, config_.seed);
        adam_g_ = AdamState::zeros_like(crn_->params());
    } else {
        unet_.emplace(spec_.unet, config_.seed);
        unet_->check_input(spec_.height, spec_.width);
        disc_.emplace(spec_.disc, config_.seed);
        adam_g_ = AdamState::zeros_like(unet_->params());
        adam_d_ = AdamState::zeros_like(disc_->params());
    }
}

const ParameterSet& Trainer::generator_params() const
{
    return crn_ ? crn_->params() : unet_->params();
}

std::unique_ptr<Synthesizer> Trainer::synthesizer() const
{
    if (crn_) return std::make_unique<CrnSynthesizer>(*crn_);
    return std::make_unique<UNetSynthesizer>(*unet_);
}

StepReport Trainer::step(const SemanticLayout& layout, const ImageRGB& image)
{
    return step_with_noise(layout, image, NoiseVector::uniform(spec_.classes, rng_));
}

StepReport Trainer::step_with_noise(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise)
{
    if (layout.width() != spec_.width || layout.height() != spec_.height || image.width() != spec_.width ||
        image.height() != spec_.height) {
        throw ShapeError("training pair is not " + std::to_string(spec_.width) + "x" + std::to_string(spec_.height));
    }
    if (layout.class_count() != spec_.classes || noise.size() != spec_.classes) {
        throw ShapeError("training pair or noise does not have " + std::to_string(spec_.classes) + " classes");
    }
    return crn_ ? crn_step(layout, image, noise) : gan_step(layout, image, noise);
}

std::vector<NamedTensor> Trainer::abort_inputs(const SemanticLayout& layout, const ImageRGB& image,
                                               const NoiseVector& noise) const
{
    std::vector<float> n(noise.entries().begin(), noise.entries().end());
    const Shape noise_shape{n.size()};
    return {NamedTensor{"input.layout", one_hot_encode<float>(layout)},
            NamedTensor{"input.image", image.to_tensor<float>()},
            NamedTensor{"input.noise", Tensor<float>(noise_shape, std::move(n))}};
}

StepReport Trainer::crn_step(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise)
{
    StepReport r;
    r.noise = noise;
    Tape<float> tape;
    const BoundParameters<float> p(tape, crn_->params(), true);
    const auto with_noise = crn_->forward_images(tape, p, layout, noise);
    const auto without = crn_->forward_images(tape, p, layout, NoiseVector::zeros(spec_.classes));
    const Var<float> real = tape.constant(image.to_tensor<float>());
    const auto& lk = config_.loss.lambda_k;

    // L_f on both the noise-fed and the zero-noise output, averaged
    Var<float> lf1, lf2;
    if (with_noise.size() == 1) {
        lf1 = losses::loss_content(phi_, with_noise[0], real, lk);
        lf2 = losses::loss_content(phi_, without[0], real, lk);
    } else {
        lf1 = losses::loss_hindsight(phi_, with_noise, real, lk, &r.hindsight_index);
        lf2 = losses::loss_hindsight(phi_, without, real, lk);
    }
    const Var<float> lf = ops::scale(ops::add(lf1, lf2), 0.5f);
    Var<float> total = lf;
    if (config_.use_diversity) {
        const Var<float> div = losses::diversity_hinged(without[0], with_noise[0], layout, noise,
                                                        config_.loss.class_bounds(spec_.classes));
        total = losses::objective_combined(lf, div, static_cast<float>(config_.loss.beta));
        r.loss_div = div.value().item();
    }
    r.loss_base = lf.value().item();
    r.loss_total = total.value().item();
    require_finite(r.loss_total, "generator", [&] { return abort_inputs(layout, image, noise); });

    tape.backward(total);
    const auto grads = p.gradients();
    r.grad_norm_g = gradient_norm(grads);
    adam_update(crn_->params(), grads, adam_g_, config_.adam);
    r.phases.push_back("G");
    return r;
}

StepReport Trainer::gan_step(const SemanticLayout& layout, const ImageRGB& image, const NoiseVector& noise)
{
    StepReport r;
    r.noise = noise;
    const DropoutMasks masks = unet_->sample_dropout(rng_, spec_.height, spec_.width);
    const Tensor<float> onehot = one_hot_encode<float>(layout);
    const Tensor<float> noise_ch = build_noise_channel<float>(layout, noise);
    const Tensor<float> zero_ch = build_noise_channel<float>(layout, NoiseVector::zeros(spec_.classes));
    const Tensor<float> real = image.to_tensor<float>();
    const float eps = static_cast<float>(config_.loss.log_epsilon);

    // D step: G is held constant and only its noise-fed output is shown to D
    Tensor<float> fake;
    {
        Tape<float> tape;
        const BoundParameters<float> g(tape, unet_->params(), false);
        fake = unet_->forward(g, tape.constant(onehot), tape.constant(noise_ch), &masks).value();
    }
    auto disc_objective = [&](Tape<float>& tape, const BoundParameters<float>& d) {
        const Var<float> oh = tape.constant(onehot);
        return losses::loss_discriminator(disc_->forward(d, oh, tape.constant(real)),
                                          disc_->forward(d, oh, tape.constant(fake)), eps);
    };
    {
        Tape<float> tape;
        const BoundParameters<float> d(tape, disc_->params(), true);
        const Var<float> ld = disc_objective(tape, d);
        r.loss_disc_before = ld.value().item();
        require_finite(*r.loss_disc_before, "discriminator", [&] { return abort_inputs(layout, image, noise); });
        tape.backward(ops::scale(ld, -1.0f)); // maximize
        const auto grads = d.gradients();
        r.grad_norm_d = gradient_norm(grads);
        adam_update(disc_->params(), grads, adam_d_, config_.adam);
    }
    {
        Tape<float> tape;
        const BoundParameters<float> d(tape, disc_->params(), false);
        r.loss_disc_after = disc_objective(tape, d).value().item();
    }
    r.phases.push_back("D");

    // G step: both forwards share the dropout masks so only the noise differs
    Tape<float> tape;
    const BoundParameters<float> g(tape, unet_->params(), true);
    const BoundParameters<float> d(tape, disc_->params(), false);
    const Var<float> oh = tape.constant(onehot);
    const Var<float> target = tape.constant(real);
    const Var<float> i1 = unet_->forward(g, oh, tape.constant(noise_ch), &masks);
    const Var<float> i2 = unet_->forward(g, oh, tape.constant(zero_ch), &masks);
    const float alpha = static_cast<float>(config_.loss.alpha);
    const Var<float> lg1 = losses::loss_generator(disc_->forward(d, oh, i1), i1, target, alpha, eps);
    const Var<float> lg2 = losses::loss_generator(disc_->forward(d, oh, i2), i2, target, alpha, eps);
    const Var<float> lf = ops::scale(ops::add(lg1, lg2), 0.5f);
    Var<float> total = lf;
    if (config_.use_diversity) {
        const Var<float> div =
            losses::diversity_hinged(i2, i1, layout, noise, config_.loss.class_bounds(spec_.classes));
        total = losses::objective_combined(lf, div, static_cast<float>(config_.loss.beta));
        r.loss_div = div.value().item();
    }
    r.loss_base = lf.value().item();
    r.loss_total = total.value().item();
    require_finite(r.loss_total, "generator", [&] { return abort_inputs(layout, image, noise); });
    tape.backward(total);
    const auto grads = g.gradients();
    r.grad_norm_g = gradient_norm(grads);
    adam_update(unet_->params(), grads, adam_g_, config_.adam);
    r.phases.push_back("G");
    return r;
}

EpochMetrics Trainer::run_epoch(const std::vector<const Sample*>& train, const TrainHooks& hooks)
{
    if (train.empty()) throw std::invalid_argument("training split is empty");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);

    const bool augmenting = config_.base == BaseKind::gan && config_.augment;
    const auto aug = AugmentParams::jittered(spec_.width, spec_.height, config_.augment_jitter, config_.flip_prob);
    EpochMetrics m;
    m.epoch = epochs_done_ + 1;
    double disc = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Sample& s = *train[order[i]];
        StepReport r;
        if (augmenting) {
            const auto [layout, image] = augment(s.layout, s.image, aug, rng_);
            r = step(layout, image);
        } else {
            r = step(s.layout, s.image);
        }
        m.loss_base += r.loss_base;
        m.loss_div += r.loss_div;
        m.loss_total += r.loss_total;
        if (r.loss_disc_before) disc += *r.loss_disc_before;
        if (hooks.on_step) hooks.on_step(m.epoch, i, r);
    }
    const double n = static_cast<double>(order.size());
    m.loss_base /= n;
    m.loss_div /= n;
    m.loss_total /= n;
    if (config_.base == BaseKind::gan) m.loss_disc = disc / n;
    epochs_done_ += 1;
    history_.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
    return m;
}

void Trainer::train(const Dataset& dataset, const std::filesystem::path& out_dir, const TrainHooks& hooks)
{
    dataset.validate();
    if (dataset.class_count != spec_.classes) throw std::invalid_argument("dataset class count does not match model");
    const auto train_split = dataset.split(Split::train);
    if (train_split.empty()) throw std::invalid_argument("dataset has no training pairs");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    while (epochs_done_ < config_.epochs) {
        run_epoch(train_split, hooks);
        if (out_dir.empty()) continue;
        write_file_atomic(out_dir / "metrics.csv", metrics_csv());
        if (config_.checkpoint_every && epochs_done_ % config_.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu.dsyn", epochs_done_);
            checkpoint_save(out_dir / name, checkpoint());
        }
    }
    if (!out_dir.empty()) {
        write_file_atomic(out_dir / "metrics.csv", metrics_csv());
        checkpoint_save(out_dir / "final.dsyn", checkpoint());
    }
}

std::vector<NamedTensor> Trainer::checkpoint() const
{
    std::vector<NamedTensor> out = generator_params().with_prefix("g.");
    if (disc_) {
        const auto d = disc_->params().with_prefix("d.");
        out.insert(out.end(), d.begin(), d.end());
    }
    push_adam(out, "adam.g.", generator_params(), adam_g_);
    if (disc_) push_adam(out, "adam.d.", disc_->params(), adam_d_);
    out.push_back({"rng.state", pack_text(rng_to_text(rng_))});
    out.push_back({"meta.base", pack_text(base_kind_name(config_.base))});
    out.push_back({"meta.epoch", pack_u64(epochs_done_)});
    out.push_back({"meta.metrics", pack_text(metrics_csv())});
    out.push_back({"meta.config", pack_text(config_echo_)});
    return out;
}

void Trainer::restore(const std::vector<NamedTensor>& entries)
{
    std::set<std::string> expected;
    for (const auto& n : checkpoint()) expected.insert(n.name);
    std::set<std::string> present;
    for (const NamedTensor& e : entries) {
        if (!expected.count(e.name)) throw CheckpointError("unknown tensor name " + e.name + " in checkpoint");
        if (!present.insert(e.name).second) throw CheckpointError("duplicate tensor " + e.name + " in checkpoint");
    }
    for (const std::string& name : expected)
        if (!present.count(name)) throw CheckpointError("checkpoint is missing " + name);
    if (unpack_text(find_entry(entries, "meta.base").value) != base_kind_name(config_.base)) {
        throw CheckpointError("checkpoint was written for a different base network");
    }

    if (crn_) {
        crn_->params().assign_from(entries, "g.");
        restore_adam(entries, "adam.g.", crn_->params(), adam_g_);
    } else {
        unet_->params().assign_from(entries, "g.");
        disc_->params().assign_from(entries, "d.");
        restore_adam(entries, "adam.g.", unet_->params(), adam_g_);
        restore_adam(entries, "adam.d.", disc_->params(), adam_d_);
    }
    rng_ = rng_from_text(unpack_text(find_entry(entries, "rng.state").value));
    epochs_done_ = unpack_u64(find_entry(entries, "meta.epoch").value);
    history_ = parse_metrics_csv(unpack_text(find_entry(entries, "meta.metrics").value));
    config_echo_ = unpack_text(find_entry(entries, "meta.config").value);
    if (history_.size() != epochs_done_) throw CheckpointError("metrics history does not match the epoch count");
}

std::string Trainer::metrics_csv() const
{
    return format_metrics_csv(history_, config_.base == BaseKind::gan);
}

std::string format_metrics_csv(const std::vector<EpochMetrics>& rows, bool with_disc)
{
    std::string out = with_disc ? "epoch,loss_base,loss_div,loss_total,loss_disc\n" : "epoch,loss_base,loss_div,loss_total\n";
    for (const EpochMetrics& m : rows) {
        out += std::to_string(m.epoch) + "," + format_double(m.loss_base) + "," + format_double(m.loss_div) + "," +
               format_double(m.loss_total);
        if (with_disc) out += "," + format_double(m.loss_disc.value_or(0.0));
        out += "\n";
    }
    return out;
}

std::unique_ptr<Synthesizer> load_synthesizer(const ModelSpec& spec, BaseKind base,
                                              const std::vector<NamedTensor>& entries)
{
    spec.validate(base);
    if (has_entry(entries, "meta.base") && unpack_text(find_entry(entries, "meta.base").value) != base_kind_name(base)) {
        throw CheckpointError("checkpoint was written for a different base network");
    }
    if (base == BaseKind::crn) {
        CrnCascade net(spec.crn, 0);
        net.params().assign_from(entries, "g.");
        return std::make_unique<OwnedCrn>(std::move(net));
    }
    GeneratorUNet net(spec.unet, 0);
    net.params().assign_from(entries, "g.");
    return std::make_unique<OwnedUNet>(std::move(net));
}

} // namespace divsynth
