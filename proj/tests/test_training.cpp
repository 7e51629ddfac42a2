#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "divsynth/checkpoint.hpp"
#include "divsynth/netpbm.hpp"
#include "divsynth/training.hpp"
#include "test_util.hpp"

using namespace divsynth;
using namespace testutil;

namespace {

ModelSpec small_spec()
{
    ModelSpec s;
    s.crn.width = 8;
    s.unet.widths = {4, 8, 16};
    s.disc.widths = {4, 8, 16};
    s.phi.channels = {4, 8};
    return s;
}

TrainConfig small_config(BaseKind base, std::size_t epochs)
{
    TrainConfig c = TrainConfig::defaults_for(base);
    c.epochs = epochs;
    return c;
}

const Dataset& tiny_data()
{
    static const Dataset d = synth_generate_splits(SyntheticWorldConfig{}, 6, 2);
    return d;
}

bool same_bits(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b)
{
    return encode_checkpoint(a) == encode_checkpoint(b);
}

// everything except the metrics text, which also logs the (unweighted) diversity value
std::vector<NamedTensor> state_only(std::vector<NamedTensor> entries)
{
    std::erase_if(entries, [](const NamedTensor& e) { return e.name == "meta.metrics"; });
    return entries;
}

} // namespace

TEST_CASE("adam")
{
    ParameterSet ps;
    ps.add("w", Tensor<float>(Shape{3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
    AdamConfig cfg;
    AdamState st = AdamState::zeros_like(ps);

    SUBCASE("zero gradients leave parameters unchanged")
    {
        const ParameterSet before = ps;
        adam_update(ps, {Tensor<float>(Shape{3})}, st, cfg);
        CHECK(ps == before);
        CHECK(st.t == 1);
    }
    SUBCASE("unit gradient moves each parameter by about lr on the first step")
    {
        adam_update(ps, {Tensor<float>(Shape{3}, 1.0f)}, st, cfg);
        CHECK(ps.get("w")[0] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
        CHECK(ps.get("w")[1] == doctest::Approx(-2.0 - cfg.lr).epsilon(1e-6));
    }
    SUBCASE("identical runs give identical trajectories")
    {
        ParameterSet other = ps;
        AdamState st2 = AdamState::zeros_like(other);
        Rng rng(1);
        for (int k = 0; k < 20; ++k) {
            Tensor<float> g(Shape{3});
            std::normal_distribution<float> nd;
            for (float& v : g.data()) v = nd(rng);
            adam_update(ps, {g}, st, cfg);
            adam_update(other, {g}, st2, cfg);
        }
        CHECK(ps == other);
    }
    SUBCASE("non-finite gradients abort without touching state")
    {
        const ParameterSet before = ps;
        Tensor<float> g(Shape{3}, 1.0f);
        g[1] = std::numeric_limits<float>::infinity();
        CHECK_THROWS_AS(adam_update(ps, {g}, st, cfg), NonFiniteError);
        CHECK(ps == before);
        CHECK(st.t == 0);
        CHECK(st.m[0] == Tensor<float>(Shape{3}));
    }
    SUBCASE("shape mismatches are rejected")
    {
        CHECK_THROWS(adam_update(ps, {Tensor<float>(Shape{4})}, st, cfg));
        CHECK_THROWS(adam_update(ps, {}, st, cfg));
    }
    SUBCASE("config validation")
    {
        cfg.lr = 0.0;
        CHECK_THROWS(cfg.validate());
        cfg = AdamConfig{};
        cfg.beta1 = 1.0;
        CHECK_THROWS(cfg.validate());
    }
    CHECK(gradient_norm({Tensor<float>(Shape{2}, std::vector<float>{3.0f, 4.0f})}) == 5.0);
}

TEST_CASE("train config")
{
    const TrainConfig crn = TrainConfig::defaults_for(BaseKind::crn);
    CHECK(crn.epochs == 100);
    CHECK(crn.loss.beta == 10.0);
    CHECK(crn.adam.lr == 5e-5);
    const TrainConfig gan = TrainConfig::defaults_for(BaseKind::gan);
    CHECK(gan.epochs == 200);
    CHECK(gan.loss.beta == 0.1);
    CHECK(gan.loss.alpha == 100.0);
    CHECK(gan.adam.lr == 2e-4);
    TrainConfig bad = crn;
    bad.epochs = 0;
    CHECK_THROWS(bad.validate(4));
    CHECK_THROWS(Trainer(small_spec(), bad));
    bad = crn;
    bad.adam.lr = -1;
    CHECK_THROWS(bad.validate(4));
    CHECK(parse_base_kind("gan") == BaseKind::gan);
    CHECK_THROWS(parse_base_kind("vae"));
}

TEST_CASE("crn step")
{
    const Sample& s = tiny_data().samples[0];

    SUBCASE("zero noise contributes nothing to the diversity term")
    {
        Trainer t(small_spec(), small_config(BaseKind::crn, 1));
        const StepReport r = t.step_with_noise(s.layout, s.image, NoiseVector::zeros(4));
        CHECK(r.loss_div == 0.0);
        CHECK(r.loss_total == r.loss_base);
        CHECK(r.phases == std::vector<std::string>{"G"});
    }
    SUBCASE("reported loss matches a recomputation at the pre-update parameters")
    {
        Trainer t(small_spec(), small_config(BaseKind::crn, 1));
        const CrnCascade before = *t.crn();
        const NoiseVector n({0.4, -0.9, 0.1, 0.7});
        const StepReport r = t.step_with_noise(s.layout, s.image, n);

        Tape<float> tape;
        const BoundParameters<float> p(tape, before.params(), false);
        const auto i1 = before.forward_images(tape, p, s.layout, n)[0];
        const auto i2 = before.forward_images(tape, p, s.layout, NoiseVector::zeros(4))[0];
        const auto real = tape.constant(s.image.to_tensor<float>());
        const auto& cfg = t.config().loss;
        const auto lf = ops::scale(ops::add(losses::loss_content(t.phi(), i1, real, cfg.lambda_k),
                                            losses::loss_content(t.phi(), i2, real, cfg.lambda_k)),
                                   0.5f);
        const auto div = losses::diversity_hinged(i2, i1, s.layout, n, cfg.class_bounds(4));
        CHECK(r.loss_base == lf.value().item());
        CHECK(r.loss_div == div.value().item());
        CHECK(r.loss_total == losses::objective_combined(lf, div, 10.0f).value().item());
        CHECK_FALSE(t.crn()->params() == before.params());
    }
    SUBCASE("the feature extractor never changes")
    {
        Trainer t(small_spec(), small_config(BaseKind::crn, 2));
        const ParameterSet phi_before = t.phi().params();
        t.train(tiny_data());
        CHECK(t.phi().params() == phi_before);
    }
    SUBCASE("mismatched pairs are rejected")
    {
        Trainer t(small_spec(), small_config(BaseKind::crn, 1));
        CHECK_THROWS_AS(t.step(SemanticLayout(16, 16, 4), ImageRGB(16, 16)), ShapeError);
        CHECK_THROWS_AS(t.step_with_noise(s.layout, s.image, NoiseVector::zeros(3)), ShapeError);
    }
}

TEST_CASE("beta = 0 reduces bitwise to base-only training")
{
    for (BaseKind base : {BaseKind::crn, BaseKind::gan}) {
        TrainConfig zero = small_config(base, 2);
        zero.loss.beta = 0.0;
        TrainConfig plain = small_config(base, 2);
        plain.use_diversity = false;
        Trainer a(small_spec(), zero), b(small_spec(), plain);
        a.train(tiny_data());
        b.train(tiny_data());
        CHECK(same_bits(state_only(a.checkpoint()), state_only(b.checkpoint())));
        for (std::size_t e = 0; e < 2; ++e) {
            CHECK(a.history()[e].loss_base == b.history()[e].loss_base);
            CHECK(a.history()[e].loss_total == b.history()[e].loss_total);
        }
    }
}

TEST_CASE("gan step")
{
    Trainer t(small_spec(), small_config(BaseKind::gan, 1));
    const Sample& s = tiny_data().samples[1];
    const StepReport r = t.step(s.layout, s.image);
    CHECK(r.phases == std::vector<std::string>{"D", "G"});
    REQUIRE(r.loss_disc_before);
    REQUIRE(r.loss_disc_after);
    CHECK(std::isfinite(r.loss_total));
    CHECK(r.loss_disc_before.value() < 0.0);

    SUBCASE("D steps with G frozen drive the discriminator objective toward 0 from below")
    {
        PatchDiscriminator d(small_spec().disc, 3);
        AdamState st = AdamState::zeros_like(d.params());
        AdamConfig cfg;
        cfg.lr = 2e-3;
        const auto oh = one_hot_encode<float>(s.layout);
        const auto real = s.image.to_tensor<float>();
        const Tensor<float> fake(Shape{3, 32, 32}, 0.5f);
        double first = 0, last = 0;
        for (int k = 0; k < 150; ++k) {
            Tape<float> tape;
            const BoundParameters<float> p(tape, d.params(), true);
            const auto o = tape.constant(oh);
            const auto obj = losses::loss_discriminator(d.forward(p, o, tape.constant(real)),
                                                        d.forward(p, o, tape.constant(fake)), 1e-7f);
            if (k == 0) first = obj.value().item();
            last = obj.value().item();
            tape.backward(ops::scale(obj, -1.0f));
            adam_update(d.params(), p.gradients(), st, cfg);
        }
        CHECK(first < -1.0);
        CHECK(last < 0.0);
        CHECK(last > -0.05);
    }
    SUBCASE("augmentation draws are part of the seeded stream")
    {
        Trainer a(small_spec(), small_config(BaseKind::gan, 1)), b(small_spec(), small_config(BaseKind::gan, 1));
        a.train(tiny_data());
        b.train(tiny_data());
        CHECK(same_bits(a.checkpoint(), b.checkpoint()));
        CHECK(a.metrics_csv().rfind("epoch,loss_base,loss_div,loss_total,loss_disc\n", 0) == 0);
    }
}

TEST_CASE("determinism, checkpoints and resume")
{
    TempDir dir("train");
    TrainConfig cfg = small_config(BaseKind::crn, 4);
    cfg.checkpoint_every = 2;

    Trainer full(small_spec(), cfg);
    full.set_config_echo("base = crn\n");
    full.train(tiny_data(), dir.path());
    CHECK(std::filesystem::exists(dir.path() / "epoch_0002.dsyn"));
    CHECK(std::filesystem::exists(dir.path() / "epoch_0004.dsyn"));
    CHECK(std::filesystem::exists(dir.path() / "final.dsyn"));
    const std::string csv = read_file(dir.path() / "metrics.csv");
    CHECK(csv.rfind("epoch,loss_base,loss_div,loss_total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    SUBCASE("same seed, same bytes")
    {
        Trainer again(small_spec(), cfg);
        again.set_config_echo("base = crn\n");
        again.train(tiny_data());
        CHECK(same_bits(again.checkpoint(), full.checkpoint()));
        CHECK(again.metrics_csv() == csv);
    }
    SUBCASE("a different seed diverges")
    {
        TrainConfig other = cfg;
        other.seed = 2;
        Trainer t(small_spec(), other);
        t.train(tiny_data());
        CHECK(t.metrics_csv() != csv);
    }
    SUBCASE("resuming from epoch 2 matches the uninterrupted run")
    {
        Trainer resumed(small_spec(), cfg);
        resumed.restore(checkpoint_load(dir.path() / "epoch_0002.dsyn"));
        CHECK(resumed.epochs_done() == 2);
        CHECK(resumed.config_echo() == "base = crn\n");
        CHECK(resumed.history().size() == 2);
        resumed.train(tiny_data());
        CHECK(same_bits(resumed.checkpoint(), full.checkpoint()));
        CHECK(resumed.metrics_csv() == csv);
    }
    SUBCASE("restore validates entries")
    {
        auto entries = full.checkpoint();
        Trainer t(small_spec(), cfg);
        auto extra = entries;
        extra.push_back({"g.bogus", Tensor<float>(Shape{1})});
        CHECK_THROWS(t.restore(extra));
        auto missing = entries;
        missing.erase(missing.begin());
        CHECK_THROWS(t.restore(missing));
        Trainer gan(small_spec(), small_config(BaseKind::gan, 1));
        CHECK_THROWS(gan.restore(entries));
    }
    SUBCASE("inference model loads from a checkpoint")
    {
        const auto syn = load_synthesizer(small_spec(), BaseKind::crn, checkpoint_load(dir.path() / "final.dsyn"));
        const Sample& s = tiny_data().samples[0];
        CHECK(syn->render(s.layout, NoiseVector::zeros(4)) == full.synthesizer()->render(s.layout, NoiseVector::zeros(4)));
    }
}

TEST_CASE("non-finite losses abort with the offending inputs")
{
    Trainer t(small_spec(), small_config(BaseKind::crn, 1));
    auto entries = t.checkpoint();
    for (auto& e : entries)
        if (e.name == "g.head.b") e.value[0] = std::numeric_limits<float>::quiet_NaN();
    t.restore(entries);
    const Sample& s = tiny_data().samples[0];
    try {
        t.step_with_noise(s.layout, s.image, NoiseVector({0.1, 0.2, 0.3, 0.4}));
        FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
        REQUIRE(e.inputs().size() == 3);
        CHECK(find_entry(e.inputs(), "input.noise").value == Tensor<float>(Shape{4}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f}));
        CHECK(find_entry(e.inputs(), "input.image").value == s.image.to_tensor<float>());
        CHECK(find_entry(e.inputs(), "input.layout").value.shape() == Shape{4, 32, 32});
    }
}

TEST_CASE("metrics csv formatting")
{
    std::vector<EpochMetrics> rows{{1, 0.5, 0.25, 3.0, std::nullopt}, {2, 0.125, 0.0, 0.125, std::nullopt}};
    CHECK(format_metrics_csv(rows, false) == "epoch,loss_base,loss_div,loss_total\n1,0.5,0.25,3\n2,0.125,0,0.125\n");
    rows[0].loss_disc = -1.5;
    rows[1].loss_disc = -1.25;
    CHECK(format_metrics_csv(rows, true) ==
          "epoch,loss_base,loss_div,loss_total,loss_disc\n1,0.5,0.25,3,-1.5\n2,0.125,0,0.125,-1.25\n");
}
