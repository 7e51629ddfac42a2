#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "divsynth/checkpoint.hpp"
#include "divsynth/models.hpp"
#include "divsynth/netpbm.hpp"
#include "test_util.hpp"

using namespace divsynth;
using namespace testutil;

namespace {

Tensor<float> unet_out(const GeneratorUNet& g, const SemanticLayout& l, const NoiseVector& n, const DropoutMasks* masks)
{
    Tape<float> tape;
    const BoundParameters<float> p(tape, g.params(), false);
    return g.forward(p, tape.constant(one_hot_encode<float>(l)), tape.constant(build_noise_channel<float>(l, n)), masks)
        .value();
}

void expect_open_unit_interval(const Tensor<float>& t)
{
    for (float v : t.data()) CHECK((v > 0.0f && v < 1.0f));
}

} // namespace

TEST_CASE("unet generator")
{
    GeneratorUNet g(GeneratorUNet::Config{}, 3);
    Rng rng(1);
    const SemanticLayout l = random_layout(32, 32, 4, rng);
    const NoiseVector n = NoiseVector::uniform(4, rng);

    const auto a = unet_out(g, l, n, nullptr);
    CHECK(a.shape() == Shape{3, 32, 32});
    expect_open_unit_interval(a);
    CHECK(unet_out(g, l, n, nullptr) == a);

    SUBCASE("dropout changes the output and masks are drawn from the rng")
    {
        Rng r1(5), r2(5);
        const DropoutMasks m1 = g.sample_dropout(r1, 32, 32), m2 = g.sample_dropout(r2, 32, 32);
        CHECK(m1.stages.size() == 2);
        CHECK(unet_out(g, l, n, &m1) == unet_out(g, l, n, &m2));
        CHECK_FALSE(unet_out(g, l, n, &m1) == a);
        for (const auto& s : m1.stages)
            for (float v : s.data()) CHECK((v == 0.0f || v == 2.0f));
    }
    SUBCASE("zero noise gives a pure function of the layout")
    {
        const auto z1 = unet_out(g, l, NoiseVector::zeros(4), nullptr);
        GeneratorUNet twin(GeneratorUNet::Config{}, 3);
        CHECK(unet_out(twin, l, NoiseVector::zeros(4), nullptr) == z1);
    }
    SUBCASE("output stays in (0,1) for extreme weights")
    {
        GeneratorUNet big(GeneratorUNet::Config{}, 4);
        for (auto& e : big.params().entries())
            for (float& v : e.value.data()) v *= 25.0f;
        const auto out = unet_out(big, l, n, nullptr);
        for (float v : out.data()) CHECK((v >= 0.0f && v <= 1.0f));
    }
    SUBCASE("non power of two inputs are rejected")
    {
        CHECK_THROWS_AS(g.check_input(24, 32), ShapeError);
        CHECK_THROWS_AS(g.check_input(4, 4), ShapeError);
        const SemanticLayout odd(24, 24, 4);
        CHECK_THROWS_AS(unet_out(g, odd, NoiseVector::zeros(4), nullptr), ShapeError);
    }
    SUBCASE("the synthesizer wrapper matches a dropout-free forward")
    {
        const UNetSynthesizer syn(g);
        CHECK(syn.render(l, n) == ImageRGB::from_tensor(a));
    }
}

TEST_CASE("patch discriminator")
{
    PatchDiscriminator d(PatchDiscriminator::Config{}, 9);
    CHECK(d.patch_grid(32) == 4);
    Rng rng(2);
    const SemanticLayout l = random_layout(32, 32, 4, rng);
    const ImageRGB img = random_image(32, 32, rng);
    Tape<float> tape;
    const BoundParameters<float> p(tape, d.params(), false);
    const auto oh = tape.constant(one_hot_encode<float>(l));
    const auto s = d.forward(p, oh, tape.constant(img.to_tensor<float>()));
    CHECK(s.shape() == Shape{1, 4, 4});
    expect_open_unit_interval(s.value());

    // no coupling between samples: scoring b then a matches scoring a alone
    const ImageRGB other = random_image(32, 32, rng);
    const auto s_other = d.forward(p, oh, tape.constant(other.to_tensor<float>()));
    const auto s_again = d.forward(p, oh, tape.constant(img.to_tensor<float>()));
    CHECK(s_again.value() == s.value());
    CHECK_FALSE(s_other.value() == s.value());

    CHECK_THROWS_AS(d.forward(p, tape.constant(one_hot_encode<float>(SemanticLayout(16, 16, 4))),
                              tape.constant(img.to_tensor<float>())),
                    ShapeError);
}

TEST_CASE("crn cascade")
{
    SUBCASE("2x2 base with three doublings renders 16x16")
    {
        CrnCascade::Config cfg;
        cfg.doublings = 3;
        cfg.width = 8;
        CrnCascade crn(cfg, 1);
        CHECK(crn.output_width() == 16);
        Rng rng(3);
        const SemanticLayout l = random_layout(16, 16, 4, rng);
        Tape<float> tape;
        const BoundParameters<float> p(tape, crn.params(), false);
        const auto out = crn.forward(tape, p, l, NoiseVector::uniform(4, rng));
        CHECK(out.shape() == Shape{3, 16, 16});
        expect_open_unit_interval(out.value());
        CHECK_THROWS_AS(crn.forward(tape, p, SemanticLayout(32, 32, 4), NoiseVector::zeros(4)), ShapeError);
        CHECK_THROWS_AS(crn.forward(tape, p, SemanticLayout(16, 16, 3), NoiseVector::zeros(3)), ShapeError);
    }
    SUBCASE("4x8 base sized for 256x512")
    {
        CrnCascade::Config cfg;
        cfg.base_width = 4;
        cfg.base_height = 8;
        cfg.doublings = 6;
        CrnCascade crn(cfg, 1);
        CHECK(crn.output_width() == 256);
        CHECK(crn.output_height() == 512);
    }
    SUBCASE("nine-output head emits 27 channels")
    {
        CrnCascade::Config cfg;
        cfg.doublings = 2;
        cfg.width = 4;
        cfg.outputs = 9;
        CrnCascade crn(cfg, 1);
        const SemanticLayout l(8, 8, 4);
        Tape<float> tape;
        const BoundParameters<float> p(tape, crn.params(), false);
        CHECK(crn.forward(tape, p, l, NoiseVector::zeros(4)).shape() == Shape{27, 8, 8});
        const auto images = crn.forward_images(tape, p, l, NoiseVector::zeros(4));
        CHECK(images.size() == 9);
        CHECK(images[8].shape() == Shape{3, 8, 8});
    }
    SUBCASE("noise reaches the output")
    {
        CrnCascade::Config cfg;
        cfg.doublings = 3;
        cfg.width = 8;
        CrnCascade crn(cfg, 1);
        const CrnSynthesizer syn(crn);
        Rng rng(4);
        const SemanticLayout l = random_layout(16, 16, 4, rng);
        CHECK(syn.render(l, NoiseVector::zeros(4)) == syn.render(l, NoiseVector::zeros(4)));
        CHECK_FALSE(syn.render(l, NoiseVector::zeros(4)) == syn.render(l, NoiseVector({1, 1, 1, 1})));
    }
    CHECK_THROWS(CrnCascade(CrnCascade::Config{4, 2, 2, 0, 8, 1}, 1));
}

TEST_CASE("feature extractor")
{
    const FeatureExtractor phi(FeatureExtractor::Config{}), twin(FeatureExtractor::Config{});
    CHECK(phi.params() == twin.params());
    Rng rng(5);
    const ImageRGB img = random_image(32, 32, rng);
    Tape<float> tape;
    const auto x = tape.constant(img.to_tensor<float>());
    const auto f = phi.features(tape, x), g = twin.features(tape, x);
    REQUIRE(f.size() == 2);
    CHECK(f[0].shape() == Shape{16, 16, 16});
    CHECK(f[1].shape() == Shape{32, 8, 8});
    CHECK(f[0].value() == g[0].value());
    CHECK(f[1].value() == g[1].value());
    CHECK_THROWS_AS(phi.features(tape, tape.constant(Tensor<float>(Shape{3, 30, 32}))), ShapeError);

    FeatureExtractor::Config other;
    other.seed = 8;
    CHECK_FALSE(FeatureExtractor(other).params() == phi.params());

    FeatureExtractor::Config loud;
    loud.gain *= 3.0;
    const auto h = FeatureExtractor(loud).features(tape, x);
    for (std::size_t i = 0; i < h[1].size(); ++i) CHECK(h[1].value()[i] == doctest::Approx(3.0f * f[1].value()[i]));
    loud.gain = 0.0;
    CHECK_THROWS(FeatureExtractor{loud});

    // chroma weighting leaves grey inputs alone: only the luminance axis is non-zero
    FeatureExtractor::Config flat, strong;
    flat.chroma_weight = 1.0;
    strong.chroma_weight = 4.0;
    Tensor<float> grey(Shape{3, 32, 32});
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t xx = 0; xx < 32; ++xx)
            for (std::size_t c = 0; c < 3; ++c) grey.at(c, y, xx) = 0.01f * static_cast<float>(y + xx);
    Tensor<float> tinted = grey;
    for (std::size_t i = 0; i < 32 * 32; ++i) tinted[i] += 0.2f;
    auto dist = [&](const FeatureExtractor& e, const Tensor<float>& a, const Tensor<float>& b) {
        const auto fa = e.features(tape, tape.constant(a)), fb = e.features(tape, tape.constant(b));
        double d = 0;
        for (std::size_t i = 0; i < fa[0].size(); ++i) d += std::abs(fa[0].value()[i] - fb[0].value()[i]);
        return d;
    };
    Tensor<float> brighter = grey;
    for (float& v : brighter.data()) v += 0.2f / 3.0f;
    // same L1 change in pixels: a red tint moves strong-chroma features further than a grey lift
    const FeatureExtractor weak_phi(flat), strong_phi(strong);
    CHECK(dist(strong_phi, grey, tinted) / dist(strong_phi, grey, brighter) >
          2.0 * dist(weak_phi, grey, tinted) / dist(weak_phi, grey, brighter));
    strong.chroma_weight = 0.0;
    CHECK_THROWS(FeatureExtractor{strong});
}

TEST_CASE("checkpoint format")
{
    GeneratorUNet g(GeneratorUNet::Config{}, 3);
    std::vector<NamedTensor> entries = g.params().with_prefix("g.");
    entries.push_back({"meta.note", pack_text("hello, world")});
    entries.push_back({"rng.seed", pack_u64(0xfedcba9876543210ull)});
    entries.push_back({"odd", Tensor<float>(Shape{2}, std::vector<float>{-0.0f, std::numeric_limits<float>::denorm_min()})});

    const std::string bytes = encode_checkpoint(entries);
    CHECK(bytes.substr(0, 4) == "DSYN");
    CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);

    const auto back = decode_checkpoint(bytes);
    REQUIRE(back.size() == entries.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].name == entries[i].name);
        CHECK(back[i].value.shape() == entries[i].value.shape());
        CHECK(std::memcmp(back[i].value.data().data(), entries[i].value.data().data(), 4 * back[i].value.size()) == 0);
    }
    CHECK(unpack_text(find_entry(back, "meta.note").value) == "hello, world");
    CHECK(unpack_u64(find_entry(back, "rng.seed").value) == 0xfedcba9876543210ull);
    CHECK(has_entry(back, "g.head.w"));
    CHECK_FALSE(has_entry(back, "nope"));
    CHECK_THROWS_AS(find_entry(back, "nope"), CheckpointError);

    SUBCASE("little-endian payload")
    {
        const std::string one = encode_checkpoint({{"x", Tensor<float>(Shape{1}, 1.0f)}});
        // "DSYN" ver count | len(2) "x" | ndim | dim | f32
        CHECK(one.size() == 4 + 4 + 4 + 2 + 1 + 1 + 4 + 4);
        CHECK(one.substr(one.size() - 4) == std::string("\x00\x00\x80\x3f", 4));
    }
    SUBCASE("corruption is reported")
    {
        for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
            CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointError);
        }
        std::string bad = bytes;
        bad[4] = 9;
        CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
        bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
        CHECK_THROWS_AS(decode_checkpoint(bytes + "z"), CheckpointError);
    }
    SUBCASE("files round trip and parameters reload")
    {
        TempDir dir("ckpt");
        checkpoint_save(dir.path() / "a.dsyn", entries);
        CHECK(read_file(dir.path() / "a.dsyn") == bytes);
        GeneratorUNet other(GeneratorUNet::Config{}, 77);
        CHECK_FALSE(other.params() == g.params());
        std::vector<NamedTensor> loaded = checkpoint_load(dir.path() / "a.dsyn");
        loaded.erase(std::remove_if(loaded.begin(), loaded.end(), [](const NamedTensor& e) { return e.name.rfind("g.", 0); }),
                     loaded.end());
        other.params().assign_from(loaded, "g.");
        CHECK(other.params() == g.params());

        loaded.push_back({"g.extra", Tensor<float>(Shape{1})});
        CHECK_THROWS(other.params().assign_from(loaded, "g."));
        loaded.pop_back();
        loaded.pop_back();
        CHECK_THROWS(other.params().assign_from(loaded, "g."));
        CHECK_THROWS(checkpoint_load(dir.path() / "missing.dsyn"));
    }
    SUBCASE("text packing rejects non-byte values")
    {
        CHECK_THROWS_AS(unpack_text(Tensor<float>(Shape{1}, 300.0f)), CheckpointError);
        CHECK_THROWS_AS(unpack_u64(Tensor<float>(Shape{3})), CheckpointError);
    }
}
