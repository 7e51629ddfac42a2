#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "divsynth/gradient_check.hpp"
#include "divsynth/losses.hpp"
#include "test_util.hpp"

using namespace divsynth;
using namespace testutil;
using D = double;

namespace {

Tensor<D> filled(Shape s, D v) { return Tensor<D>(std::move(s), v); }

// image whose per-pixel |a-b| is the same value in every channel
Tensor<D> channel_constant(std::size_t w, std::size_t h, std::vector<D> per_pixel)
{
    Tensor<D> t(Shape{3, h, w});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h * w; ++i) t[c * h * w + i] = per_pixel[i];
    return t;
}

// top half class 0, bottom half class 1
SemanticLayout two_class_halves(std::size_t w, std::size_t h)
{
    SemanticLayout l(w, h, 2);
    for (std::size_t y = h / 2; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) l.set(y, x, 1);
    return l;
}

// b = a +/- d_c on class-c pixels, sign alternating, so the class-c mean |a-b| is exactly d_c
Tensor<D> offset_by_class(const Tensor<D>& a, const SemanticLayout& l, const std::vector<D>& d)
{
    Tensor<D> b = a;
    const std::size_t h = l.height(), w = l.width();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const D s = (x + y + c) % 2 ? 1.0 : -1.0;
                b.at(c, y, x) = a.at(c, y, x) + s * d[l.at(y, x)];
            }
    return b;
}

void expect_grad(const ScalarFunction& fn, const Tensor<D>& x, FiniteDifference mode = FiniteDifference::central)
{
    const auto r = gradient_check(fn, x, 1e-5, 1e-4, mode);
    INFO("rel err " << r.max_relative_error << " at " << r.worst_index << " analytic " << r.analytic_at_worst
                    << " numeric " << r.numeric_at_worst);
    CHECK(r.passed);
}

} // namespace

TEST_CASE("loss config")
{
    LossConfig c;
    CHECK(c.alpha == 100.0);
    CHECK(c.beta == 10.0);
    CHECK(c.class_bounds(4) == std::vector<double>(4, 0.3));
    c.validate(4);
    c.lambda_c = {0.1, 0.2};
    CHECK_THROWS(c.validate(4));
    CHECK(c.class_bounds(2) == std::vector<double>{0.1, 0.2});
    c = LossConfig{};
    c.beta = -1;
    CHECK_THROWS(c.validate(4));
    c = LossConfig{};
    c.lambda_k = {0.0, 0.0};
    CHECK_THROWS(c.validate(4));
    c = LossConfig{};
    c.lambda_c = {-0.1};
    CHECK_THROWS(c.validate(4));
}

TEST_CASE("segmentwise and global L1")
{
    Tape<D> tape;
    const SemanticLayout l(2, 2, 2, std::vector<std::uint8_t>{0, 0, 1, 1});
    const auto a = tape.constant(filled({3, 2, 2}, 0.0));
    const auto b = tape.constant(channel_constant(2, 2, {0.2, 0.4, 0.6, 0.8}));
    CHECK(losses::segmentwise_l1(a, b, l, 0).value().item() == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(losses::segmentwise_l1(a, b, l, 1).value().item() == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(losses::global_l1(a, b).value().item() == doctest::Approx(0.5).epsilon(1e-12));
    const SemanticLayout l3(2, 2, 3, std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(losses::segmentwise_l1(a, b, l3, 2).value().item() == 0.0);
    CHECK_THROWS(losses::segmentwise_l1(a, b, l, 2));
    CHECK_THROWS_AS(losses::segmentwise_l1(a, b, SemanticLayout(3, 2, 2), 0), ShapeError);

    SUBCASE("segment areas partition the global distance")
    {
        Rng rng(1);
        for (int k = 0; k < 50; ++k) {
            const SemanticLayout r = random_layout(8, 8, 4, rng);
            const auto x = tape.constant(random_tensor({3, 8, 8}, rng));
            const auto y = tape.constant(random_tensor({3, 8, 8}, rng));
            const auto hist = r.class_histogram();
            double total = 0.0;
            for (std::size_t c = 0; c < 4; ++c)
                total += double(hist[c]) / 64.0 * losses::segmentwise_l1(x, y, r, c).value().item();
            CHECK(std::abs(total - losses::global_l1(x, y).value().item()) <= 1e-6);
        }
    }
}

TEST_CASE("discriminator and generator losses")
{
    Tape<D> tape;
    const D eps = 1e-7;
    CHECK(losses::loss_discriminator(tape.constant(filled({1, 2, 2}, 0.5)), tape.constant(filled({1, 2, 2}, 0.5)), eps)
              .value()
              .item() == doctest::Approx(-1.3863).epsilon(1e-4));
    CHECK(losses::loss_discriminator(tape.constant(filled({1, 2, 2}, 0.9)), tape.constant(filled({1, 2, 2}, 0.1)), eps)
              .value()
              .item() == doctest::Approx(-0.2107).epsilon(1e-3));
    // perfect discriminator hits the clamp rather than -inf
    const D perfect =
        losses::loss_discriminator(tape.constant(filled({1, 1, 1}, 1.0)), tape.constant(filled({1, 1, 1}, 1.0)), eps)
            .value()
            .item();
    CHECK(std::isfinite(perfect));

    Rng rng(2);
    const auto real = random_tensor({3, 4, 4}, rng, 0.2, 0.8);
    Tensor<D> fake = real;
    for (D& v : fake.data()) v += 0.1;
    const auto half = tape.constant(filled({1, 2, 2}, 0.5));
    CHECK(losses::loss_generator(half, tape.constant(real), tape.constant(real), 100.0, eps).value().item() ==
          doctest::Approx(-0.6931).epsilon(1e-4));
    CHECK(losses::loss_generator(half, tape.constant(fake), tape.constant(real), 100.0, eps).value().item() ==
          doctest::Approx(9.3069).epsilon(1e-4));
}

TEST_CASE("content and hindsight losses")
{
    Tape<D> tape;
    const std::vector<Var<D>> fa{tape.constant(filled({2, 3, 3}, 0.1))}, fb{tape.constant(filled({2, 3, 3}, 0.4))};
    CHECK(losses::loss_content(fa, fb, {1.0}).value().item() == doctest::Approx(0.3).epsilon(1e-12));
    const std::vector<Var<D>> fa2{fa[0], fa[0]}, fb2{fb[0], tape.constant(filled({2, 3, 3}, 0.0))};
    const D one = losses::loss_content(fa2, fb2, {0.5, 0.5}).value().item();
    CHECK(losses::loss_content(fa2, fb2, {1.0, 1.0}).value().item() == doctest::Approx(2 * one).epsilon(1e-12));
    CHECK_THROWS(losses::loss_content(fa2, fb2, {1.0}));

    const FeatureExtractor phi(FeatureExtractor::Config{});
    Rng rng(3);
    const auto real = tape.constant(random_tensor({3, 8, 8}, rng, 0, 1));
    CHECK(losses::loss_content(phi, real, real, {0.5, 0.5}).value().item() == 0.0);

    SUBCASE("hindsight picks the minimum, ties to the lowest index")
    {
        // outputs at constant offsets from a constant target; content loss grows with the offset
        const auto target = tape.constant(filled({3, 8, 8}, 0.5));
        std::vector<Var<D>> outs{tape.constant(filled({3, 8, 8}, 0.5 + 0.5 * 0.5)),
                                 tape.constant(filled({3, 8, 8}, 0.5 + 0.2 * 0.5)),
                                 tape.constant(filled({3, 8, 8}, 0.5 + 0.7 * 0.5))};
        std::size_t chosen = 99;
        const auto h = losses::loss_hindsight(phi, outs, target, {0.5, 0.5}, &chosen);
        CHECK(chosen == 1);
        CHECK(h.value().item() == losses::loss_content(phi, outs[1], target, {0.5, 0.5}).value().item());
        outs.push_back(outs[1]);
        losses::loss_hindsight(phi, outs, target, {0.5, 0.5}, &chosen);
        CHECK(chosen == 1);
        CHECK_THROWS(losses::loss_hindsight(phi, std::vector<Var<D>>{}, target, {0.5, 0.5}));
    }
    SUBCASE("hindsight returns the smallest per-output content loss")
    {
        FeatureExtractor::Config one_stage;
        one_stage.channels = {3};
        const FeatureExtractor p1(one_stage);
        const auto zero = tape.constant(filled({3, 4, 4}, 0.0));
        std::vector<Var<D>> outs;
        std::vector<D> vals;
        for (D s : {0.5, 0.2, 0.7}) {
            outs.push_back(tape.constant(filled({3, 4, 4}, s)));
            vals.push_back(losses::loss_content(p1, outs.back(), zero, {1.0}).value().item());
        }
        std::size_t chosen = 0;
        const D h = losses::loss_hindsight(p1, outs, zero, {1.0}, &chosen).value().item();
        CHECK(h == *std::min_element(vals.begin(), vals.end()));
    }
}

TEST_CASE("diversity losses")
{
    Tape<D> tape;
    const SemanticLayout l = two_class_halves(4, 4);
    Rng rng(4);
    const Tensor<D> a = random_tensor({3, 4, 4}, rng, 0.3, 0.7);

    SUBCASE("unconditional: mean |n| 0.5 and L1 0.2 gives -0.1")
    {
        Tensor<D> b = a;
        for (D& v : b.data()) v += 0.2;
        const D v = losses::diversity_unconditional(tape.constant(a), tape.constant(b), NoiseVector({0.5, -0.5})).value().item();
        CHECK(v == doctest::Approx(-0.1).epsilon(1e-12));
    }
    SUBCASE("segmentwise: |n| (0.5,1.0), distances (0.3,0.1) gives -0.25")
    {
        const Tensor<D> b = offset_by_class(a, l, {0.3, 0.1});
        const D v = losses::diversity_segmentwise(tape.constant(a), tape.constant(b), l, NoiseVector({0.5, -1.0})).value().item();
        CHECK(v == doctest::Approx(-0.25).epsilon(1e-12));
    }
    SUBCASE("hinged: |n| (0.5,1.0), distances (0.1,0.4), bound 0.3 gives 0.10")
    {
        const Tensor<D> b = offset_by_class(a, l, {0.1, 0.4});
        const D v = losses::diversity_hinged(tape.constant(a), tape.constant(b), l, NoiseVector({-0.5, 1.0}), {0.3, 0.3})
                        .value()
                        .item();
        CHECK(v == doctest::Approx(0.10).epsilon(1e-12));
    }
    SUBCASE("identities")
    {
        for (int k = 0; k < 30; ++k) {
            const SemanticLayout r = random_layout(8, 8, 4, rng);
            const auto g0 = tape.constant(random_tensor({3, 8, 8}, rng, 0, 1));
            const auto gn = tape.constant(random_tensor({3, 8, 8}, rng, 0, 1));
            const NoiseVector n = NoiseVector::uniform(4, rng);
            const std::vector<double> bounds(4, 0.3);
            // zero noise gives exactly zero
            CHECK(losses::diversity_hinged(g0, gn, r, NoiseVector::zeros(4), bounds).value().item() == 0.0);
            CHECK(losses::diversity_unconditional(g0, gn, NoiseVector::zeros(4)).value().item() == 0.0);
            // signs
            CHECK(losses::diversity_hinged(g0, gn, r, n, bounds).value().item() >= 0.0);
            CHECK(losses::diversity_unconditional(g0, gn, n).value().item() <= 0.0);
            CHECK(losses::diversity_segmentwise(g0, gn, r, n).value().item() <= 0.0);
            // saturated hinge: every present-class distance above the bound
            const std::vector<double> small(4, 0.0);
            CHECK(losses::diversity_hinged(g0, gn, r, n, small).value().item() == 0.0);
            // bilinearity of the unconditional loss in |n| and the distance
            const NoiseVector n2 = NoiseVector::uniform(4, rng);
            const D s = 0.37;
            const D lhs = losses::diversity_unconditional(g0, gn, n).value().item() +
                          losses::diversity_unconditional(g0, gn, n2).value().item();
            const D combined = -(n.mean_abs() + n2.mean_abs()) * losses::global_l1(g0, gn).value().item();
            CHECK(std::abs(lhs - combined) <= 1e-6);
            const auto scaled = ops::add(g0, ops::scale(ops::sub(gn, g0), s));
            CHECK(std::abs(losses::diversity_unconditional(g0, scaled, n).value().item() -
                           s * losses::diversity_unconditional(g0, gn, n).value().item()) <= 1e-6);
        }
    }
    SUBCASE("absent classes contribute nothing")
    {
        const SemanticLayout only0(4, 4, 3);
        const auto g0 = tape.constant(a);
        const auto gn = tape.constant(a);
        const D v = losses::diversity_hinged(g0, gn, only0, NoiseVector({0.5, 1.0, -1.0}), {0.3, 0.3, 0.3}).value().item();
        CHECK(v == doctest::Approx(0.5 * 0.3).epsilon(1e-12));
    }
    SUBCASE("hinge is monotone in the segment distance with zero slope past the bound")
    {
        const NoiseVector n({0.6, -0.8});
        D prev = 1e9;
        for (D d = 0.0; d <= 0.5; d += 0.05) {
            const Tensor<D> b = offset_by_class(a, l, {d, 0.1});
            const D v = losses::diversity_hinged(tape.constant(a), tape.constant(b), l, n, {0.3, 0.3}).value().item();
            CHECK(v <= prev + 1e-12);
            if (d > 0.3 + 1e-9) CHECK(v == doctest::Approx(prev).epsilon(1e-12));
            prev = v;
        }
    }
    SUBCASE("argument checks")
    {
        const auto g = tape.constant(a);
        CHECK_THROWS_AS(losses::diversity_hinged(g, g, l, NoiseVector::zeros(3), {0.3, 0.3}), ShapeError);
        CHECK_THROWS(losses::diversity_hinged(g, g, l, NoiseVector::zeros(2), {0.3}));
        CHECK_THROWS(losses::diversity_hinged(g, g, l, NoiseVector::zeros(2), {0.3, -0.3}));
    }
}

TEST_CASE("combined objective")
{
    Tape<D> tape;
    const auto base = tape.constant(Tensor<D>::scalar(1.0)), div = tape.constant(Tensor<D>::scalar(0.1));
    CHECK(losses::objective_combined(base, div, 10.0).value().item() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(losses::objective_combined(base, div, 0.0).value().item() == 1.0);
    CHECK_THROWS(losses::objective_combined(base, div, -1.0));
}

TEST_CASE("gradients of every loss")
{
    Rng rng(5);
    const SemanticLayout l = random_layout(8, 8, 4, rng);
    const FeatureExtractor phi(FeatureExtractor::Config{});
    for (int k = 0; k < 10; ++k) {
        const Tensor<D> other = random_tensor({3, 8, 8}, rng, 0, 1);
        // x differs from other by at least 0.02 per element so no |x - other| kink sits inside the step
        Tensor<D> x = random_tensor({3, 8, 8}, rng, 0.02, 0.3);
        std::bernoulli_distribution flip(0.5);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = other[i] + (flip(rng) ? x[i] : -x[i]);
        const NoiseVector n = NoiseVector::uniform(4, rng);
        const Tensor<D> scores = random_tensor({1, 4, 4}, rng, 0.05, 0.95);
        const Tensor<D> scores2 = random_tensor({1, 4, 4}, rng, 0.05, 0.95);

        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::loss_discriminator(v, t.constant(scores2), 1e-7); }, scores);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::loss_discriminator(t.constant(scores2), v, 1e-7); }, scores);
        expect_grad([&](Tape<D>& t, Var<D> v) {
            return losses::loss_generator(v, t.constant(x), t.constant(other), 100.0, 1e-7);
        }, scores);
        expect_grad([&](Tape<D>& t, Var<D> v) {
            return losses::loss_generator(t.constant(scores), v, t.constant(other), 100.0, 1e-7);
        }, x);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::loss_content(phi, v, t.constant(other), {0.5, 0.5}); }, x);
        expect_grad([&](Tape<D>& t, Var<D> v) {
            const Tensor<D> shifted = [&] {
                Tensor<D> s = other;
                for (D& e : s.data()) e = std::min(1.0, e + 0.3);
                return s;
            }();
            return losses::loss_hindsight(phi, {t.constant(shifted), v}, t.constant(other), {0.5, 0.5});
        }, x);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_unconditional(t.constant(other), v, n); }, x);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_segmentwise(t.constant(other), v, l, n); }, x);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_hinged(t.constant(other), v, l, n, {0.3, 0.3, 0.3, 0.3}); },
                    x);
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_hinged(v, t.constant(other), l, n, {0.3, 0.3, 0.3, 0.3}); },
                    x);
    }
}

TEST_CASE("hinge gradients next to and on the kink")
{
    const SemanticLayout l = two_class_halves(4, 4);
    Rng rng(6);
    const Tensor<D> a = random_tensor({3, 4, 4}, rng, 0.3, 0.7);
    const NoiseVector n({0.5, -0.9});
    for (D d : {0.3 - 2e-3, 0.3 + 2e-3}) {
        const Tensor<D> b = offset_by_class(a, l, {d, d});
        expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_hinged(t.constant(a), v, l, n, {0.3, 0.3}); }, b);
    }
    // exactly on the bound: subgradient uses the zero branch, so accept a one-sided match
    const Tensor<D> on = offset_by_class(a, l, {0.3, 0.3});
    expect_grad([&](Tape<D>& t, Var<D> v) { return losses::diversity_hinged(t.constant(a), v, l, n, {0.3, 0.3}); }, on,
                FiniteDifference::one_sided);
}
