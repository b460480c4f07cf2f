#include "support.hpp"

#include "probpose/error.hpp"
#include "probpose/fitlab.hpp"

#include <doctest.h>

using namespace probpose;

namespace {

FitConfig half_pixel_config(double kappa, double alpha)
{
    FitConfig cfg;
    cfg.window = ActivationWindow({ 0, 0, 24, 32 }, 48, 64);
    cfg.oks = { 16.0, kappa };
    cfg.loss.alpha = alpha;
    return cfg;
}

} // namespace

TEST_CASE("config validation")
{
    FitConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.step = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_THROWS_AS(fit_map({ -1.0, 5.0 }, FitConfig {}), Error);
    CHECK(normalizer_from_string("softmax") == Normalizer::Softmax);
    CHECK(to_string(Normalizer::Sparsemax) == "sparsemax");
    CHECK_THROWS_AS(normalizer_from_string("entmax"), Error);
}

TEST_CASE("fits stay on the simplex and never increase the loss")
{
    FitConfig cfg = half_pixel_config(0.1, 0.02);
    cfg.iterations = 120;
    int calls = 0;
    const auto r = fit_map({ 9.3, 20.1 }, cfg, [&](int, std::span<const double> p) {
        ++calls;
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    });
    CHECK(calls == r.report.iterations_run);
    REQUIRE(r.report.loss_trace.size() >= 2);
    for (std::size_t i = 1; i < r.report.loss_trace.size(); ++i)
        CHECK(r.report.loss_trace[i] <= r.report.loss_trace[i - 1]);
    CHECK(r.report.final_loss.value == r.report.loss_trace.back());
    CHECK(r.report.mass_within_sigma >= 0.0);
    CHECK(r.report.mass_within_sigma <= 1.0);
    CHECK(loss_trace_csv(r.report).rfind("iteration,loss\n", 0) == 0);
}

TEST_CASE("alpha zero collapses onto the nearest cell")
{
    Rng rng(1);
    for (int t = 0; t < 6; ++t) {
        const Point gt { rng.uniform(2.0, 22.0), rng.uniform(2.0, 30.0) };
        const FitConfig cfg = half_pixel_config(0.1, 0.0);
        const auto r = fit_map(gt, cfg);
        GridCell nearest;
        REQUIRE(cfg.window.locate(gt, nearest));
        std::size_t arg = 0;
        for (std::size_t i = 1; i < r.map.size(); ++i)
            if (r.map.values()[i] > r.map.values()[arg])
                arg = i;
        CHECK(arg == r.map.index(nearest));
        CHECK(r.report.decoded_error_px <= 0.5);
    }
    // One-pixel cells bound the error by the half diagonal.
    const auto coarse = fit_map({ 17.2, 40.9 }, FitConfig {});
    CHECK(coarse.report.decoded_error_px <= 0.5 * std::sqrt(2.0));
}

TEST_CASE("sharper maps for smaller kappa")
{
    const Point gt { 11.7, 15.2 };
    const KappaTable kappas;
    const auto eye = fit_map(gt, half_pixel_config(kappas[1], 0.02));
    const auto hip = fit_map(gt, half_pixel_config(kappas[11], 0.02));
    CHECK(eye.report.radius90 < hip.report.radius90);
    CHECK(eye.report.entropy < hip.report.entropy);
}

TEST_CASE("support grows with alpha")
{
    const Point gt { 12.1, 16.6 };
    std::size_t prev = 0;
    for (double alpha : { 0.0, 0.02, 0.08 }) {
        const auto r = fit_map(gt, half_pixel_config(0.214, alpha));
        CHECK(r.report.support_size >= prev);
        prev = r.report.support_size;
    }
}

TEST_CASE("softmax comparison keeps full support")
{
    FitConfig cfg;
    cfg.window = ActivationWindow({ 0, 0, 12, 16 }, 12, 16);
    cfg.normalizer = Normalizer::Softmax;
    cfg.iterations = 50;
    const auto r = fit_map({ 6.2, 7.9 }, cfg);
    CHECK(r.report.support_size == r.map.size());
}

TEST_CASE("sharpness report")
{
    const auto w = testing::unit_window(40, 40);
    const Point c = w.cell_center(GridCell { 20, 20 });
    const std::vector<double> radii { 0.0, 0.5 * std::sqrt(2.0), 3.0, 10.0 };
    const auto hot = sharpness_report(ProbabilityMap::one_hot(w, { 20, 20 }), c, radii);
    for (double m : hot)
        CHECK(m == 1.0);
    const Point corner { 20.0, 20.0 };
    CHECK(sharpness_report(ProbabilityMap::one_hot(w, { 20, 20 }), corner, std::vector<double> { 0.5 * std::sqrt(2.0) })[0] == 1.0);

    // Uniform map: the disc's share of the window, up to cell discretisation.
    const auto uni = sharpness_report(ProbabilityMap::uniform(w), { 20.0, 20.0 }, std::vector<double> { 5.0, 10.0, 15.0 });
    for (std::size_t i = 0; i < uni.size(); ++i) {
        const double r = 5.0 * (i + 1);
        CHECK(uni[i] == doctest::Approx(M_PI * r * r / 1600.0).epsilon(0.08));
    }

    Rng rng(2);
    const auto m = testing::random_map(rng, w);
    std::vector<double> grow(30);
    for (std::size_t i = 0; i < grow.size(); ++i)
        grow[i] = 2.0 * i;
    const auto mass = sharpness_report(m, { 13.0, 27.0 }, grow);
    for (std::size_t i = 1; i < mass.size(); ++i)
        CHECK(mass[i] >= mass[i - 1]);
    CHECK(mass.back() == doctest::Approx(1.0));
    CHECK(mass_radius(ProbabilityMap::one_hot(w, { 3, 4 }), w.cell_center(GridCell { 3, 4 }), 0.9) == 0.0);
    CHECK(entropy(ProbabilityMap::uniform(w)) == doctest::Approx(std::log(1600.0)));
    CHECK(entropy(ProbabilityMap::one_hot(w, { 1, 1 })) == 0.0);
}
