#include "support.hpp"

#include "probpose/error.hpp"
#include "probpose/oks.hpp"

#include <doctest.h>

using namespace probpose;
using testing::unit_window;

namespace {

std::vector<double> brute_expected_oks(const ProbabilityMap& map, const OksParams& params)
{
    const auto& w = map.window();
    std::vector<double> out(map.size(), 0.0);
    for (std::size_t u = 0; u < map.size(); ++u)
        for (std::size_t x = 0; x < map.size(); ++x) {
            const double d = distance(w.cell_center(u), w.cell_center(x));
            out[u] += map.values()[x] * std::exp(-d * d / (2.0 * params.scale * params.scale * params.kappa * params.kappa));
        }
    return out;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double den = std::max(std::abs(a[i]), std::abs(b[i]));
        if (den > 0.0)
            worst = std::max(worst, std::abs(a[i] - b[i]) / den);
    }
    return worst;
}

} // namespace

TEST_CASE("oks similarity")
{
    const OksParams p { 10.0, 0.1 };
    CHECK(oks_similarity(0.0, p) == 1.0);
    CHECK(oks_similarity(std::sqrt(2.0), p) == doctest::Approx(std::exp(-1.0)));
    CHECK(oks_similarity(0.124, { 1.0, 0.124 }) == doctest::Approx(0.60653066).epsilon(1e-8));
    CHECK(oks_similarity(2.0, p) < oks_similarity(1.0, p));
    CHECK(oks_similarity(2.0, { 10.0, 0.05 }) < oks_similarity(2.0, p));
    CHECK_THROWS_AS(OksParams({ 0.0, 0.1 }).validate(), Error);
    CHECK_THROWS_AS(LossConfig({ 1.5, 1e-12 }).validate(), Error);
}

TEST_CASE("kappa table")
{
    const KappaTable t;
    CHECK(t[0] == 0.052);
    CHECK(t[1] == 0.050);
    CHECK(t[11] == 0.214);
    CHECK(t[16] == 0.178);
    const auto parsed = KappaTable::parse("# tuned\nnose = 0.1\nleft_ankle=0.2\n\n");
    CHECK(parsed[0] == 0.1);
    CHECK(parsed[15] == 0.2);
    CHECK(parsed[5] == t[5]);
    CHECK(KappaTable::parse(parsed.to_text()).values() == parsed.values());
    CHECK_THROWS_AS(KappaTable::parse("elbow=0.1"), Error);
    CHECK_THROWS_AS(KappaTable::parse("nose=-1"), Error);
    CHECK_THROWS_AS(KappaTable::parse("nose"), Error);
}

TEST_CASE("oks kernel")
{
    const ActivationWindow w({ 0, 0, 192, 256 }, 48, 64);
    const OksParams p { 64.0, 0.1 };
    const int r = oks_kernel_radius(p, w);
    const auto k = oks_kernel(p, w, r);
    CHECK(k.at(0, 0) == 1.0);
    CHECK(k.at(1, 0) == doctest::Approx(std::exp(-16.0 / (2 * 64.0 * 64.0 * 0.01))).epsilon(1e-14));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            CHECK(k.at(dx, dy) == k.at(-dy, dx));
    CHECK_THROWS_AS(oks_kernel(p, w, r - 1), Error);

    // The chosen radius holds at least 0.999 of the continuous Gaussian mass per axis.
    const double sigma_cells = p.sigma_px() / w.cell_w();
    CHECK(std::erf((r + 0.5) / (sigma_cells * std::sqrt(2.0))) >= 0.999);
}

TEST_CASE("expected oks map")
{
    Rng rng(8);
    SUBCASE("one-hot gives the kernel")
    {
        const auto w = unit_window(12, 12, 2.0);
        const OksParams p { 20.0, 0.1 };
        const auto e = expected_oks_map(ProbabilityMap::one_hot(w, { 4, 7 }), p);
        for (std::size_t i = 0; i < e.size(); ++i)
            CHECK(e[i] == doctest::Approx(oks_similarity(distance(w.cell_center(i), w.cell_center(GridCell { 4, 7 })), p)).epsilon(1e-12));
    }
    SUBCASE("uniform map with a narrow kernel is flat")
    {
        const auto w = unit_window(8, 8, 4.0);
        const auto e = expected_oks_map(ProbabilityMap::uniform(w), { 1.0, 0.2 });
        const auto b = brute_expected_oks(ProbabilityMap::uniform(w), { 1.0, 0.2 });
        CHECK(max_rel_error(e, b) <= 1e-10);
        for (double v : e)
            CHECK(v == doctest::Approx(1.0 / 64.0).epsilon(1e-10));
    }
    SUBCASE("random maps match the double loop")
    {
        for (int t = 0; t < 20; ++t) {
            const auto w = unit_window(16, 16, rng.uniform(0.5, 4.0));
            const auto m = testing::random_map(rng, w);
            const OksParams p { rng.uniform(10.0, 100.0), rng.uniform(0.05, 0.2) };
            const auto e = expected_oks_map(m, p);
            const auto b = brute_expected_oks(m, p);
            for (std::size_t i = 0; i < e.size(); ++i) {
                CHECK(std::abs(e[i] - b[i]) <= 1e-10);
                CHECK(e[i] >= 0.0);
                CHECK(e[i] <= 1.0);
            }
            CHECK(expected_oks_at(m, p, w.cell_center(std::size_t { 37 })) == doctest::Approx(b[37]).epsilon(1e-12));
        }
    }
    SUBCASE("linear in the map")
    {
        const auto w = unit_window(10, 14, 1.5);
        const auto a = testing::random_map(rng, w);
        const auto b = testing::random_map(rng, w);
        const OksParams p { 30.0, 0.08 };
        const double lambda = 0.3;
        std::vector<double> mix(a.size());
        for (std::size_t i = 0; i < mix.size(); ++i)
            mix[i] = lambda * a.values()[i] + (1 - lambda) * b.values()[i];
        const auto em = expected_oks_map(ProbabilityMap(w, mix), p);
        const auto ea = expected_oks_map(a, p);
        const auto eb = expected_oks_map(b, p);
        for (std::size_t i = 0; i < em.size(); ++i)
            CHECK(std::abs(em[i] - (lambda * ea[i] + (1 - lambda) * eb[i])) <= 1e-12);
    }
}

TEST_CASE("dense oks loss values")
{
    const auto w = unit_window(8, 8, 4.0);
    const OksParams p { 40.0, 0.1 };
    const Point gt = w.cell_center(GridCell { 3, 5 });
    CHECK(dense_oks_loss(ProbabilityMap::one_hot(w, { 3, 5 }), gt, p, { 0.0, 1e-12 }).value == 0.0);

    const Point off { 13.7, 6.2 };
    double mean = 0.0;
    for (std::size_t i = 0; i < w.cells(); ++i)
        mean += (1.0 - oks_similarity(distance(w.cell_center(i), off), p)) / 64.0;
    CHECK(dense_oks_loss(ProbabilityMap::uniform(w), off, p, { 0.0, 1e-12 }).value == doctest::Approx(mean).epsilon(1e-12));

    const auto flat = dense_oks_loss(ProbabilityMap::uniform(w), off, p, { 1.0, 1e-12 });
    CHECK(flat.value == doctest::Approx(64.0 * 1e-6).epsilon(1e-9));
    CHECK_THROWS_AS(dense_oks_loss(ProbabilityMap::uniform(w), { -1.0, 3.0 }, p, {}), Error);
}

TEST_CASE("dense oks loss gradient")
{
    Rng rng(9);
    const auto w = unit_window(8, 8, 4.0);
    SUBCASE("alpha zero is the risk weight")
    {
        const auto m = testing::random_map(rng, w);
        const OksParams p { 40.0, 0.1 };
        const Point gt { 10.3, 20.9 };
        const auto g = dense_oks_loss_grad(m, gt, p, { 0.0, 1e-12 });
        for (std::size_t i = 0; i < g.size(); ++i)
            CHECK(g[i] == 1.0 - oks_similarity(distance(w.cell_center(i), gt), p));
    }
    SUBCASE("regulariser gradient vanishes on a constant map")
    {
        const auto g = dense_oks_loss_grad(ProbabilityMap::uniform(w), { 5, 5 }, { 40.0, 0.1 }, { 1.0, 1e-12 });
        for (double v : g)
            CHECK(v == 0.0);
    }
    SUBCASE("matches central differences")
    {
        for (int t = 0; t < 20; ++t) {
            const auto m = testing::random_map(rng, w);
            const std::vector<double> p(m.values().begin(), m.values().end());
            const OksParams params { rng.uniform(20.0, 80.0), rng.uniform(0.05, 0.2) };
            const Point gt { rng.uniform(0.0, 32.0), rng.uniform(0.0, 32.0) };
            const LossConfig cfg { 0.04, 1e-12 };
            const auto g = dense_oks_loss_grad(p, w, gt, params, cfg);
            std::vector<double> fd(p.size());
            const double h = 1e-6;
            for (std::size_t i = 0; i < p.size(); ++i) {
                auto pp = p;
                auto pm = p;
                pp[i] += h;
                pm[i] -= h;
                fd[i] = (dense_oks_loss(pp, w, gt, params, cfg).value - dense_oks_loss(pm, w, gt, params, cfg).value) / (2 * h);
            }
            CHECK(max_rel_error(g, fd) < 1e-5);
        }
    }
}

TEST_CASE("alpha zero loss is minimised by the one-hot at the nearest cell")
{
    Rng rng(10);
    const auto w = unit_window(8, 8, 3.0);
    for (int t = 0; t < 20; ++t) {
        const Point gt { rng.uniform(0.0, 24.0), rng.uniform(0.0, 24.0) };
        const OksParams p { 30.0, rng.uniform(0.03, 0.2) };
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < w.cells(); ++i) {
            const double v = dense_oks_loss(ProbabilityMap::one_hot(w, { static_cast<int>(i % 8), static_cast<int>(i / 8) }), gt, p, {}).value;
            if (v < best) {
                best = v;
                arg = i;
            }
        }
        GridCell holder;
        REQUIRE(w.locate(gt, holder));
        CHECK(arg == static_cast<std::size_t>(holder.row * 8 + holder.col));
        CHECK(dense_oks_loss(testing::random_map(rng, w), gt, p, {}).value >= best);
    }
}
