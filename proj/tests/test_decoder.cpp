#include "support.hpp"

#include "probpose/decoder.hpp"
#include "probpose/error.hpp"

#include <doctest.h>

using namespace probpose;
using testing::gaussian_bump;
using testing::normalized;
using testing::unit_window;

TEST_CASE("argmax decode")
{
    const auto w = unit_window(6, 4, 2.0);
    const auto hot = argmax_decode(ProbabilityMap::one_hot(w, { 4, 2 }));
    CHECK(hot.location == Point { 9.0, 5.0 });
    CHECK(hot.score == 1.0);
    CHECK(argmax_decode(ProbabilityMap::uniform(w)).coarse_cell == GridCell { 0, 0 });

    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto m = testing::random_map(rng, w);
        std::size_t best = 0;
        for (std::size_t i = 1; i < m.size(); ++i)
            if (m.values()[i] > m.values()[best])
                best = i;
        CHECK(argmax_decode(m).location == w.cell_center(best));
    }
    CHECK(decode_method_from_string("expected-oks") == DecodeMethod::ExpectedOks);
    CHECK_THROWS_AS(decode_method_from_string("dark"), Error);
}

TEST_CASE("gaussian blur keeps mass and constants")
{
    const std::vector<double> c(20, 0.05);
    for (double v : gaussian_blur(c, 5, 4, 1.3))
        CHECK(v == doctest::Approx(0.05).epsilon(1e-14));
    CHECK_THROWS_AS(gaussian_blur(c, 5, 4, 0.0), Error);
}

TEST_CASE("udp decode")
{
    const auto w = unit_window(16, 16);
    SUBCASE("symmetric bump at a cell center")
    {
        const auto d = udp_decode(ProbabilityMap(unit_window(17, 17), normalized(gaussian_bump(17, 17, 8.5, 8.5, 1.5))));
        CHECK(std::abs(d.location.x - 8.5) <= 1e-9);
        CHECK(std::abs(d.location.y - 8.5) <= 1e-9);
    }
    SUBCASE("continuous peak is recovered")
    {
        const auto d = udp_decode(ProbabilityMap(w, normalized(gaussian_bump(16, 16, 7.3, 5.8, 1.5))));
        CHECK(std::abs(d.location.x - 7.3) <= 0.2);
        CHECK(std::abs(d.location.y - 5.8) <= 0.2);
    }
    SUBCASE("translation by one cell")
    {
        const auto w32 = unit_window(32, 32);
        const auto a = udp_decode(ProbabilityMap(w32, normalized(gaussian_bump(32, 32, 15.3, 14.8, 1.5))));
        const auto b = udp_decode(ProbabilityMap(w32, normalized(gaussian_bump(32, 32, 16.3, 14.8, 1.5))));
        CHECK(b.location.x - a.location.x == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(b.location.y == doctest::Approx(a.location.y).epsilon(1e-6));
    }
    SUBCASE("singular Hessian falls back to the argmax")
    {
        const auto d = udp_decode(ProbabilityMap::uniform(w));
        CHECK_FALSE(d.refined);
        CHECK(d.location == w.cell_center(GridCell { 0, 0 }));
    }
}

TEST_CASE("expected oks decode")
{
    const auto w = unit_window(16, 16);
    const OksParams p { 16.0, 0.1 };
    SUBCASE("symmetric unimodal map")
    {
        const auto d = expected_oks_decode(ProbabilityMap(w, normalized(gaussian_bump(16, 16, 8.5, 8.5, 2.0))), p);
        CHECK(d.coarse_cell == GridCell { 8, 8 });
        CHECK(std::abs(d.location.x - 8.5) <= 1e-6);
        CHECK(std::abs(d.location.y - 8.5) <= 1e-6);
    }
    SUBCASE("heavier blob wins")
    {
        auto a = gaussian_bump(16, 16, 4.5, 8.5, 1.5);
        auto b = gaussian_bump(16, 16, 11.5, 8.5, 1.5);
        const double sa = std::accumulate(a.begin(), a.end(), 0.0);
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = 0.6 * a[i] / sa + 0.4 * b[i] / sa;
        const auto d = expected_oks_decode(ProbabilityMap(w, v), p);
        CHECK(d.location.x < 8.0);
    }
    SUBCASE("integer part matches a brute-force scan")
    {
        Rng rng(2);
        const auto w24 = unit_window(24, 24, 2.0);
        for (int t = 0; t < 10; ++t) {
            const auto m = testing::random_map(rng, w24);
            const OksParams q { rng.uniform(10.0, 60.0), 0.1 };
            std::size_t best = 0;
            double best_v = -1.0;
            for (std::size_t u = 0; u < m.size(); ++u) {
                double e = 0.0;
                for (std::size_t x = 0; x < m.size(); ++x)
                    e += m.values()[x] * oks_similarity(distance(w24.cell_center(u), w24.cell_center(x)), q);
                if (e > best_v + 1e-13) {
                    best_v = e;
                    best = u;
                }
            }
            const auto d = expected_oks_decode(m, q);
            CHECK(m.index(d.coarse_cell) == best);
            CHECK(d.score == doctest::Approx(best_v).epsilon(1e-10));
        }
    }
}

TEST_CASE("decoder invariants")
{
    Rng rng(3);
    for (int t = 0; t < 40; ++t) {
        const double cell = rng.uniform(0.5, 4.0);
        const auto w = unit_window(16, 16, cell);
        const auto m = ProbabilityMap(w,
            normalized(gaussian_bump(16, 16, rng.uniform(4, 12), rng.uniform(4, 12), rng.uniform(1.0, 3.0))));
        const OksParams p { 16.0 * cell, 0.1 };
        const auto udp = udp_decode(m);
        const auto eo = expected_oks_decode(m, p);

        // Score dominates the expected-OKS surface, including at the UDP cell.
        CHECK(eo.score >= expected_oks_at(m, p, w.cell_center(udp.coarse_cell)) - 1e-15);
        // Refinement stays within half a cell per axis.
        for (const auto& d : { udp, eo }) {
            const Point c = w.cell_center(d.coarse_cell);
            CHECK(distance(c, d.location) <= 0.5 * std::sqrt(2.0) * cell + 1e-12);
        }

        // Translating the window translates every decode.
        const double dx = rng.uniform(-50, 50);
        const double dy = rng.uniform(-50, 50);
        const ProbabilityMap moved(w.translated(dx, dy), std::vector<double>(m.values().begin(), m.values().end()));
        for (auto [a, b] : { std::pair { udp, udp_decode(moved) }, std::pair { eo, expected_oks_decode(moved, p) },
                 std::pair { argmax_decode(m), argmax_decode(moved) } }) {
            CHECK(b.location.x - a.location.x == doctest::Approx(dx).epsilon(1e-9));
            CHECK(b.location.y - a.location.y == doctest::Approx(dy).epsilon(1e-9));
        }
    }
}

TEST_CASE("udp and expected-oks agree on axis-symmetric maps")
{
    // Centers on the half-cell lattice make the discrete map mirror-symmetric per axis.
    Rng rng(4);
    for (int t = 0; t < 60; ++t) {
        const double cell = rng.uniform(0.5, 4.0);
        const auto w = unit_window(20, 20, cell);
        const double cx = 5.0 + 0.5 * static_cast<double>(rng.below(21));
        const double cy = 5.0 + 0.5 * static_cast<double>(rng.below(21));
        const double sx = rng.uniform(1.0, 3.0);
        const double sy = rng.uniform(1.0, 3.0);
        std::vector<double> v(400);
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 20; ++c)
                v[static_cast<std::size_t>(r * 20 + c)] = std::exp(-0.5 * (std::pow((c + 0.5 - cx) / sx, 2) + std::pow((r + 0.5 - cy) / sy, 2)));
        const ProbabilityMap m(w, normalized(v));
        const auto udp = udp_decode(m);
        const auto eo = expected_oks_decode(m, { 16.0 * cell, 0.1 });
        CHECK(distance(udp.location, eo.location) <= 0.1 * cell);
    }
}

TEST_CASE("double heatmap fusion")
{
    const ActivationWindow wide({ 0, 0, 64, 64 }, 16, 16);
    const ActivationWindow inner({ 16, 16, 48, 48 }, 16, 16);
    const OksParams p { 40.0, 0.1 };
    const ProbabilityMap expert(inner, normalized(gaussian_bump(16, 16, 5.2, 9.7, 1.2)));

    SUBCASE("wide decode inside the expert window uses the expert")
    {
        const ProbabilityMap m(wide, normalized(gaussian_bump(16, 16, 8.0, 8.0, 1.5)));
        const auto f = fuse_double(m, expert, p, 0.9);
        CHECK(f.used_expert);
        CHECK(f.present);
        const auto e = expected_oks_decode(expert, p);
        CHECK(f.keypoint.location == e.location);
        CHECK(f.keypoint.score == e.score);
        CHECK(f.keypoint.method == DecodeMethod::DoubleHeatmap);
    }
    SUBCASE("wide decode outside ignores a wildly different expert")
    {
        const ProbabilityMap m(wide, normalized(gaussian_bump(16, 16, 1.5, 14.5, 1.0)));
        const auto f = fuse_double(m, expert, p, 0.2);
        CHECK_FALSE(f.used_expert);
        CHECK_FALSE(f.present);
        CHECK(f.keypoint.location == expected_oks_decode(m, p).location);
    }
    CHECK_THROWS_AS(fuse_double(ProbabilityMap::uniform(inner), ProbabilityMap::uniform(wide), p), Error);
}
