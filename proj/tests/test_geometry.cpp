#include "support.hpp"

#include "probpose/error.hpp"
#include "probpose/geometry.hpp"

#include <doctest.h>

using namespace probpose;
using testing::unit_window;

TEST_CASE("rect is half-open")
{
    const Rect r { 0.0, 0.0, 10.0, 5.0 };
    CHECK(r.contains(Point { 0.0, 0.0 }));
    CHECK(r.contains(Point { 9.999, 4.999 }));
    CHECK_FALSE(r.contains(Point { 10.0, 2.0 }));
    CHECK_FALSE(r.contains(Point { 2.0, 5.0 }));
    CHECK(Rect::from_xywh(1, 2, 3, 4) == Rect { 1, 2, 4, 6 });
}

TEST_CASE("activation window rejects bad geometry")
{
    CHECK_THROWS_AS(ActivationWindow(Rect { 0, 0, 0, 10 }, 4, 4), Error);
    CHECK_THROWS_AS(ActivationWindow(Rect { 0, 0, 10, 10 }, 0, 4), Error);
    try {
        ActivationWindow(Rect { 0, 0, 10, 10 }, 4, 5);
        FAIL("aspect mismatch accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("window_from_bbox examples")
{
    const ImageExtent img { 100, 100 };
    SUBCASE("already at the target aspect")
    {
        const auto w = window_from_bbox({ 0, 0, 30, 40 }, img, 0.75, 1.0, 48, 64);
        CHECK(w.rect() == Rect { 0, 0, 30, 40 });
    }
    SUBCASE("square box grows in height")
    {
        const auto w = window_from_bbox({ 0, 0, 40, 40 }, img, 0.75, 1.0, 48, 64);
        CHECK(w.rect().x0 == doctest::Approx(0.0));
        CHECK(w.rect().x1 == doctest::Approx(40.0));
        CHECK(w.rect().y0 == doctest::Approx(-20.0 / 3.0));
        CHECK(w.rect().y1 == doctest::Approx(140.0 / 3.0));
    }
    SUBCASE("padding applies before the aspect fit")
    {
        const auto w = window_from_bbox({ 10, 10, 20, 20 }, img, 0.75, 1.25, 48, 64);
        CHECK(w.rect().width() == doctest::Approx(12.5));
        CHECK(w.rect().height() == doctest::Approx(12.5 / 0.75));
        CHECK(w.rect().center().x == doctest::Approx(15.0));
    }
    CHECK_THROWS_AS(window_from_bbox({ 0, 0, 0, 10 }, img, 0.75, 1.25, 48, 64), Error);
    CHECK_THROWS_AS(window_from_bbox({ 0, 0, 5, 10 }, img, 0.75, 0.5, 48, 64), Error);
}

TEST_CASE("window_from_bbox encloses the padded box with minimal area")
{
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        const Rect bbox = Rect::from_xywh(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(1, 300), rng.uniform(1, 300));
        const double padding = rng.uniform(1.0, 2.0);
        const auto w = window_from_bbox(bbox, { 200, 200 }, 0.75, padding, 48, 64);
        const Rect& r = w.rect();
        const double pw = bbox.width() * padding;
        const double ph = bbox.height() * padding;
        CHECK(r.width() / r.height() == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(r.width() >= pw * (1 - 1e-12));
        CHECK(r.height() >= ph * (1 - 1e-12));
        CHECK(r.center().x == doctest::Approx(bbox.center().x));
        CHECK(r.center().y == doctest::Approx(bbox.center().y));
        // Any centered 3:4 rect holding the padded box has width >= max(pw, 0.75 ph).
        CHECK(r.width() == doctest::Approx(std::max(pw, 0.75 * ph)).epsilon(1e-12));
    }
}

TEST_CASE("classify_keypoint examples")
{
    const ImageExtent img { 100, 100 };
    const Rect bbox { 10, 10, 40, 40 };
    const ActivationWindow wide({ -20, -20, 70, 100 }, 9, 12);
    CHECK(classify_keypoint(bbox.center(), bbox, wide, img) == KeypointArea::A);
    CHECK(classify_keypoint({ -5, 10 }, bbox, wide, img) == KeypointArea::C);
    const ActivationWindow small({ 0, 0, 50, 50 }, 10, 10);
    CHECK(classify_keypoint({ 90, 90 }, bbox, small, img) == KeypointArea::D);
    CHECK(classify_keypoint({ 45, 45 }, bbox, small, img) == KeypointArea::B);
    CHECK(classify_keypoint({ 150, 150 }, bbox, small, img) == KeypointArea::E);
    CHECK(to_string(KeypointArea::C) == "C");
}

TEST_CASE("areas partition the plane")
{
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const ImageExtent img { 1 + static_cast<int>(rng.below(200)), 1 + static_cast<int>(rng.below(200)) };
        const Rect bbox = Rect::from_xywh(rng.uniform(-100, 200), rng.uniform(-100, 200), rng.uniform(1, 100), rng.uniform(1, 100));
        const double ww = rng.uniform(1, 300);
        const ActivationWindow w(Rect::from_xywh(rng.uniform(-100, 200), rng.uniform(-100, 200), ww, ww * 4.0 / 3.0), 3, 4);
        const Point p { rng.uniform(-200, 400), rng.uniform(-200, 400) };
        const bool in_b = p.x >= bbox.x0 && p.x < bbox.x1 && p.y >= bbox.y0 && p.y < bbox.y1;
        const bool in_w = p.x >= w.rect().x0 && p.x < w.rect().x1 && p.y >= w.rect().y0 && p.y < w.rect().y1;
        const bool in_i = p.x >= 0 && p.x < img.width && p.y >= 0 && p.y < img.height;
        const bool flags[5] = { in_b, !in_b && in_w && in_i, !in_b && in_w && !in_i, !in_b && !in_w && in_i,
            !in_b && !in_w && !in_i };
        CHECK(std::count(std::begin(flags), std::end(flags), true) == 1);
        CHECK(flags[static_cast<int>(classify_keypoint(p, bbox, w, img))]);
    }
}

TEST_CASE("boundary_distance")
{
    const Rect r { 0, 0, 10, 10 };
    CHECK(boundary_distance(r, { 0, 4 }) == 0.0);
    CHECK(boundary_distance(r, { 10, 4 }) == 0.0);
    CHECK(boundary_distance(r, { 5, 3 }) == 3.0);
    CHECK(boundary_distance(r, { 13, 14 }) == doctest::Approx(5.0));

    // Dense sampling of the boundary as an oracle.
    std::vector<Point> edge;
    for (int i = 0; i <= 4000; ++i) {
        const double t = 10.0 * i / 4000.0;
        edge.insert(edge.end(), { { t, 0 }, { t, 10 }, { 0, t }, { 10, t } });
    }
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const Point p { rng.uniform(-20, 30), rng.uniform(-20, 30) };
        double best = 1e300;
        for (const auto& q : edge)
            best = std::min(best, distance(p, q));
        CHECK(boundary_distance(r, p) == doctest::Approx(best).epsilon(1e-3));
        const Point q { p.x + rng.uniform(-1, 1), p.y + rng.uniform(-1, 1) };
        CHECK(std::abs(boundary_distance(r, p) - boundary_distance(r, q)) <= distance(p, q) + 1e-12);
    }
}

TEST_CASE("grid mapping")
{
    const ActivationWindow w({ 0, 0, 192, 256 }, 48, 64);
    CHECK(w.image_to_grid({ 0, 0 }) == Point { 0, 0 });
    CHECK(w.image_to_grid({ 96, 128 }) == Point { 24, 32 });
    CHECK(w.cell_center(GridCell { 0, 0 }) == Point { 2, 2 });
    CHECK(w.cell_center(std::size_t { 49 }) == w.cell_center(GridCell { 1, 1 }));
    GridCell c;
    CHECK(w.locate({ 5, 9 }, c));
    CHECK(c == GridCell { 1, 2 });
    CHECK_FALSE(w.locate({ -0.1, 9 }, c));

    Rng rng(7);
    const ActivationWindow odd({ -13.25, 7.5, 40.75, 79.5 }, 48, 64);
    for (int i = 0; i < 1000; ++i) {
        const Point p { rng.uniform(-500, 500), rng.uniform(-500, 500) };
        const Point q = odd.grid_to_image(odd.image_to_grid(p));
        CHECK(std::abs(q.x - p.x) <= 1e-12 * std::max(1.0, std::abs(p.x)));
        CHECK(std::abs(q.y - p.y) <= 1e-12 * std::max(1.0, std::abs(p.y)));
    }
    const auto moved = w.translated(3, -4);
    CHECK(moved.rect() == Rect { 3, -4, 195, 252 });
}

TEST_CASE("domain vector")
{
    const ImageExtent img { 200, 200 };
    PoseInstance p;
    p.bbox = { 50, 50, 100, 120 };
    for (auto& kp : p.keypoints)
        kp = { p.bbox.center(), 2 };
    const auto w = window_from_bbox(p.bbox, img, WindowConfig {});
    std::vector<WindowedInstance> set(5, WindowedInstance { p, w, img });
    auto v = domain_vector(set);
    CHECK(v[0] == 100.0);
    CHECK(v[1] + v[2] + v[3] + v[4] == 0.0);

    // 7 of 10 instances fully in A, 3 fully in C (left of the image, inside the window).
    PoseInstance edge;
    edge.bbox = { 0, 50, 40, 110 };
    for (auto& kp : edge.keypoints)
        kp = { -1.0, 80.0 };
    for (auto& kp : edge.keypoints)
        kp.visibility = 1;
    const auto we = window_from_bbox(edge.bbox, img, WindowConfig {});
    REQUIRE(we.rect().x0 < -1.0);
    std::vector<WindowedInstance> mixed;
    for (int i = 0; i < 7; ++i)
        mixed.push_back({ p, w, img });
    for (int i = 0; i < 3; ++i)
        mixed.push_back({ edge, we, img });
    v = domain_vector(mixed);
    CHECK(v[0] == doctest::Approx(70.0));
    CHECK(v[2] == doctest::Approx(30.0));
    CHECK(v[0] + v[1] + v[2] + v[3] + v[4] == doctest::Approx(100.0).epsilon(1e-12));

    // Unlabeled keypoints do not count.
    PoseInstance unl = p;
    for (auto& kp : unl.keypoints)
        kp.visibility = 0;
    std::vector<WindowedInstance> none { { unl, w, img } };
    CHECK_THROWS_AS(domain_vector(none), Error);
    CHECK_THROWS_AS(domain_vector(std::span<const WindowedInstance> {}), Error);
}

TEST_CASE("object scale")
{
    PoseInstance p;
    p.bbox = { 0, 0, 10, 20 };
    p.area = 64.0;
    CHECK(p.object_scale() == 8.0);
    p.area = 0.0;
    CHECK(p.object_scale() == doctest::Approx(std::sqrt(0.53 * 200.0)));
}
