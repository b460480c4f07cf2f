#include "probpose/decoder.hpp"

#include "probpose/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace probpose {

std::string_view to_string(DecodeMethod method)
{
    switch (method) {
    case DecodeMethod::Argmax: return "argmax";
    case DecodeMethod::Udp: return "udp";
    case DecodeMethod::ExpectedOks: return "expected-oks";
    case DecodeMethod::DoubleHeatmap: return "double";
    }
    return "unknown";
}

DecodeMethod decode_method_from_string(std::string_view name)
{
    for (auto m : { DecodeMethod::Argmax, DecodeMethod::Udp, DecodeMethod::ExpectedOks, DecodeMethod::DoubleHeatmap })
        if (to_string(m) == name)
            return m;
    throw Error(ErrorCode::InvalidArgument, "unknown decode method '" + std::string(name) + "'");
}

namespace {

    std::size_t argmax_index(std::span<const double> v)
    {
        // max_element returns the first maximum, i.e. the lowest row-major index.
        return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    }

    GridCell cell_of(std::size_t index, int grid_w)
    {
        return { static_cast<int>(index % static_cast<std::size_t>(grid_w)),
            static_cast<int>(index / static_cast<std::size_t>(grid_w)) };
    }

    Point refined_location(const ActivationWindow& window, GridCell cell, double dx, double dy)
    {
        return window.grid_to_image({ cell.col + 0.5 + dx, cell.row + 0.5 + dy });
    }

} // namespace

DecodedKeypoint argmax_decode(const ProbabilityMap& map)
{
    const std::size_t i = argmax_index(map.values());
    DecodedKeypoint out;
    out.coarse_cell = cell_of(i, map.window().grid_w());
    out.location = map.window().cell_center(out.coarse_cell);
    out.score = map.values()[i];
    out.method = DecodeMethod::Argmax;
    return out;
}

std::vector<double> gaussian_blur(std::span<const double> values, int grid_w, int grid_h, double sigma, double truncate)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw Error(ErrorCode::InvalidArgument, "blur sigma must be positive");
    if (values.size() != static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h))
        throw Error(ErrorCode::InvalidArgument, "blur input size does not match the grid");

    const int radius = std::max(1, static_cast<int>(std::ceil(truncate * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        kernel[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += kernel[d + radius];
    }
    for (double& k : kernel)
        k /= sum;

    std::vector<double> tmp(values.size());
    for (int r = 0; r < grid_h; ++r)
        for (int c = 0; c < grid_w; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += kernel[d + radius] * values[static_cast<std::size_t>(r * grid_w + std::clamp(c + d, 0, grid_w - 1))];
            tmp[static_cast<std::size_t>(r * grid_w + c)] = acc;
        }
    std::vector<double> out(values.size());
    for (int r = 0; r < grid_h; ++r)
        for (int c = 0; c < grid_w; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += kernel[d + radius] * tmp[static_cast<std::size_t>(std::clamp(r + d, 0, grid_h - 1) * grid_w + c)];
            out[static_cast<std::size_t>(r * grid_w + c)] = acc;
        }
    return out;
}

DecodedKeypoint udp_decode(const ProbabilityMap& map, double blur_sigma)
{
    const auto& window = map.window();
    const int w = window.grid_w();
    const int h = window.grid_h();

    std::vector<double> logmap = gaussian_blur(map.values(), w, h, blur_sigma);
    for (double& v : logmap)
        v = std::log(std::max(v, 1e-12));

    const std::size_t i = argmax_index(logmap);
    const GridCell cell = cell_of(i, w);
    auto at = [&](int c, int r) {
        return logmap[static_cast<std::size_t>(std::clamp(r, 0, h - 1) * w + std::clamp(c, 0, w - 1))];
    };
    const int c = cell.col;
    const int r = cell.row;

    const double dx = 0.5 * (at(c + 1, r) - at(c - 1, r));
    const double dy = 0.5 * (at(c, r + 1) - at(c, r - 1));
    const double dxx = at(c + 1, r) - 2.0 * at(c, r) + at(c - 1, r);
    const double dyy = at(c, r + 1) - 2.0 * at(c, r) + at(c, r - 1);
    const double dxy = 0.25 * (at(c + 1, r + 1) - at(c + 1, r - 1) - at(c - 1, r + 1) + at(c - 1, r - 1));
    const double det = dxx * dyy - dxy * dxy;

    DecodedKeypoint out;
    out.method = DecodeMethod::Udp;
    out.coarse_cell = cell;
    out.score = map.values()[i];
    if (std::abs(det) < 1e-12 || !std::isfinite(det)) {
        out.location = window.cell_center(cell);
        out.refined = false;
        return out;
    }
    const double ox = std::clamp(-(dyy * dx - dxy * dy) / det, -0.5, 0.5);
    const double oy = std::clamp(-(dxx * dy - dxy * dx) / det, -0.5, 0.5);
    out.location = refined_location(window, cell, ox, oy);
    return out;
}

DecodedKeypoint expected_oks_decode(const ProbabilityMap& map, const OksParams& params)
{
    const auto& window = map.window();
    const int w = window.grid_w();
    const int h = window.grid_h();
    const std::vector<double> e = expected_oks_map(map, params);

    const std::size_t i = argmax_index(e);
    const GridCell cell = cell_of(i, w);

    auto parabola = [](double lo, double mid, double hi) {
        const double curvature = lo - 2.0 * mid + hi;
        if (!(curvature < 0.0))
            return 0.0;
        return std::clamp(0.5 * (lo - hi) / curvature, -0.5, 0.5);
    };
    double ox = 0.0;
    double oy = 0.0;
    if (cell.col > 0 && cell.col < w - 1)
        ox = parabola(e[i - 1], e[i], e[i + 1]);
    if (cell.row > 0 && cell.row < h - 1)
        oy = parabola(e[i - static_cast<std::size_t>(w)], e[i], e[i + static_cast<std::size_t>(w)]);

    DecodedKeypoint out;
    out.method = DecodeMethod::ExpectedOks;
    out.coarse_cell = cell;
    out.score = e[i];
    out.location = refined_location(window, cell, ox, oy);
    return out;
}

FusedDecode fuse_double(const ProbabilityMap& wide_map, const ProbabilityMap& expert_map, const OksParams& params,
    double wide_presence, double presence_threshold)
{
    if (!wide_map.window().rect().contains(expert_map.window().rect()))
        throw Error(ErrorCode::InvalidArgument, "expert window must lie inside the wide window");

    FusedDecode out;
    out.present = PresenceProbability(wide_presence).present(presence_threshold);
    out.keypoint = expected_oks_decode(wide_map, params);
    if (expert_map.window().rect().contains(out.keypoint.location)) {
        out.keypoint = expected_oks_decode(expert_map, params);
        out.used_expert = true;
    }
    out.keypoint.method = DecodeMethod::DoubleHeatmap;
    return out;
}

} // namespace probpose
