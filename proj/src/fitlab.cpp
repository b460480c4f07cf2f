#include "probpose/fitlab.hpp"

#include "probpose/decoder.hpp"
#include "probpose/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace probpose {

std::string_view to_string(Normalizer n)
{
    return n == Normalizer::Sparsemax ? "sparsemax" : "softmax";
}

Normalizer normalizer_from_string(std::string_view name)
{
    if (name == "sparsemax")
        return Normalizer::Sparsemax;
    if (name == "softmax")
        return Normalizer::Softmax;
    throw Error(ErrorCode::InvalidArgument, "unknown normalizer '" + std::string(name) + "'");
}

void FitConfig::validate() const
{
    oks.validate();
    loss.validate();
    if (!(step > 0.0) || !std::isfinite(step))
        throw Error(ErrorCode::InvalidArgument, "step must be positive");
    if (iterations < 1)
        throw Error(ErrorCode::InvalidArgument, "iterations must be at least 1");
    if (max_halvings < 0)
        throw Error(ErrorCode::InvalidArgument, "max_halvings must be nonnegative");
}

namespace {

    std::string trace_text(const std::vector<double>& trace)
    {
        std::ostringstream out;
        out << "loss trace:";
        char buf[32];
        for (double v : trace) {
            std::snprintf(buf, sizeof buf, " %.9g", v);
            out << buf;
        }
        return out.str();
    }

} // namespace

FitResult fit_map(Point gt, const FitConfig& cfg, const FitObserver& observer)
{
    cfg.validate();
    if (!cfg.window.rect().contains(gt))
        throw Error(ErrorCode::InvalidArgument, "target must lie inside the window");

    const bool sparse = cfg.normalizer == Normalizer::Sparsemax;
    auto normalize = [&](std::span<const double> z) { return sparse ? sparsemax(z) : softmax(z); };
    auto vjp = [&](std::span<const double> z, std::span<const double> t) {
        return sparse ? sparsemax_jvp(z, t) : softmax_jvp(z, t);
    };
    auto loss_of = [&](std::span<const double> p) {
        return dense_oks_loss(p, cfg.window, gt, cfg.oks, cfg.loss);
    };

    std::vector<double> z(cfg.window.cells(), 0.0);
    std::vector<double> p = normalize(z);
    LossValue loss = loss_of(p);
    FitReport report;
    report.loss_trace.push_back(loss.value);
    if (!std::isfinite(loss.value))
        throw Error(ErrorCode::Diverged, trace_text(report.loss_trace));

    std::vector<double> candidate(z.size());
    double last_step = cfg.step;
    for (int it = 0; it < cfg.iterations; ++it) {
        const std::vector<double> grad_p = dense_oks_loss_grad(p, cfg.window, gt, cfg.oks, cfg.loss);
        const std::vector<double> dir = vjp(z, grad_p);
        if (std::all_of(dir.begin(), dir.end(), [](double d) { return d == 0.0; })) {
            report.converged = true;
            break;
        }

        bool accepted = false;
        double step = std::min(cfg.step, 2.0 * last_step);
        for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt, step *= 0.5) {
            for (std::size_t i = 0; i < z.size(); ++i)
                candidate[i] = z[i] - step * dir[i];
            std::vector<double> q = normalize(candidate);
            const LossValue next = loss_of(q);
            if (!std::isfinite(next.value)) {
                report.loss_trace.push_back(next.value);
                throw Error(ErrorCode::Diverged, trace_text(report.loss_trace));
            }
            if (next.value <= loss.value) {
                z.swap(candidate);
                p = std::move(q);
                loss = next;
                last_step = step;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            report.converged = true;
            break;
        }
        report.loss_trace.push_back(loss.value);
        report.iterations_run = it + 1;
        if (observer)
            observer(it, p);
    }

    ProbabilityMap map(cfg.window, std::move(p));
    report.final_loss = loss;
    report.decoded = expected_oks_decode(map, cfg.oks).location;
    report.decoded_error_px = distance(report.decoded, gt);
    report.support_size = static_cast<std::size_t>(
        std::count_if(map.values().begin(), map.values().end(), [](double v) { return v > 0.0; }));
    const double sigma = cfg.oks.sigma_px();
    report.mass_within_sigma = sharpness_report(map, gt, std::span(&sigma, 1)).front();
    report.radius90 = mass_radius(map, gt, 0.9);
    report.entropy = entropy(map);
    return { std::move(map), std::move(report) };
}

std::vector<double> sharpness_report(const ProbabilityMap& map, Point gt, std::span<const double> radii)
{
    std::vector<double> out;
    out.reserve(radii.size());
    for (double r : radii) {
        double mass = 0.0;
        for (std::size_t i = 0; i < map.size(); ++i)
            if (distance(map.window().cell_center(i), gt) <= r)
                mass += map.values()[i];
        out.push_back(std::min(mass, 1.0));
    }
    return out;
}

double mass_radius(const ProbabilityMap& map, Point gt, double fraction)
{
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "mass fraction must lie in (0, 1]");
    std::vector<std::pair<double, double>> cells;
    cells.reserve(map.size());
    for (std::size_t i = 0; i < map.size(); ++i)
        cells.emplace_back(distance(map.window().cell_center(i), gt), map.values()[i]);
    std::sort(cells.begin(), cells.end());
    double mass = 0.0;
    for (const auto& [d, v] : cells) {
        mass += v;
        if (mass >= fraction - 1e-12)
            return d;
    }
    return cells.back().first;
}

double entropy(const ProbabilityMap& map)
{
    double h = 0.0;
    for (double v : map.values())
        if (v > 0.0)
            h -= v * std::log(v);
    return h;
}

std::string loss_trace_csv(const FitReport& report)
{
    std::ostringstream out;
    out << "iteration,loss\n";
    char line[64];
    for (std::size_t i = 0; i < report.loss_trace.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.12g\n", i, report.loss_trace[i]);
        out << line;
    }
    return out.str();
}

} // namespace probpose
