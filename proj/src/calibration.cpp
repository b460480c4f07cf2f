#include "probpose/calibration.hpp"

#include "probpose/error.hpp"
#include "probpose/parallel.hpp"
#include "probpose/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace probpose {

std::size_t coverage_bin(double coverage)
{
    const double b = std::ceil(coverage * static_cast<double>(kCoverageBins)) - 1.0;
    return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(kCoverageBins - 1)));
}

namespace {

    void finish(CoverageHistogram& h)
    {
        h.total = std::accumulate(h.counts.begin(), h.counts.end(), std::size_t { 0 });
        for (std::size_t b = 0; b < kCoverageBins; ++b)
            h.fractions[b] = h.total ? static_cast<double>(h.counts[b]) / static_cast<double>(h.total) : 0.0;
    }

    // One map's cells sorted by decreasing value, with the samples that use it
    // located by how many sorted cells have value >= the ground-truth value.
    struct MapGroup {
        const ProbabilityMap* map = nullptr;
        std::vector<double> sorted;
        std::vector<std::size_t> ranks;
    };

    std::vector<MapGroup> group_samples(std::span<const MapSample> samples)
    {
        if (samples.empty())
            throw Error(ErrorCode::InvalidArgument, "coverage needs at least one sample");
        std::map<const ProbabilityMap*, std::size_t> slot;
        std::vector<MapGroup> groups;
        for (const auto& s : samples) {
            if (!s.map)
                throw Error(ErrorCode::InvalidArgument, "sample without a map");
            const auto& w = s.map->window();
            if (s.gt.col < 0 || s.gt.row < 0 || s.gt.col >= w.grid_w() || s.gt.row >= w.grid_h())
                throw Error(ErrorCode::InvalidArgument, "ground-truth cell outside the map");
            auto [it, fresh] = slot.try_emplace(s.map.get(), groups.size());
            if (fresh) {
                MapGroup g;
                g.map = s.map.get();
                g.sorted.assign(s.map->values().begin(), s.map->values().end());
                std::sort(g.sorted.begin(), g.sorted.end(), std::greater<>());
                groups.push_back(std::move(g));
            }
            MapGroup& g = groups[it->second];
            const double v = s.map->at(s.gt);
            g.ranks.push_back(static_cast<std::size_t>(
                std::upper_bound(g.sorted.begin(), g.sorted.end(), v, std::greater<>()) - g.sorted.begin()));
        }
        return groups;
    }

    void accumulate_group(const MapGroup& g, double temperature, std::array<std::size_t, kCoverageBins>& counts,
        std::vector<double>& scratch)
    {
        const double vmax = g.sorted.front();
        scratch.resize(g.sorted.size() + 1);
        scratch[0] = 0.0;
        const double inv_t = 1.0 / temperature;
        for (std::size_t i = 0; i < g.sorted.size(); ++i) {
            const double v = g.sorted[i];
            const double w = temperature == 1.0 ? v : (v > 0.0 ? std::pow(v / vmax, inv_t) : 0.0);
            scratch[i + 1] = scratch[i] + w;
        }
        const double total = scratch.back();
        for (std::size_t r : g.ranks)
            ++counts[coverage_bin(scratch[r] / total)];
    }

    CoverageHistogram histogram_of(const std::vector<MapGroup>& groups, double temperature, unsigned jobs)
    {
        if (!(temperature > 0.0) || !std::isfinite(temperature))
            throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
        std::vector<std::array<std::size_t, kCoverageBins>> partial(groups.size());
        parallel_for(groups.size(), jobs, [&](std::size_t i) {
            std::vector<double> scratch;
            partial[i].fill(0);
            accumulate_group(groups[i], temperature, partial[i], scratch);
        });
        CoverageHistogram h;
        for (const auto& p : partial)
            for (std::size_t b = 0; b < kCoverageBins; ++b)
                h.counts[b] += p[b];
        finish(h);
        return h;
    }

} // namespace

CoverageHistogram coverage_histogram(std::span<const MapSample> samples, double temperature, unsigned jobs)
{
    return histogram_of(group_samples(samples), temperature, jobs);
}

double calibration_objective(const CoverageHistogram& hist)
{
    double sum = 0.0;
    for (double f : hist.fractions)
        sum += (f - 0.05) * (f - 0.05);
    return sum;
}

std::vector<double> default_temperature_grid()
{
    std::vector<double> grid(61);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = 0.25 * std::pow(16.0, static_cast<double>(i) / 60.0);
    grid[30] = 1.0;
    grid[45] = 2.0;
    return grid;
}

TemperatureFit fit_temperature(std::span<const MapSample> samples, std::span<const double> grid, unsigned jobs)
{
    if (grid.empty())
        throw Error(ErrorCode::InvalidArgument, "temperature grid is empty");
    for (double t : grid)
        if (!(t > 0.0) || !std::isfinite(t))
            throw Error(ErrorCode::InvalidArgument, "temperatures must be positive");

    const auto groups = group_samples(samples);
    TemperatureFit fit;
    fit.grid.assign(grid.begin(), grid.end());
    fit.before = histogram_of(groups, 1.0, jobs);

    std::size_t best = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        fit.objective.push_back(calibration_objective(histogram_of(groups, grid[i], jobs)));
        const double gap = std::abs(std::log(grid[i]));
        const double best_gap = std::abs(std::log(grid[best]));
        if (fit.objective[i] < fit.objective[best] || (fit.objective[i] == fit.objective[best] && gap < best_gap))
            best = i;
    }
    fit.temperature = grid[best];
    fit.after = histogram_of(groups, fit.temperature, jobs);
    return fit;
}

ReliabilityCurve presence_reliability(std::span<const PresenceSample> samples, std::size_t n_bins)
{
    if (n_bins < 2)
        throw Error(ErrorCode::InvalidArgument, "reliability needs at least two bins");
    if (samples.empty())
        throw Error(ErrorCode::InvalidArgument, "reliability needs at least one sample");

    ReliabilityCurve curve;
    curve.bins.resize(n_bins);
    std::vector<double> score_sum(n_bins, 0.0);
    std::vector<double> hits(n_bins, 0.0);
    for (const auto& s : samples) {
        if (!(s.score >= 0.0 && s.score <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "presence score outside [0, 1]");
        const auto b = std::min(n_bins - 1, static_cast<std::size_t>(s.score * static_cast<double>(n_bins)));
        ++curve.bins[b].count;
        score_sum[b] += s.score;
        hits[b] += s.present ? 1.0 : 0.0;
    }
    curve.total = samples.size();
    for (std::size_t b = 0; b < n_bins; ++b) {
        auto& bin = curve.bins[b];
        bin.center = (static_cast<double>(b) + 0.5) / static_cast<double>(n_bins);
        if (bin.count == 0)
            continue;
        const double n = static_cast<double>(bin.count);
        bin.mean_score = score_sum[b] / n;
        bin.frequency = hits[b] / n;
        curve.ece += n / static_cast<double>(curve.total) * std::abs(bin.mean_score - bin.frequency);
    }
    return curve;
}

std::vector<MapSample> synthetic_coverage_samples(const SyntheticCoverageConfig& cfg)
{
    if (cfg.maps == 0 || cfg.draws_per_map == 0)
        throw Error(ErrorCode::InvalidArgument, "synthetic sampler needs maps and draws");
    if (!(cfg.min_sigma_cells > 0.0 && cfg.min_sigma_cells <= cfg.max_sigma_cells))
        throw Error(ErrorCode::InvalidArgument, "sigma range must be positive and ordered");

    const ActivationWindow window({ 0.0, 0.0, 48.0, 64.0 }, 48, 64);
    Rng rng(cfg.seed);
    std::vector<MapSample> samples;
    samples.reserve(cfg.maps * cfg.draws_per_map);
    std::vector<double> values(window.cells());
    std::vector<double> cdf(window.cells());
    for (std::size_t m = 0; m < cfg.maps; ++m) {
        const double cx = rng.uniform(8.0, 40.0);
        const double cy = rng.uniform(8.0, 56.0);
        const double sigma = rng.uniform(cfg.min_sigma_cells, cfg.max_sigma_cells);
        double sum = 0.0;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 48; ++c) {
                const double dx = c + 0.5 - cx;
                const double dy = r + 0.5 - cy;
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                values[static_cast<std::size_t>(r * 48 + c)] = v;
                sum += v;
            }
        for (double& v : values)
            v /= sum;
        std::partial_sum(values.begin(), values.end(), cdf.begin());

        auto map = std::make_shared<const ProbabilityMap>(
            cfg.corruption_temperature == 1.0 ? ProbabilityMap(window, values)
                                              : ProbabilityMap(window, temperature_scale(values, cfg.corruption_temperature)));
        for (std::size_t d = 0; d < cfg.draws_per_map; ++d) {
            const double u = rng.uniform() * cdf.back();
            auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            idx = std::min(idx, values.size() - 1);
            while (values[idx] == 0.0 && idx > 0)
                --idx;
            samples.push_back({ map, { static_cast<int>(idx % 48), static_cast<int>(idx / 48) } });
        }
    }
    return samples;
}

std::string coverage_csv(const CoverageHistogram& hist)
{
    std::ostringstream out;
    out << "bin_low,bin_high,count,fraction\n";
    char line[96];
    for (std::size_t b = 0; b < kCoverageBins; ++b) {
        std::snprintf(line, sizeof line, "%.2f,%.2f,%zu,%.6f\n", 0.05 * static_cast<double>(b),
            0.05 * static_cast<double>(b + 1), hist.counts[b], hist.fractions[b]);
        out << line;
    }
    return out.str();
}

std::string reliability_csv(const ReliabilityCurve& curve)
{
    std::ostringstream out;
    out << "center,mean_score,frequency,count\n";
    char line[128];
    for (const auto& b : curve.bins) {
        std::snprintf(line, sizeof line, "%.4f,%.6f,%.6f,%zu\n", b.center, b.mean_score, b.frequency, b.count);
        out << line;
    }
    return out.str();
}

} // namespace probpose
