#pragma once

/// \file calibration.hpp
/// \brief Coverage calibration of probability maps (temperature fitting) and
/// reliability of presence probabilities.

#include "probpose/geometry.hpp"
#include "probpose/metrics.hpp"
#include "probpose/probmap.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace probpose {

/// A map together with the cell holding the ground-truth keypoint. Several
/// samples may share one map.
struct MapSample {
    std::shared_ptr<const ProbabilityMap> map;
    GridCell gt;
};

inline constexpr std::size_t kCoverageBins = 20;

struct CoverageHistogram {
    std::array<std::size_t, kCoverageBins> counts{};
    std::array<double, kCoverageBins> fractions{};
    std::size_t total = 0;
};

/// Bin of a coverage value: (0, 0.05] -> 0, ..., (0.95, 1] -> 19.
std::size_t coverage_bin(double coverage);

/// Histogram of coverage_of_point over the samples after temperature scaling
/// each map. Throws Error(InvalidArgument) on an empty input.
CoverageHistogram coverage_histogram(std::span<const MapSample> samples, double temperature = 1.0, unsigned jobs = 1);

/// Sum over bins of (fraction - 0.05)^2.
double calibration_objective(const CoverageHistogram& hist);

/// 61 log-spaced temperatures from 0.25 to 4 (index 30 is 1, index 45 is 2).
std::vector<double> default_temperature_grid();

struct TemperatureFit {
    double temperature = 1.0;
    std::vector<double> grid;
    std::vector<double> objective;
    CoverageHistogram before;
    CoverageHistogram after;
};

/// Grid search for the temperature minimising calibration_objective; ties go
/// to the temperature closest to 1 in log scale.
TemperatureFit fit_temperature(std::span<const MapSample> samples, std::span<const double> grid, unsigned jobs = 1);

struct ReliabilityBin {
    double center = 0.0;
    double mean_score = 0.0;
    double frequency = 0.0;
    std::size_t count = 0;
};

struct ReliabilityCurve {
    std::vector<ReliabilityBin> bins;
    double ece = 0.0;
    std::size_t total = 0;
};

/// Equal-width bins over [0, 1] (a score of 1 falls in the last bin). Empty
/// bins are reported with count 0 and skipped in the ECE.
ReliabilityCurve presence_reliability(std::span<const PresenceSample> samples, std::size_t n_bins = 10);

struct SyntheticCoverageConfig {
    std::size_t maps = 500;
    std::size_t draws_per_map = 20;
    /// Applied to each map after the ground truth is drawn; 1 keeps the
    /// sampler calibrated, below 1 makes it overconfident.
    double corruption_temperature = 1.0;
    double min_sigma_cells = 4.0;
    double max_sigma_cells = 10.0;
    std::uint64_t seed = 0;
};

/// Isotropic Gaussian maps on a 48x64 window with random subpixel centers;
/// ground-truth cells are drawn from each (uncorrupted) map.
std::vector<MapSample> synthetic_coverage_samples(const SyntheticCoverageConfig& cfg);

std::string coverage_csv(const CoverageHistogram& hist);
std::string reliability_csv(const ReliabilityCurve& curve);

} // namespace probpose
