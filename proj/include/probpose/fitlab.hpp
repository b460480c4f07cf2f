#pragma once

/// \file fitlab.hpp
/// \brief Fits a single probability map to a target point by gradient descent
/// on the dense OKS loss, through Sparsemax (or Softmax for comparison).

#include "probpose/geometry.hpp"
#include "probpose/oks.hpp"
#include "probpose/probmap.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probpose {

enum class Normalizer { Sparsemax, Softmax };

std::string_view to_string(Normalizer n);
Normalizer normalizer_from_string(std::string_view name);

struct FitConfig {
    /// 48x64 cells of one pixel each by default.
    ActivationWindow window { Rect { 0.0, 0.0, 48.0, 64.0 }, 48, 64 };
    OksParams oks { 32.0, 0.05 };
    LossConfig loss;
    double step = 0.5;
    int iterations = 500;
    /// Each iteration starts from twice the last accepted step (capped at
    /// `step`). Retries per iteration, each halving the step, before the run is
    /// considered converged.
    int max_halvings = 40;
    std::uint64_t seed = 0;
    Normalizer normalizer = Normalizer::Sparsemax;

    void validate() const;
};

struct FitReport {
    LossValue final_loss;
    /// Expected-OKS decode of the fitted map.
    Point decoded;
    double decoded_error_px = 0.0;
    std::size_t support_size = 0;
    /// Mass within one OKS sigma (scale * kappa) of the target.
    double mass_within_sigma = 0.0;
    /// Smallest radius holding 90% of the mass.
    double radius90 = 0.0;
    double entropy = 0.0;
    /// Loss before the first step and after every accepted step.
    std::vector<double> loss_trace;
    int iterations_run = 0;
    bool converged = false;
};

struct FitResult {
    ProbabilityMap map;
    FitReport report;
};

/// Called with the iteration number and the accepted map after every step.
using FitObserver = std::function<void(int, std::span<const double>)>;

/// Logits start at zero. Each iteration proposes z - step * J^T dL/dp and
/// halves the step until the loss does not increase; when no step helps the
/// run stops as converged. A non-finite loss throws Error(Diverged) carrying
/// the loss trace in its message.
FitResult fit_map(Point gt, const FitConfig& cfg, const FitObserver& observer = {});

/// Mass of the cells whose centers lie within each radius (image pixels) of gt.
std::vector<double> sharpness_report(const ProbabilityMap& map, Point gt, std::span<const double> radii);

/// Smallest cell-center distance r such that the mass within r reaches `fraction`.
double mass_radius(const ProbabilityMap& map, Point gt, double fraction);

double entropy(const ProbabilityMap& map);

std::string loss_trace_csv(const FitReport& report);

} // namespace probpose
