#pragma once

/// \file oks.hpp
/// \brief Object keypoint similarity, OKS kernels, expected-OKS maps and the
/// dense OKS loss used to train probability maps.

#include "probpose/geometry.hpp"
#include "probpose/probmap.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probpose {

/// OKS is exp(-d^2 / (2 s^2 kappa^2)) with object scale s in pixels and a
/// unitless per-keypoint-type constant kappa.
struct OksParams {
    double scale = 1.0;
    double kappa = 1.0;

    /// Throws Error(InvalidArgument) unless both are positive and finite.
    void validate() const;
    double sigma_px() const { return scale * kappa; }
};

struct LossConfig {
    double alpha = 0.0;
    double sobel_epsilon = 1e-12;

    void validate() const;
};

const std::array<std::string_view, kNumKeypoints>& coco_keypoint_names();

/// Per-keypoint kappa. Defaults are twice the COCO per-keypoint sigmas
/// (nose 0.052 ... ankles 0.178), which is the constant that multiplies the
/// object scale in the COCO OKS.
class KappaTable {
public:
    KappaTable();

    static KappaTable coco() { return {}; }

    /// Parses `name=value` lines ('#' starts a comment). Names are the COCO
    /// keypoint names; unspecified keypoints keep their defaults.
    static KappaTable parse(std::string_view text);
    static KappaTable load(const std::filesystem::path& path);

    double operator[](std::size_t keypoint_type) const { return m_kappa.at(keypoint_type); }
    void set(std::size_t keypoint_type, double kappa);
    const std::array<double, kNumKeypoints>& values() const { return m_kappa; }

    std::string to_text() const;

private:
    std::array<double, kNumKeypoints> m_kappa;
};

double oks_similarity(double distance_px, const OksParams& params);

/// Square kernel of OKS values at cell-center offsets, converted to image
/// pixels. (2r+1)^2 values, row-major, the center holds 1.
struct OksKernel {
    int radius = 0;
    std::vector<double> values;

    int side() const { return 2 * radius + 1; }
    double at(int dx, int dy) const { return values[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))]; }
};

/// Smallest radius (cells) whose square support holds >= `mass` of the kernel.
int oks_kernel_radius(const OksParams& params, const ActivationWindow& window, double mass = 0.999);

/// Throws Error(InvalidArgument) when `radius_cells` holds less than 0.999 of the mass.
OksKernel oks_kernel(const OksParams& params, const ActivationWindow& window, int radius_cells);

/// Expected OKS of placing the keypoint at each cell center,
/// E[u] = sum_x p(x) OKS(|u - x|), i.e. the map convolved with the untruncated
/// OKS kernel (evaluated separably). Row-major, values in [0, 1].
std::vector<double> expected_oks_map(const ProbabilityMap& map, const OksParams& params);

/// Expected OKS at an arbitrary image point.
double expected_oks_at(const ProbabilityMap& map, const OksParams& params, Point image_point);

struct LossValue {
    double value = 0.0;
    double risk = 0.0;
    double regularizer = 0.0;
};

/// sum_i (1 - alpha) (1 - OKS(x_i, gt)) p_i + alpha sum_i sqrt(Gx_i^2 + Gy_i^2 + eps)
/// where G are 3x3 Sobel responses of the map with replicated borders.
/// `values` need not be normalised (gradient checks perturb them); `gt` is in
/// image coordinates and must lie inside the window.
LossValue dense_oks_loss(std::span<const double> values, const ActivationWindow& window, Point gt,
    const OksParams& params, const LossConfig& cfg);
LossValue dense_oks_loss(const ProbabilityMap& map, Point gt, const OksParams& params, const LossConfig& cfg);

/// Analytic d loss / d p_i, same layout as the map.
std::vector<double> dense_oks_loss_grad(std::span<const double> values, const ActivationWindow& window, Point gt,
    const OksParams& params, const LossConfig& cfg);
std::vector<double> dense_oks_loss_grad(const ProbabilityMap& map, Point gt, const OksParams& params,
    const LossConfig& cfg);

} // namespace probpose
