#pragma once

/// \file decoder.hpp
/// \brief Point estimates from probability maps.

#include "probpose/geometry.hpp"
#include "probpose/oks.hpp"
#include "probpose/probmap.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace probpose {

enum class DecodeMethod { Argmax, Udp, ExpectedOks, DoubleHeatmap };

std::string_view to_string(DecodeMethod method);
/// Accepts "argmax", "udp", "expected-oks", "double". Throws on anything else.
DecodeMethod decode_method_from_string(std::string_view name);

struct DecodedKeypoint {
    /// Image pixels.
    Point location;
    /// Peak map value (argmax, udp) or peak expected OKS.
    double score = 0.0;
    DecodeMethod method = DecodeMethod::Argmax;
    /// Cell the refinement started from.
    GridCell coarse_cell;
    /// False when subpixel refinement was skipped (singular Hessian).
    bool refined = true;
};

/// Center of the maximal cell; ties go to the lowest row-major index.
DecodedKeypoint argmax_decode(const ProbabilityMap& map);

/// Separable Gaussian blur with replicated borders, kernel truncated at
/// `truncate` sigmas and normalised to unit sum.
std::vector<double> gaussian_blur(std::span<const double> values, int grid_w, int grid_h, double sigma,
    double truncate = 4.0);

/// Blur, take the log, then one Newton step -H^{-1} grad at the argmax, clamped
/// to half a cell per axis. Falls back to the argmax (refined = false) when the
/// Hessian is singular.
DecodedKeypoint udp_decode(const ProbabilityMap& map, double blur_sigma = 2.0);

/// Argmax of the expected-OKS map, refined per axis by a parabola through the
/// two neighbours, offset clamped to half a cell. Border axes are not refined.
DecodedKeypoint expected_oks_decode(const ProbabilityMap& map, const OksParams& params);

struct FusedDecode {
    DecodedKeypoint keypoint;
    bool used_expert = false;
    /// Presence of the wide-window prediction against the threshold.
    bool present = true;
};

/// Decodes the wide map; if that lands inside the expert window the expert
/// map's decode is returned instead. Throws Error(InvalidArgument) unless the
/// expert window lies inside the wide one.
FusedDecode fuse_double(const ProbabilityMap& wide_map, const ProbabilityMap& expert_map, const OksParams& params,
    double wide_presence = 1.0, double presence_threshold = 0.5);

} // namespace probpose
