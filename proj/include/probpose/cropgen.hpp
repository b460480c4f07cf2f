#pragma once

/// \file cropgen.hpp
/// \brief Random image crops applied to keypoint annotations, producing ground
/// truth with keypoints outside the image and the window.

#include "probpose/geometry.hpp"
#include "probpose/interop.hpp"
#include "probpose/random.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace probpose {

/// Retained fraction of each image side, drawn uniformly from [min_frac, max_frac].
struct CropStrength {
    double min_frac = 0.5;
    double max_frac = 0.9;

    /// Throws Error(InvalidArgument) unless 0 < min_frac <= max_frac <= 1.
    void validate() const;
};

struct CropSpec {
    /// Integer-pixel sub-rect of the source image.
    Rect crop_rect;
    long long source_image_id = 0;
    std::uint64_t seed = 0;

    ImageExtent extent() const;
};

inline constexpr int kMinCropSide = 8;

/// Each axis keeps round(f * side) pixels with f ~ U[min, max]; the removed
/// pixels come off the low side, the high side, or a random split of both,
/// chosen uniformly. Crops under 8x8 are redrawn; after 100 failed draws
/// throws Error(DegenerateGeometry).
CropSpec sample_crop(const ImageExtent& image, const CropStrength& strength, Rng& rng);

struct ExtendedInstance {
    /// Shifted into crop coordinates; bbox recomputed, area kept.
    PoseInstance instance;
    ImageExtent image;
    ActivationWindow window;
    std::array<KeypointArea, kNumKeypoints> areas{};
    /// presence[k] == area_in_window(areas[k]) for labeled keypoints; unlabeled
    /// keypoints carry no absence claim and stay true.
    std::array<bool, kNumKeypoints> presence{};
};

/// Returns nullopt (instance dropped) when no labeled keypoint remains inside
/// the crop.
std::optional<ExtendedInstance> transform_instance(const PoseInstance& inst, const CropSpec& crop,
    const WindowConfig& window_cfg);

struct DroppedInstance {
    long long annotation_id = 0;
    long long image_id = 0;
};

struct Cropset {
    GtDocument document;
    /// One entry per image, in input order.
    std::vector<CropSpec> manifest;
    std::vector<DroppedInstance> dropped;
    std::array<std::size_t, 5> area_counts{};
    std::array<double, 5> domain{};
};

/// Crops every image with a stream derived from (seed, image id), so the
/// result does not depend on `jobs`.
Cropset build_cropset(const GtDocument& gt, const CropStrength& strength, std::uint64_t seed,
    const WindowConfig& window_cfg = {}, unsigned jobs = 1);

/// CSV with header image_id,x0,y0,x1,y1,seed.
std::string manifest_csv(const std::vector<CropSpec>& manifest);

} // namespace probpose
