#pragma once

/// \file interop.hpp
/// \brief COCO keypoint ground truth (with the presence extension),
/// prediction documents and the PMAP probability-map container.

#include "probpose/geometry.hpp"
#include "probpose/metrics.hpp"
#include "probpose/probmap.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probpose {

using Json = nlohmann::ordered_json;

struct GtImage {
    long long id = 0;
    ImageExtent extent;
    /// Fields other than id/width/height, kept for round trips.
    Json extra = Json::object();
};

struct GtAnnotation {
    GtInstance instance;
    /// Fields other than the ones modelled here (category_id, num_keypoints,
    /// iscrowd, segmentation, ...), kept verbatim.
    Json extra = Json::object();
};

struct GtDocument {
    std::vector<GtImage> images;
    std::vector<GtAnnotation> annotations;
    /// Top-level fields other than images/annotations.
    Json extra = Json::object();
    /// Non-fatal observations made while parsing.
    std::vector<std::string> warnings;

    const GtImage* find_image(long long id) const;
};

struct PredictionEntry {
    Prediction prediction;
    /// PMAP file holding this instance's maps, relative to the document.
    std::optional<std::string> pmap;
    Json extra = Json::object();
};

struct PredictionDocument {
    std::vector<PredictionEntry> entries;
};

/// Throws Error(MalformedJson) for unparsable text and Error(SchemaViolation)
/// naming the offending annotation id for schema problems.
GtDocument parse_gt(std::string_view text);
std::string serialize_gt(const GtDocument& doc);

PredictionDocument parse_predictions(std::string_view text);
std::string serialize_predictions(const PredictionDocument& doc);

/// Builds the per-image evaluation structure. Predictions whose image is not
/// in the GT are ignored.
std::vector<EvalImage> assemble_eval_images(const GtDocument& gt, const PredictionDocument& preds);

inline constexpr std::uint32_t kPmapVersion = 1;

/// K probability maps over one activation window plus K presence values.
/// Stored in f32; the window rect in f64.
struct PmapFile {
    Rect window_rect;
    std::uint32_t grid_w = 0;
    std::uint32_t grid_h = 0;
    std::vector<float> presence;
    /// K maps, grid_h * grid_w values each, row-major.
    std::vector<std::vector<float>> maps;

    std::size_t keypoint_count() const { return maps.size(); }
    ActivationWindow window() const;
    /// Map k widened to double and renormalised.
    ProbabilityMap map(std::size_t k) const;

    static PmapFile from_maps(std::span<const ProbabilityMap> maps, std::span<const double> presence);
};

/// Layout (little-endian): "PMAP", u32 version, u32 K, u32 grid_h, u32 grid_w,
/// f64 x0 y0 x1 y1, f32 presence[K], f32 values[K][grid_h][grid_w].
/// Throws Error with BadMagic, UnsupportedVersion, Truncated, InvalidHeader,
/// NotNormalized (sum off by more than 1e-5, negative or non-finite values)
/// or TrailingBytes.
PmapFile read_pmap(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pmap(const PmapFile& file);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

} // namespace probpose
