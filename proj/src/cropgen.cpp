#include "probpose/cropgen.hpp"

#include "probpose/error.hpp"
#include "probpose/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace probpose {

void CropStrength::validate() const
{
    if (!(min_frac > 0.0 && min_frac <= max_frac && max_frac <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "crop strength needs 0 < min <= max <= 1");
}

ImageExtent CropSpec::extent() const
{
    return { static_cast<int>(crop_rect.width()), static_cast<int>(crop_rect.height()) };
}

namespace {

    // Returns [lo, hi) of the kept pixels along one axis.
    std::pair<long long, long long> crop_axis(int side, double frac, Rng& rng)
    {
        const long long keep = std::clamp<long long>(std::llround(frac * side), 1, side);
        const long long cut = side - keep;
        long long lo = 0;
        switch (rng.below(3)) {
        case 0: lo = cut; break;
        case 1: lo = 0; break;
        default: lo = static_cast<long long>(rng.below(static_cast<std::uint64_t>(cut) + 1)); break;
        }
        return { lo, lo + keep };
    }

} // namespace

CropSpec sample_crop(const ImageExtent& image, const CropStrength& strength, Rng& rng)
{
    strength.validate();
    if (!image.valid())
        throw Error(ErrorCode::DegenerateGeometry, "cannot crop an empty image");
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double fx = rng.uniform(strength.min_frac, strength.max_frac);
        const double fy = rng.uniform(strength.min_frac, strength.max_frac);
        const auto [x0, x1] = crop_axis(image.width, fx, rng);
        const auto [y0, y1] = crop_axis(image.height, fy, rng);
        if (x1 - x0 < kMinCropSide || y1 - y0 < kMinCropSide)
            continue;
        CropSpec spec;
        spec.crop_rect = { static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1), static_cast<double>(y1) };
        return spec;
    }
    throw Error(ErrorCode::DegenerateGeometry,
        "no crop of at least 8x8 pixels found for a " + std::to_string(image.width) + "x" + std::to_string(image.height) + " image");
}

std::optional<ExtendedInstance> transform_instance(const PoseInstance& inst, const CropSpec& crop,
    const WindowConfig& window_cfg)
{
    if (!crop.crop_rect.valid())
        throw Error(ErrorCode::DegenerateGeometry, "crop rect is empty");
    const double dx = crop.crop_rect.x0;
    const double dy = crop.crop_rect.y0;
    const ImageExtent extent = crop.extent();
    const Rect image = extent.rect();

    PoseInstance out = inst;
    int inside = 0;
    Rect hull { std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity() };
    for (auto& kp : out.keypoints) {
        kp.position = { kp.position.x - dx, kp.position.y - dy };
        if (kp.labeled() && image.contains(kp.position)) {
            ++inside;
            hull = { std::min(hull.x0, kp.position.x), std::min(hull.y0, kp.position.y),
                std::max(hull.x1, kp.position.x), std::max(hull.y1, kp.position.y) };
        }
    }
    if (inside == 0)
        return std::nullopt;

    const Rect shifted { inst.bbox.x0 - dx, inst.bbox.y0 - dy, inst.bbox.x1 - dx, inst.bbox.y1 - dy };
    out.bbox = { std::max(shifted.x0, image.x0), std::max(shifted.y0, image.y0), std::min(shifted.x1, image.x1),
        std::min(shifted.y1, image.y1) };
    if (!out.bbox.valid()) {
        // The box left the crop while some keypoints stayed: fall back to their hull.
        out.bbox = { hull.x0, hull.y0, std::max(hull.x1, hull.x0 + 1.0), std::max(hull.y1, hull.y0 + 1.0) };
    }

    ExtendedInstance ext { out, extent, window_from_bbox(out.bbox, extent, window_cfg), {}, {} };
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        ext.areas[k] = classify_keypoint(out.keypoints[k].position, out.bbox, ext.window, extent);
        ext.presence[k] = !out.keypoints[k].labeled() || area_in_window(ext.areas[k]);
    }
    return ext;
}

Cropset build_cropset(const GtDocument& gt, const CropStrength& strength, std::uint64_t seed,
    const WindowConfig& window_cfg, unsigned jobs)
{
    strength.validate();
    std::map<long long, std::size_t> slot;
    for (std::size_t i = 0; i < gt.images.size(); ++i)
        slot[gt.images[i].id] = i;
    std::vector<std::vector<std::size_t>> per_image(gt.images.size());
    for (std::size_t a = 0; a < gt.annotations.size(); ++a) {
        const auto it = slot.find(gt.annotations[a].instance.pose.image_id);
        if (it == slot.end())
            throw Error(ErrorCode::SchemaViolation,
                "annotation id " + std::to_string(gt.annotations[a].instance.pose.id) + " refers to an unknown image");
        per_image[it->second].push_back(a);
    }

    struct ImageResult {
        CropSpec spec;
        std::vector<std::pair<std::size_t, std::optional<ExtendedInstance>>> instances;
    };
    std::vector<ImageResult> results(gt.images.size());
    parallel_for(gt.images.size(), jobs, [&](std::size_t i) {
        const GtImage& img = gt.images[i];
        Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(img.id));
        try {
            results[i].spec = sample_crop(img.extent, strength, rng);
        } catch (const Error& e) {
            throw Error(e.code(), "image id " + std::to_string(img.id) + ": " + e.what());
        }
        results[i].spec.source_image_id = img.id;
        results[i].spec.seed = seed;
        for (std::size_t a : per_image[i])
            results[i].instances.emplace_back(a, transform_instance(gt.annotations[a].instance.pose, results[i].spec, window_cfg));
    });

    Cropset out;
    out.document.extra = gt.extra;
    out.document.images.reserve(gt.images.size());
    for (std::size_t i = 0; i < gt.images.size(); ++i) {
        GtImage img = gt.images[i];
        img.extent = results[i].spec.extent();
        out.document.images.push_back(std::move(img));
        out.manifest.push_back(results[i].spec);
    }

    // Emit annotations in input order regardless of image grouping.
    std::vector<const std::optional<ExtendedInstance>*> by_annotation(gt.annotations.size(), nullptr);
    for (const auto& r : results)
        for (const auto& [a, ext] : r.instances)
            by_annotation[a] = &ext;
    for (std::size_t a = 0; a < gt.annotations.size(); ++a) {
        const auto& ext = *by_annotation[a];
        const PoseInstance& src = gt.annotations[a].instance.pose;
        if (!ext) {
            out.dropped.push_back({ src.id, src.image_id });
            continue;
        }
        GtAnnotation ann;
        ann.instance.pose = ext->instance;
        ann.instance.presence = ext->presence;
        ann.extra = gt.annotations[a].extra;
        out.document.annotations.push_back(std::move(ann));
        for (std::size_t k = 0; k < kNumKeypoints; ++k)
            if (ext->instance.keypoints[k].labeled())
                ++out.area_counts[static_cast<int>(ext->areas[k])];
    }
    std::size_t total = 0;
    for (auto c : out.area_counts)
        total += c;
    if (total > 0)
        out.domain = counts_to_percentages(out.area_counts);
    return out;
}

std::string manifest_csv(const std::vector<CropSpec>& manifest)
{
    std::ostringstream out;
    out << "image_id,x0,y0,x1,y1,seed\n";
    for (const auto& m : manifest)
        out << m.source_image_id << ',' << static_cast<long long>(m.crop_rect.x0) << ','
            << static_cast<long long>(m.crop_rect.y0) << ',' << static_cast<long long>(m.crop_rect.x1) << ','
            << static_cast<long long>(m.crop_rect.y1) << ',' << m.seed << '\n';
    return out.str();
}

} // namespace probpose
