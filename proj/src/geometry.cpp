#include "probpose/geometry.hpp"

#include "probpose/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace probpose {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DegenerateGeometry: return "degenerate geometry";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::NotNormalized: return "not normalized";
    case ErrorCode::MalformedJson: return "malformed json";
    case ErrorCode::SchemaViolation: return "schema violation";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::UnsupportedVersion: return "unsupported version";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::InvalidHeader: return "invalid header";
    case ErrorCode::TrailingBytes: return "trailing bytes";
    case ErrorCode::Io: return "i/o";
    case ErrorCode::Diverged: return "diverged";
    }
    return "unknown";
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

ActivationWindow::ActivationWindow(Rect rect, int grid_w, int grid_h)
    : m_rect(rect)
    , m_grid_w(grid_w)
    , m_grid_h(grid_h)
{
    if (!(std::isfinite(rect.x0) && std::isfinite(rect.y0) && std::isfinite(rect.x1) && std::isfinite(rect.y1))
        || !rect.valid())
        throw Error(ErrorCode::DegenerateGeometry, "activation window rect is empty or non-finite");
    if (grid_w < 1 || grid_h < 1)
        throw Error(ErrorCode::DegenerateGeometry, "activation window grid must be at least 1x1");
    const double rect_aspect = rect.width() / rect.height();
    const double grid_aspect = static_cast<double>(grid_w) / grid_h;
    if (std::abs(rect_aspect / grid_aspect - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidArgument,
            "activation window aspect " + std::to_string(rect_aspect) + " does not match grid aspect "
                + std::to_string(grid_aspect));
}

Point ActivationWindow::image_to_grid(Point p) const
{
    return { (p.x - m_rect.x0) / cell_w(), (p.y - m_rect.y0) / cell_h() };
}

Point ActivationWindow::grid_to_image(Point g) const
{
    return { m_rect.x0 + g.x * cell_w(), m_rect.y0 + g.y * cell_h() };
}

Point ActivationWindow::cell_center(std::size_t flat_index) const
{
    const auto w = static_cast<std::size_t>(m_grid_w);
    return cell_center(GridCell { static_cast<int>(flat_index % w), static_cast<int>(flat_index / w) });
}

bool ActivationWindow::locate(Point p, GridCell& cell) const
{
    if (!m_rect.contains(p))
        return false;
    const Point g = image_to_grid(p);
    cell.col = std::clamp(static_cast<int>(std::floor(g.x)), 0, m_grid_w - 1);
    cell.row = std::clamp(static_cast<int>(std::floor(g.y)), 0, m_grid_h - 1);
    return true;
}

ActivationWindow ActivationWindow::translated(double dx, double dy) const
{
    return { { m_rect.x0 + dx, m_rect.y0 + dy, m_rect.x1 + dx, m_rect.y1 + dy }, m_grid_w, m_grid_h };
}

ActivationWindow window_from_bbox(const Rect& bbox, const ImageExtent& image, double aspect_w_h, double padding,
    int grid_w, int grid_h)
{
    if (!bbox.valid())
        throw Error(ErrorCode::DegenerateGeometry, "bounding box has zero width or height");
    if (!image.valid())
        throw Error(ErrorCode::DegenerateGeometry, "image extent must be at least 1x1");
    if (!(padding >= 1.0) || !std::isfinite(padding))
        throw Error(ErrorCode::InvalidArgument, "padding must be >= 1");
    if (!(aspect_w_h > 0.0) || !std::isfinite(aspect_w_h))
        throw Error(ErrorCode::InvalidArgument, "aspect ratio must be positive");

    double w = bbox.width() * padding;
    double h = bbox.height() * padding;
    if (w / h > aspect_w_h)
        h = w / aspect_w_h;
    else
        w = h * aspect_w_h;

    const Point c = bbox.center();
    return { { c.x - 0.5 * w, c.y - 0.5 * h, c.x + 0.5 * w, c.y + 0.5 * h }, grid_w, grid_h };
}

ActivationWindow window_from_bbox(const Rect& bbox, const ImageExtent& image, const WindowConfig& cfg)
{
    return window_from_bbox(bbox, image, cfg.aspect_w_h, cfg.padding, cfg.grid_w, cfg.grid_h);
}

std::string_view to_string(KeypointArea area)
{
    static constexpr std::string_view names[] = { "A", "B", "C", "D", "E" };
    return names[static_cast<int>(area)];
}

KeypointArea classify_keypoint(Point p, const Rect& bbox, const ActivationWindow& window, const ImageExtent& image)
{
    if (bbox.contains(p))
        return KeypointArea::A;
    const bool in_window = window.rect().contains(p);
    const bool in_image = image.rect().contains(p);
    if (in_window)
        return in_image ? KeypointArea::B : KeypointArea::C;
    return in_image ? KeypointArea::D : KeypointArea::E;
}

double boundary_distance(const Rect& r, Point p)
{
    const bool inside = p.x >= r.x0 && p.x <= r.x1 && p.y >= r.y0 && p.y <= r.y1;
    if (inside)
        return std::min({ p.x - r.x0, r.x1 - p.x, p.y - r.y0, r.y1 - p.y });
    const double dx = std::max({ r.x0 - p.x, 0.0, p.x - r.x1 });
    const double dy = std::max({ r.y0 - p.y, 0.0, p.y - r.y1 });
    return std::hypot(dx, dy);
}

int PoseInstance::num_labeled() const
{
    return static_cast<int>(std::count_if(keypoints.begin(), keypoints.end(), [](const Keypoint& k) { return k.labeled(); }));
}

double PoseInstance::object_scale() const
{
    if (area > 0.0)
        return std::sqrt(area);
    return std::sqrt(0.53 * bbox.width() * bbox.height());
}

std::array<std::size_t, 5> domain_counts(std::span<const WindowedInstance> dataset)
{
    std::array<std::size_t, 5> counts{};
    for (const auto& item : dataset)
        for (const auto& kp : item.instance.keypoints)
            if (kp.labeled())
                ++counts[static_cast<int>(classify_keypoint(kp.position, item.instance.bbox, item.window, item.image))];
    return counts;
}

std::array<double, 5> counts_to_percentages(const std::array<std::size_t, 5>& counts)
{
    std::size_t total = 0;
    for (auto c : counts)
        total += c;
    if (total == 0)
        throw Error(ErrorCode::InvalidArgument, "domain vector needs at least one labeled keypoint");
    std::array<double, 5> out{};
    for (std::size_t i = 0; i < 5; ++i)
        out[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(total);
    return out;
}

std::array<double, 5> domain_vector(std::span<const WindowedInstance> dataset)
{
    if (dataset.empty())
        throw Error(ErrorCode::InvalidArgument, "domain vector of an empty dataset");
    return counts_to_percentages(domain_counts(dataset));
}

} // namespace probpose
