#pragma once

/// \file geometry.hpp
/// \brief Image frames, bounding boxes, activation windows and the A-E keypoint taxonomy.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace probpose {

inline constexpr std::size_t kNumKeypoints = 17;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

/// Half-open rectangle [x0, x1) x [y0, y1) in continuous image pixels.
struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    Point center() const { return { 0.5 * (x0 + x1), 0.5 * (y0 + y1) }; }
    bool valid() const { return x0 < x1 && y0 < y1; }
    bool contains(Point p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
    bool contains(const Rect& r) const { return r.x0 >= x0 && r.x1 <= x1 && r.y0 >= y0 && r.y1 <= y1; }

    /// COCO [x, y, w, h] layout.
    static Rect from_xywh(double x, double y, double w, double h) { return { x, y, x + w, y + h }; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

struct ImageExtent {
    int width = 0;
    int height = 0;

    bool valid() const { return width >= 1 && height >= 1; }
    Rect rect() const { return { 0.0, 0.0, static_cast<double>(width), static_cast<double>(height) }; }

    friend bool operator==(const ImageExtent&, const ImageExtent&) = default;
};

struct GridCell {
    int col = 0;
    int row = 0;

    friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Rectangle in image coordinates that a probability map covers, together with
/// the map resolution. Grid pixel (i, j) covers [i, i+1) x [j, j+1) in grid
/// units; its center is (i + 0.5, j + 0.5).
class ActivationWindow {
public:
    /// Throws Error(DegenerateGeometry) for an invalid rect or grid, and
    /// Error(InvalidArgument) when the rect aspect ratio differs from the
    /// grid's by more than 1e-9 (relative).
    ActivationWindow(Rect rect, int grid_w, int grid_h);

    const Rect& rect() const { return m_rect; }
    int grid_w() const { return m_grid_w; }
    int grid_h() const { return m_grid_h; }
    std::size_t cells() const { return static_cast<std::size_t>(m_grid_w) * static_cast<std::size_t>(m_grid_h); }

    /// Cell extent in image pixels.
    double cell_w() const { return m_rect.width() / m_grid_w; }
    double cell_h() const { return m_rect.height() / m_grid_h; }

    Point image_to_grid(Point p) const;
    Point grid_to_image(Point g) const;

    /// Image-space center of a cell.
    Point cell_center(GridCell c) const { return grid_to_image({ c.col + 0.5, c.row + 0.5 }); }
    Point cell_center(std::size_t flat_index) const;

    /// Cell holding an image point, or false when the point is outside the window.
    bool locate(Point p, GridCell& cell) const;

    ActivationWindow translated(double dx, double dy) const;

    friend bool operator==(const ActivationWindow&, const ActivationWindow&) = default;

private:
    Rect m_rect;
    int m_grid_w;
    int m_grid_h;
};

struct WindowConfig {
    double aspect_w_h = 3.0 / 4.0;
    double padding = 1.25;
    int grid_w = 48;
    int grid_h = 64;
};

/// Pads the bbox about its center, then grows the short side until the
/// requested aspect ratio is met. The result may extend past the image.
ActivationWindow window_from_bbox(const Rect& bbox, const ImageExtent& image, double aspect_w_h, double padding,
    int grid_w, int grid_h);
ActivationWindow window_from_bbox(const Rect& bbox, const ImageExtent& image, const WindowConfig& cfg);

enum class KeypointArea { A, B, C, D, E };

std::string_view to_string(KeypointArea area);

/// A: in bbox. B: window and image, not bbox. C: window, not image.
/// D: image, not window. E: neither.
KeypointArea classify_keypoint(Point p, const Rect& bbox, const ActivationWindow& window, const ImageExtent& image);

inline bool area_in_window(KeypointArea a) { return a == KeypointArea::A || a == KeypointArea::B || a == KeypointArea::C; }

/// Euclidean distance from p to the rectangle boundary, for p on either side.
double boundary_distance(const Rect& rect, Point p);
inline double boundary_distance(const ActivationWindow& window, Point p) { return boundary_distance(window.rect(), p); }

struct Keypoint {
    Point position;
    /// COCO visibility: 0 unlabeled, 1 labeled occluded, 2 labeled visible.
    int visibility = 0;

    bool labeled() const { return visibility > 0; }
};

struct PoseInstance {
    long long id = 0;
    long long image_id = 0;
    Rect bbox;
    /// Annotation area; zero when unknown.
    double area = 0.0;
    std::array<Keypoint, kNumKeypoints> keypoints{};

    int num_labeled() const;
    /// sqrt(area), or sqrt(0.53 * bbox area) when area is unknown.
    double object_scale() const;
};

/// Keypoints with a window, for building domain statistics.
struct WindowedInstance {
    PoseInstance instance;
    ActivationWindow window;
    ImageExtent image;
};

/// Percentages of labeled keypoints falling in areas A..E. Throws on an
/// empty input or when no keypoint is labeled.
std::array<double, 5> domain_vector(std::span<const WindowedInstance> dataset);

/// Raw counts behind domain_vector.
std::array<std::size_t, 5> domain_counts(std::span<const WindowedInstance> dataset);
std::array<double, 5> counts_to_percentages(const std::array<std::size_t, 5>& counts);

} // namespace probpose
