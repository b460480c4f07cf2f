#pragma once

#include "probpose/geometry.hpp"
#include "probpose/interop.hpp"
#include "probpose/probmap.hpp"
#include "probpose/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace testing {

using namespace probpose;

inline ActivationWindow unit_window(int w, int h, double cell = 1.0)
{
    return { Rect { 0.0, 0.0, w * cell, h * cell }, w, h };
}

/// Strictly positive random map.
inline ProbabilityMap random_map(Rng& rng, const ActivationWindow& window)
{
    std::vector<double> v(window.cells());
    double sum = 0.0;
    for (double& x : v) {
        x = rng.uniform() + 1e-3;
        sum += x;
    }
    for (double& x : v)
        x /= sum;
    return { window, std::move(v) };
}

/// Gaussian bump sampled at cell centers (grid units), unnormalised.
inline std::vector<double> gaussian_bump(int w, int h, double cx, double cy, double sigma, double weight = 1.0)
{
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dx = c + 0.5 - cx;
            const double dy = r + 0.5 - cy;
            v[static_cast<std::size_t>(r * w + c)] = weight * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    return v;
}

inline std::vector<double> normalized(std::vector<double> v)
{
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v)
        x /= s;
    return v;
}

/// Projection onto the simplex by Michelot's iterative support pruning; shares
/// nothing with the sort-based implementation under test.
inline std::vector<double> michelot_projection(const std::vector<double>& z)
{
    std::vector<bool> active(z.size(), true);
    double tau = 0.0;
    for (;;) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (active[i]) {
                sum += z[i];
                ++n;
            }
        tau = (sum - 1.0) / static_cast<double>(n);
        bool changed = false;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (active[i] && z[i] <= tau) {
                active[i] = false;
                changed = true;
            }
        if (!changed)
            break;
    }
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        p[i] = std::max(z[i] - tau, 0.0);
    return p;
}

/// Flat Dirichlet(1) sample, optionally with some coordinates zeroed.
inline std::vector<double> random_simplex_point(Rng& rng, std::size_t n, bool sparse)
{
    std::vector<double> p(n);
    double sum = 0.0;
    for (double& x : p) {
        x = (sparse && rng.uniform() < 0.5) ? 0.0 : -std::log(1.0 - rng.uniform());
        sum += x;
    }
    if (sum == 0.0) {
        p[rng.below(n)] = 1.0;
        return p;
    }
    for (double& x : p)
        x /= sum;
    return p;
}

inline PoseInstance random_pose(Rng& rng, long long id, long long image_id, const ImageExtent& image)
{
    PoseInstance p;
    p.id = id;
    p.image_id = image_id;
    const double w = rng.uniform(20.0, 0.5 * image.width);
    const double h = rng.uniform(20.0, 0.5 * image.height);
    const double x = rng.uniform(0.0, image.width - w);
    const double y = rng.uniform(0.0, image.height - h);
    p.bbox = Rect::from_xywh(x, y, w, h);
    p.area = rng.uniform() < 0.2 ? 0.0 : 0.6 * w * h;
    for (auto& kp : p.keypoints) {
        kp.visibility = static_cast<int>(rng.below(3));
        // Mostly inside the box, a few just outside it.
        kp.position = { rng.uniform(x - 0.1 * w, x + 1.1 * w), rng.uniform(y - 0.1 * h, y + 1.1 * h) };
    }
    if (p.num_labeled() == 0)
        p.keypoints[0].visibility = 2;
    return p;
}

inline GtDocument random_gt_document(Rng& rng, int images, int per_image)
{
    GtDocument doc;
    long long next_id = 1;
    for (int i = 0; i < images; ++i) {
        GtImage img;
        img.id = 100 + i;
        img.extent = { static_cast<int>(rng.uniform(120.0, 800.0)), static_cast<int>(rng.uniform(120.0, 800.0)) };
        doc.images.push_back(img);
        for (int k = 0; k < per_image; ++k) {
            GtAnnotation ann;
            ann.instance.pose = random_pose(rng, next_id++, img.id, img.extent);
            doc.annotations.push_back(std::move(ann));
        }
    }
    return doc;
}

inline Prediction prediction_from(const PoseInstance& pose, double score)
{
    Prediction p;
    p.image_id = pose.image_id;
    p.score = score;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        p.keypoints[k] = pose.keypoints[k].position;
        p.confidence[k] = 1.0;
        p.presence[k] = 1.0;
    }
    return p;
}

} // namespace testing
