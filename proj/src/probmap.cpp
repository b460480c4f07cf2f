#include "probpose/probmap.hpp"

#include "probpose/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace probpose {

namespace {

    void require_finite(std::span<const double> values, const char* what)
    {
        for (double v : values)
            if (!std::isfinite(v))
                throw Error(ErrorCode::NonFinite, std::string(what) + " contains NaN or Inf");
    }

} // namespace

ProbabilityMap::ProbabilityMap(ActivationWindow window, std::vector<double> values, int keypoint_type)
    : m_window(window)
    , m_values(std::move(values))
    , m_keypoint_type(keypoint_type)
{
    if (m_values.size() != m_window.cells())
        throw Error(ErrorCode::InvalidArgument,
            "map has " + std::to_string(m_values.size()) + " values, window grid has " + std::to_string(m_window.cells()));
    require_finite(m_values, "probability map");
    double sum = 0.0;
    for (double v : m_values) {
        if (v < 0.0)
            throw Error(ErrorCode::InvalidArgument, "probability map has a negative value");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw Error(ErrorCode::NotNormalized, "probability map sums to " + std::to_string(sum));
    if (sum != 1.0)
        for (double& v : m_values)
            v /= sum;
}

ProbabilityMap ProbabilityMap::uniform(const ActivationWindow& window, int keypoint_type)
{
    return { window, std::vector<double>(window.cells(), 1.0 / static_cast<double>(window.cells())), keypoint_type };
}

ProbabilityMap ProbabilityMap::one_hot(const ActivationWindow& window, GridCell cell, int keypoint_type)
{
    if (cell.col < 0 || cell.row < 0 || cell.col >= window.grid_w() || cell.row >= window.grid_h())
        throw Error(ErrorCode::InvalidArgument, "one-hot cell outside the grid");
    std::vector<double> v(window.cells(), 0.0);
    v[static_cast<std::size_t>(cell.row) * window.grid_w() + cell.col] = 1.0;
    return { window, std::move(v), keypoint_type };
}

PresenceProbability::PresenceProbability(double value)
    : m_value(value)
{
    if (!(value >= 0.0 && value <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "presence probability must lie in [0, 1]");
}

std::vector<double> sparsemax(std::span<const double> logits)
{
    require_finite(logits, "sparsemax input");
    if (logits.empty())
        throw Error(ErrorCode::InvalidArgument, "sparsemax of an empty vector");

    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> z(logits.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = logits[i] - top;

    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    // Largest k with 1 + k * z_(k) > sum_{j<=k} z_(j); k = 1 always qualifies.
    double cumsum = 0.0;
    double support_sum = sorted[0];
    std::size_t support = 1;
    for (std::size_t k = 1; k <= sorted.size(); ++k) {
        cumsum += sorted[k - 1];
        if (1.0 + static_cast<double>(k) * sorted[k - 1] > cumsum) {
            support = k;
            support_sum = cumsum;
        }
    }
    const double tau = (support_sum - 1.0) / static_cast<double>(support);

    for (double& v : z)
        v = std::max(v - tau, 0.0);
    return z;
}

std::vector<double> sparsemax_jvp(std::span<const double> logits, std::span<const double> tangent)
{
    if (logits.size() != tangent.size())
        throw Error(ErrorCode::InvalidArgument, "sparsemax_jvp: logits and tangent differ in size");
    const std::vector<double> s = sparsemax(logits);

    double sum = 0.0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 0.0) {
            sum += tangent[i];
            ++support;
        }
    const double mean = sum / static_cast<double>(support);

    std::vector<double> out(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 0.0)
            out[i] = tangent[i] - mean;
    return out;
}

std::vector<double> softmax(std::span<const double> logits)
{
    require_finite(logits, "softmax input");
    if (logits.empty())
        throw Error(ErrorCode::InvalidArgument, "softmax of an empty vector");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        sum += out[i];
    }
    for (double& v : out)
        v /= sum;
    return out;
}

std::vector<double> softmax_jvp(std::span<const double> logits, std::span<const double> tangent)
{
    if (logits.size() != tangent.size())
        throw Error(ErrorCode::InvalidArgument, "softmax_jvp: logits and tangent differ in size");
    const std::vector<double> p = softmax(logits);
    const double dot = std::inner_product(p.begin(), p.end(), tangent.begin(), 0.0);
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i] = p[i] * (tangent[i] - dot);
    return out;
}

std::vector<double> temperature_scale(std::span<const double> values, double temperature)
{
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw Error(ErrorCode::InvalidArgument, "temperature must be positive and finite");
    require_finite(values, "temperature_scale input");
    if (values.empty())
        throw Error(ErrorCode::InvalidArgument, "temperature_scale of an empty map");
    const double top = *std::max_element(values.begin(), values.end());
    if (!(top > 0.0))
        throw Error(ErrorCode::InvalidArgument, "temperature_scale of an all-zero map");

    const double exponent = 1.0 / temperature;
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = values[i] > 0.0 ? std::pow(values[i] / top, exponent) : 0.0;
        sum += out[i];
    }
    for (double& v : out)
        v /= sum;
    return out;
}

ProbabilityMap temperature_scale(const ProbabilityMap& map, double temperature)
{
    return { map.window(), temperature_scale(map.values(), temperature), map.keypoint_type() };
}

double coverage_of_point(std::span<const double> values, std::size_t cell)
{
    if (cell >= values.size())
        throw Error(ErrorCode::InvalidArgument, "coverage cell outside the map");
    const double level = values[cell];
    double mass = 0.0;
    for (double v : values)
        if (v >= level)
            mass += v;
    return mass;
}

double coverage_of_point(const ProbabilityMap& map, GridCell cell)
{
    if (cell.col < 0 || cell.row < 0 || cell.col >= map.window().grid_w() || cell.row >= map.window().grid_h())
        throw Error(ErrorCode::InvalidArgument, "coverage cell outside the grid");
    return coverage_of_point(map.values(), map.index(cell));
}

} // namespace probpose
