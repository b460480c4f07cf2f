#pragma once

/// \file probmap.hpp
/// \brief Probability maps over an activation window, Sparsemax normalisation
/// and map-level temperature scaling.

#include "probpose/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace probpose {

/// Nonnegative grid over an activation window summing to one: the probability
/// of each cell holding the keypoint, given that the keypoint is in the window.
/// Row-major, grid_h rows of grid_w values. Immutable after construction.
class ProbabilityMap {
public:
    /// Values summing to within 1e-6 of one are renormalised; anything further
    /// off, negative or non-finite is rejected.
    ProbabilityMap(ActivationWindow window, std::vector<double> values, int keypoint_type = 0);

    static ProbabilityMap uniform(const ActivationWindow& window, int keypoint_type = 0);
    static ProbabilityMap one_hot(const ActivationWindow& window, GridCell cell, int keypoint_type = 0);

    const ActivationWindow& window() const { return m_window; }
    std::span<const double> values() const { return m_values; }
    int keypoint_type() const { return m_keypoint_type; }
    std::size_t size() const { return m_values.size(); }

    double at(GridCell c) const { return m_values[index(c)]; }
    std::size_t index(GridCell c) const
    {
        return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(m_window.grid_w()) + static_cast<std::size_t>(c.col);
    }

private:
    ActivationWindow m_window;
    std::vector<double> m_values;
    int m_keypoint_type;
};

/// Probability that a keypoint lies inside the activation window at all.
class PresenceProbability {
public:
    explicit PresenceProbability(double value);
    double value() const { return m_value; }
    bool present(double threshold) const { return m_value >= threshold; }

private:
    double m_value;
};

/// Euclidean projection of `logits` onto the probability simplex. Throws
/// Error(NonFinite) on NaN/Inf input. Inputs are shifted by their maximum
/// before projecting, so adding a constant that is exactly representable
/// leaves the output bit-identical.
std::vector<double> sparsemax(std::span<const double> logits);

/// Jacobian-vector product of sparsemax at `logits`. The Jacobian is
/// symmetric, so this is also the vector-Jacobian product.
std::vector<double> sparsemax_jvp(std::span<const double> logits, std::span<const double> tangent);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> softmax_jvp(std::span<const double> logits, std::span<const double> tangent);

/// v_i -> v_i^(1/T) / sum_j v_j^(1/T). Zeros stay zero and the argmax set is
/// kept. Throws for T <= 0 or an all-zero input.
std::vector<double> temperature_scale(std::span<const double> values, double temperature);
ProbabilityMap temperature_scale(const ProbabilityMap& map, double temperature);

/// Probability mass of every cell whose value is at least the value of the
/// given cell (ties included): the smallest top-mass level containing it.
double coverage_of_point(std::span<const double> values, std::size_t cell);
double coverage_of_point(const ProbabilityMap& map, GridCell cell);

} // namespace probpose
