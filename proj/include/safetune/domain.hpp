#pragma once

#include <cstddef>
#include <vector>

#include "safetune/types.hpp"

namespace safetune {

/// One axis of a uniform grid: `count` points from `lower` to `upper` inclusive.
struct Axis {
    double lower = 0.0;
    double upper = 1.0;
    std::size_t count = 1;
};

/**
 * Finite uniform grid over a box.
 *
 * Points are stored row-major over the axes: the last axis varies fastest, so
 * for two axes the point with per-axis indices (i, j) has grid index
 * i * axes[1].count + j.
 */
class Domain {
public:
    explicit Domain(std::vector<Axis> axes);

    const Points& grid() const { return grid_; }
    const std::vector<Axis>& axes() const { return axes_; }
    std::size_t size() const { return static_cast<std::size_t>(grid_.rows()); }
    std::size_t dim() const { return axes_.size(); }

    Point point(std::size_t index) const { return grid_.row(static_cast<Eigen::Index>(index)).transpose(); }

    /// Index of the grid point closest to `p` (per-axis rounding).
    std::size_t nearest_index(const Eigen::Ref<const Point>& p) const;
    /// Grid index of the given per-axis indices.
    std::size_t flat_index(const std::vector<std::size_t>& axis_indices) const;
    /// Spacing between neighbouring points along each axis (0 for single-point axes).
    Eigen::VectorXd spacing() const;

private:
    std::vector<Axis> axes_;
    Points grid_;
};

}  // namespace safetune
