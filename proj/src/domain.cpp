#include "safetune/domain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace safetune {

namespace {

double axis_value(const Axis& axis, std::size_t i) {
    if (axis.count == 1) {
        return axis.lower;
    }
    if (i + 1 == axis.count) {
        return axis.upper;
    }
    const double t = static_cast<double>(i) / static_cast<double>(axis.count - 1);
    return axis.lower + t * (axis.upper - axis.lower);
}

}  // namespace

Domain::Domain(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) {
        throw std::invalid_argument("domain: at least one axis is required");
    }
    std::size_t total = 1;
    for (const Axis& axis : axes_) {
        if (axis.count == 0) {
            throw std::invalid_argument("domain: axis point count must be positive");
        }
        if (!std::isfinite(axis.lower) || !std::isfinite(axis.upper) ||
            (axis.count > 1 && !(axis.lower < axis.upper))) {
            throw std::invalid_argument("domain: axis bounds must be finite with lower < upper");
        }
        total *= axis.count;
    }

    const auto d = static_cast<Eigen::Index>(axes_.size());
    grid_.resize(static_cast<Eigen::Index>(total), d);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rest = flat;
        for (Eigen::Index a = d - 1; a >= 0; --a) {
            const Axis& axis = axes_[static_cast<std::size_t>(a)];
            grid_(static_cast<Eigen::Index>(flat), a) = axis_value(axis, rest % axis.count);
            rest /= axis.count;
        }
    }
}

std::size_t Domain::flat_index(const std::vector<std::size_t>& axis_indices) const {
    if (axis_indices.size() != axes_.size()) {
        throw std::invalid_argument("domain: expected " + std::to_string(axes_.size()) + " axis indices");
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        if (axis_indices[a] >= axes_[a].count) {
            throw std::out_of_range("domain: axis index out of range");
        }
        flat = flat * axes_[a].count + axis_indices[a];
    }
    return flat;
}

std::size_t Domain::nearest_index(const Eigen::Ref<const Point>& p) const {
    if (static_cast<std::size_t>(p.size()) != axes_.size()) {
        throw std::invalid_argument("domain: point dimension does not match");
    }
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        const Axis& axis = axes_[a];
        if (axis.count == 1) {
            idx[a] = 0;
            continue;
        }
        const double t = (p[static_cast<Eigen::Index>(a)] - axis.lower) / (axis.upper - axis.lower) *
                         static_cast<double>(axis.count - 1);
        const double clamped = std::clamp(std::round(t), 0.0, static_cast<double>(axis.count - 1));
        idx[a] = static_cast<std::size_t>(clamped);
    }
    return flat_index(idx);
}

Eigen::VectorXd Domain::spacing() const {
    Eigen::VectorXd h(static_cast<Eigen::Index>(axes_.size()));
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        const Axis& axis = axes_[a];
        h[static_cast<Eigen::Index>(a)] =
            axis.count > 1 ? (axis.upper - axis.lower) / static_cast<double>(axis.count - 1) : 0.0;
    }
    return h;
}

}  // namespace safetune
