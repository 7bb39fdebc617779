#pragma once

#include <cstdint>

#include "safetune/types.hpp"

namespace safetune::gp {

/// Hyperparameters of the Matern 3/2 kernel with one length-scale per input
/// dimension, plus the observation noise variance.
struct KernelParams {
    double prior_variance = 1.0;
    Eigen::VectorXd length_scales;
    double noise_variance = 0.0;

    /// Throws std::invalid_argument if any field is out of range.
    void validate() const;
    Eigen::Index dim() const { return length_scales.size(); }
};

/// Length-scale weighted Euclidean distance between two parameter vectors.
double scaled_distance(const Eigen::Ref<const Point>& a, const Eigen::Ref<const Point>& b,
                       const KernelParams& params);

/// Matern 3/2 covariance as a function of the scaled distance.
double matern32_at(double r, double prior_variance);

double matern32(const Eigen::Ref<const Point>& a, const Eigen::Ref<const Point>& b,
                const KernelParams& params);

/// Covariance matrix with entry (i, j) = k(rows.row(i), cols.row(j)).
Eigen::MatrixXd cross_covariance(const Points& rows, const Points& cols, const KernelParams& params);

/// Gram matrix of a nonempty point list.
Eigen::MatrixXd gram(const Points& points, const KernelParams& params);

/// Draws one function from the zero-mean GP prior, evaluated on the grid.
/// A jitter of 1e-10 * prior_variance is added to the diagonal before factorization.
/// Deterministic for a fixed seed.
Eigen::VectorXd sample_prior(const Points& grid, const KernelParams& params, std::uint64_t seed);

}  // namespace safetune::gp
