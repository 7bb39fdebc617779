#pragma once

#include "safetune/kernel.hpp"

namespace safetune::gp {

/// Training data: one input per row of `inputs`, matching entry in `targets`.
struct Dataset {
    Points inputs;
    Eigen::VectorXd targets;

    Eigen::Index size() const { return targets.size(); }
    /// Throws std::invalid_argument on length or dimension mismatch.
    void validate(Eigen::Index dim) const;
};

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/**
 * Exact zero-mean GP posterior with a Matern 3/2 kernel.
 *
 * Holds the lower Cholesky factor L of (K + diag(noise) + jitter * I) and the
 * weight vector alpha = (L L^T)^{-1} y. Objects are immutable: add_observation
 * and condition_virtual return new posteriors, so a posterior may be shared by
 * concurrent readers.
 *
 * Each training row carries its own noise variance. Rows added by fit and
 * add_observation use params.noise_variance; the row added by
 * condition_virtual is noiseless.
 */
class GpPosterior {
public:
    /// Prior-only posterior (no data).
    explicit GpPosterior(KernelParams params);

    /// Factorizes K + sigma_noise^2 I for the given data. Near-singular systems
    /// are retried with diagonal jitter 1e-10 * prior_variance, growing by 10x
    /// up to 1e-4 * prior_variance. Exact duplicate inputs with zero noise are
    /// rejected with NumericalError.
    static GpPosterior fit(const Dataset& data, const KernelParams& params);

    Prediction predict(const Points& queries) const;
    /// Mean and variance at a single query.
    std::pair<double, double> predict_point(const Eigen::Ref<const Point>& query) const;

    /// Posterior after one more noisy observation (rank-1 extension of the factor).
    GpPosterior add_observation(const Eigen::Ref<const Point>& input, double target) const;

    /// Posterior after one more noiseless observation; `*this` is unchanged.
    GpPosterior condition_virtual(const Eigen::Ref<const Point>& input, double value) const;

    const KernelParams& params() const { return params_; }
    const Dataset& data() const { return data_; }
    const Eigen::VectorXd& row_noise() const { return row_noise_; }
    const Eigen::MatrixXd& cholesky() const { return chol_; }
    const Eigen::VectorXd& alpha() const { return alpha_; }
    /// Diagonal jitter currently added to every row (0 unless escalation was needed).
    double jitter() const { return jitter_; }
    Eigen::Index size() const { return data_.size(); }

private:
    GpPosterior(KernelParams params, Dataset data, Eigen::VectorXd row_noise);

    void factorize_full();
    GpPosterior extended(const Eigen::Ref<const Point>& input, double target, double noise) const;
    void update_alpha();

    KernelParams params_;
    Dataset data_;
    Eigen::VectorXd row_noise_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

}  // namespace safetune::gp
