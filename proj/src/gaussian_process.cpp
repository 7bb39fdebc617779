#include "safetune/gaussian_process.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "safetune/errors.hpp"

namespace safetune::gp {

namespace {

constexpr double kFirstJitter = 1e-10;
constexpr double kLastJitter = 1e-4;
// Relative size of the new Schur complement below which a rank-1 extension is
// treated as singular and the whole factor is recomputed with jitter.
constexpr double kExtensionPivotFloor = 1e-12;

bool same_point(const Eigen::Ref<const Point>& a, const Eigen::Ref<const Point>& b) {
    return (a.array() == b.array()).all();
}

}  // namespace

void Dataset::validate(Eigen::Index dim) const {
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("dataset: " + std::to_string(inputs.rows()) + " inputs but " +
                                    std::to_string(targets.size()) + " targets");
    }
    if (inputs.rows() > 0 && inputs.cols() != dim) {
        throw std::invalid_argument("dataset: input dimension " + std::to_string(inputs.cols()) +
                                    " does not match kernel dimension " + std::to_string(dim));
    }
}

GpPosterior::GpPosterior(KernelParams params) : params_(std::move(params)) {
    params_.validate();
    data_.inputs.resize(0, params_.dim());
    data_.targets.resize(0);
    row_noise_.resize(0);
    chol_.resize(0, 0);
    alpha_.resize(0);
}

GpPosterior::GpPosterior(KernelParams params, Dataset data, Eigen::VectorXd row_noise)
    : params_(std::move(params)), data_(std::move(data)), row_noise_(std::move(row_noise)) {}

GpPosterior GpPosterior::fit(const Dataset& data, const KernelParams& params) {
    params.validate();
    data.validate(params.dim());

    Dataset copy = data;
    if (copy.size() == 0) {
        copy.inputs.resize(0, params.dim());
    }
    const Eigen::Index n = copy.size();
    if (params.noise_variance == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                if (same_point(copy.inputs.row(i).transpose(), copy.inputs.row(j).transpose())) {
                    throw NumericalError("fit: inputs " + std::to_string(i) + " and " + std::to_string(j) +
                                         " are identical with zero noise variance; the covariance "
                                         "system is singular");
                }
            }
        }
    }
    GpPosterior gp(params, std::move(copy), Eigen::VectorXd::Constant(n, params.noise_variance));
    gp.factorize_full();
    return gp;
}

void GpPosterior::factorize_full() {
    const Eigen::Index n = data_.size();
    if (n == 0) {
        chol_.resize(0, 0);
        alpha_.resize(0);
        return;
    }
    Eigen::MatrixXd system = gram(data_.inputs, params_);
    system.diagonal() += row_noise_;

    double jitter = jitter_;
    for (;;) {
        Eigen::MatrixXd attempt = system;
        attempt.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(attempt);
        if (llt.info() == Eigen::Success) {
            chol_ = llt.matrixL();
            jitter_ = jitter;
            update_alpha();
            return;
        }
        const double next = jitter == 0.0 ? kFirstJitter * params_.prior_variance : jitter * 10.0;
        if (next > kLastJitter * params_.prior_variance * (1.0 + 1e-9)) {
            std::ostringstream msg;
            msg << "GP covariance system of size " << n << " is not positive definite (last jitter "
                << jitter << ", prior variance " << params_.prior_variance << ", min diagonal "
                << system.diagonal().minCoeff() << ")";
            throw NumericalError(msg.str());
        }
        jitter = next;
    }
}

void GpPosterior::update_alpha() {
    const Eigen::VectorXd half = chol_.triangularView<Eigen::Lower>().solve(data_.targets);
    alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(half);
}

Prediction GpPosterior::predict(const Points& queries) const {
    if (queries.cols() != params_.dim()) {
        throw std::invalid_argument("predict: query dimension " + std::to_string(queries.cols()) +
                                    " does not match " + std::to_string(params_.dim()));
    }
    const Eigen::Index m = queries.rows();
    Prediction out;
    if (data_.size() == 0) {
        out.mean = Eigen::VectorXd::Zero(m);
        out.variance = Eigen::VectorXd::Constant(m, params_.prior_variance);
        return out;
    }
    const Eigen::MatrixXd cross = cross_covariance(data_.inputs, queries, params_);
    out.mean = cross.transpose() * alpha_;
    const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(cross);
    out.variance = (params_.prior_variance - v.colwise().squaredNorm().array())
                       .max(0.0)
                       .min(params_.prior_variance)
                       .matrix()
                       .transpose();
    return out;
}

std::pair<double, double> GpPosterior::predict_point(const Eigen::Ref<const Point>& query) const {
    Points q(1, query.size());
    q.row(0) = query.transpose();
    const Prediction p = predict(q);
    return {p.mean[0], p.variance[0]};
}

GpPosterior GpPosterior::add_observation(const Eigen::Ref<const Point>& input, double target) const {
    return extended(input, target, params_.noise_variance);
}

GpPosterior GpPosterior::condition_virtual(const Eigen::Ref<const Point>& input, double value) const {
    return extended(input, value, 0.0);
}

GpPosterior GpPosterior::extended(const Eigen::Ref<const Point>& input, double target, double noise) const {
    if (input.size() != params_.dim()) {
        throw std::invalid_argument("GP update: input dimension " + std::to_string(input.size()) +
                                    " does not match " + std::to_string(params_.dim()));
    }
    if (!std::isfinite(target)) {
        throw std::invalid_argument("GP update: target is not finite");
    }
    const Eigen::Index n = data_.size();
    if (noise == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (row_noise_[i] == 0.0 && same_point(data_.inputs.row(i).transpose(), input)) {
                throw NumericalError("GP update: noiseless observation duplicates noiseless row " +
                                     std::to_string(i) + "; the covariance system is singular");
            }
        }
    }

    Dataset data;
    data.inputs.resize(n + 1, params_.dim());
    data.inputs.topRows(n) = data_.inputs;
    data.inputs.row(n) = input.transpose();
    data.targets.resize(n + 1);
    data.targets.head(n) = data_.targets;
    data.targets[n] = target;
    Eigen::VectorXd row_noise(n + 1);
    row_noise.head(n) = row_noise_;
    row_noise[n] = noise;

    GpPosterior out(params_, std::move(data), std::move(row_noise));
    out.jitter_ = jitter_;

    const double diag = params_.prior_variance + noise + jitter_;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    double pivot2 = diag;
    if (n > 0) {
        Points single(1, input.size());
        single.row(0) = input.transpose();
        const Eigen::VectorXd k = cross_covariance(data_.inputs, single, params_).col(0);
        row = chol_.triangularView<Eigen::Lower>().solve(k);
        pivot2 = diag - row.squaredNorm();
    }

    if (!(pivot2 > kExtensionPivotFloor * diag)) {
        out.jitter_ = std::max(jitter_, kFirstJitter * params_.prior_variance);
        out.factorize_full();
        return out;
    }

    out.chol_ = Eigen::MatrixXd::Zero(n + 1, n + 1);
    out.chol_.topLeftCorner(n, n) = chol_;
    out.chol_.block(n, 0, 1, n) = row.transpose();
    out.chol_(n, n) = std::sqrt(pivot2);
    out.update_alpha();
    return out;
}

}  // namespace safetune::gp
