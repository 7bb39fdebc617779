#include "safetune/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "safetune/errors.hpp"
#include "safetune/rng.hpp"

namespace safetune::gp {

namespace {

const double kSqrt3 = std::sqrt(3.0);

void check_dims(Eigen::Index a, Eigen::Index b, const KernelParams& params) {
    if (a != params.dim() || b != params.dim()) {
        throw std::invalid_argument("kernel: dimension mismatch (got " + std::to_string(a) + " and " +
                                    std::to_string(b) + ", length_scales has " +
                                    std::to_string(params.dim()) + ")");
    }
}

}  // namespace

void KernelParams::validate() const {
    if (!(prior_variance > 0.0) || !std::isfinite(prior_variance)) {
        throw std::invalid_argument("kernel: prior_variance must be positive and finite");
    }
    if (length_scales.size() == 0) {
        throw std::invalid_argument("kernel: length_scales must not be empty");
    }
    for (Eigen::Index d = 0; d < length_scales.size(); ++d) {
        if (!(length_scales[d] > 0.0) || !std::isfinite(length_scales[d])) {
            throw std::invalid_argument("kernel: length_scales must be positive and finite");
        }
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw std::invalid_argument("kernel: noise_variance must be nonnegative and finite");
    }
}

double scaled_distance(const Eigen::Ref<const Point>& a, const Eigen::Ref<const Point>& b,
                       const KernelParams& params) {
    check_dims(a.size(), b.size(), params);
    return ((a - b).array() / params.length_scales.array()).matrix().norm();
}

double matern32_at(double r, double prior_variance) {
    const double s = kSqrt3 * r;
    return prior_variance * (1.0 + s) * std::exp(-s);
}

double matern32(const Eigen::Ref<const Point>& a, const Eigen::Ref<const Point>& b,
                const KernelParams& params) {
    return matern32_at(scaled_distance(a, b, params), params.prior_variance);
}

Eigen::MatrixXd cross_covariance(const Points& rows, const Points& cols, const KernelParams& params) {
    check_dims(rows.cols(), cols.cols(), params);
    const Eigen::RowVectorXd inv_l = params.length_scales.cwiseInverse().transpose();
    const Points a = rows.array().rowwise() * inv_l.array();
    const Points b = cols.array().rowwise() * inv_l.array();

    Eigen::MatrixXd out(rows.rows(), cols.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double r = (a.row(i) - b.row(j)).norm();
            out(i, j) = matern32_at(r, params.prior_variance);
        }
    }
    return out;
}

Eigen::MatrixXd gram(const Points& points, const KernelParams& params) {
    if (points.rows() == 0) {
        throw std::invalid_argument("gram: empty point list");
    }
    return cross_covariance(points, points, params);
}

Eigen::VectorXd sample_prior(const Points& grid, const KernelParams& params, std::uint64_t seed) {
    params.validate();
    Eigen::MatrixXd k = gram(grid, params);
    k.diagonal().array() += 1e-10 * params.prior_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("sample_prior: covariance of " + std::to_string(grid.rows()) +
                             " grid points is not positive definite after 1e-10 jitter");
    }
    Engine engine = make_engine(seed, Stream::kernel_sample);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(grid.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = normal(engine);
    }
    return llt.matrixL() * z;
}

}  // namespace safetune::gp
