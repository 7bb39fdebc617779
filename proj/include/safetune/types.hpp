#pragma once

#include <Eigen/Dense>

namespace safetune {

/// A single parameter vector.
using Point = Eigen::VectorXd;

/// A list of parameter vectors, one per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Boolean membership mask over grid indices.
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

}  // namespace safetune
