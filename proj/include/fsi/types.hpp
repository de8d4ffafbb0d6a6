#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fsi {

/// Row-major so that each sample (feature row) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// Row-stochastic query-by-class matrix, P(i, k) = p(k | x_i).
using Posterior = Matrix;

}  // namespace fsi
