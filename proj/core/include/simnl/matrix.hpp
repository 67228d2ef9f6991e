#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace simnl {

/// Row-major dense matrix; one feature vector per row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

using Index = Eigen::Index;

}  // namespace simnl
