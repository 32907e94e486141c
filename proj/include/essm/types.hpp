#pragma once

#include <Eigen/Dense>

#include <complex>

namespace essm {

using Complex = std::complex<double>;

// Parameter matrices (B, C, W, eigenvector bases, ...) use Eigen's default
// column-major layout. Sequence-indexed data (one row per time step) is kept
// row-major so a time step is contiguous and batched transforms can sweep all
// channels of a step at once.
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

using SeqMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexSeqMatrix =
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

}  // namespace essm
