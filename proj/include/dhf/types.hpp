#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dhf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace dhf
