#pragma once

#include <Eigen/Dense>

namespace dbmt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major matrix; one sample (or one state) per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace dbmt
