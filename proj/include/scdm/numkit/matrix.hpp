#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>

namespace scdm::numkit {

// Dense row-major double matrix. Eigen provides storage and BLAS-like
// products; the factorizations in linalg.hpp are implemented directly.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using MatrixRef = Eigen::Ref<Matrix>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

bool all_finite(const ConstMatrixRef& a);

// max |a(i,j) - a(j,i)|; requires a square matrix.
double asymmetry(const ConstMatrixRef& a);

double relative_frobenius_error(const ConstMatrixRef& approx, const ConstMatrixRef& exact);

}  // namespace scdm::numkit
