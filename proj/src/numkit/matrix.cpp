#include "scdm/numkit/matrix.hpp"

#include "scdm/errors.hpp"

#include <cmath>

namespace scdm::numkit {

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix out(n, m);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != m) {
      throw DimensionMismatch("from_rows: ragged initializer");
    }
    Eigen::Index j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

bool all_finite(const ConstMatrixRef& a) { return a.allFinite(); }

double asymmetry(const ConstMatrixRef& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("asymmetry: matrix not square");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    }
  }
  return worst;
}

double relative_frobenius_error(const ConstMatrixRef& approx, const ConstMatrixRef& exact) {
  const double denom = exact.norm();
  const double diff = (approx - exact).norm();
  return denom > 0.0 ? diff / denom : diff;
}

}  // namespace scdm::numkit
