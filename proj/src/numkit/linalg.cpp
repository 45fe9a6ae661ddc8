#include "scdm/numkit/linalg.hpp"

#include "scdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace scdm::numkit {
namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kPivotFloor = 1e-12;

void require_symmetric(const ConstMatrixRef& a, const char* who) {
  if (a.rows() != a.cols()) throw DimensionMismatch(std::string(who) + ": matrix not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (asymmetry(a) > kSymmetryTol * scale) {
    throw DimensionMismatch(std::string(who) + ": matrix not symmetric");
  }
}

}  // namespace

Matrix cholesky(const ConstMatrixRef& a) {
  require_symmetric(a, "cholesky");
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > kPivotFloor)) {
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) + " = " + std::to_string(diag));
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Matrix cholesky_solve(const ConstMatrixRef& lower, const ConstMatrixRef& b) {
  const Eigen::Index n = lower.rows();
  if (b.rows() != n) throw DimensionMismatch("cholesky_solve: rhs rows");
  Matrix x = b;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    // forward: L y = b
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = x(i, c);
      for (Eigen::Index k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
    // backward: Lᵀ x = y
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double s = x(i, c);
      for (Eigen::Index k = i + 1; k < n; ++k) s -= lower(k, i) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
  }
  return x;
}

double cholesky_logdet(const ConstMatrixRef& lower) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

SymEig sym_eig(const ConstMatrixRef& input) {
  require_symmetric(input, "sym_eig");
  const Eigen::Index n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);

  const double total = a.norm();
  const std::size_t max_sweeps = 100 * static_cast<std::size_t>(std::max<Eigen::Index>(n, 1));
  bool converged = n <= 1 || total == 0.0;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * total) {
      converged = true;
      break;
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation zeroing a(p,q): tan(2θ) = 2a_pq / (a_qq - a_pp).
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) throw NoConvergence("sym_eig: Jacobi sweep cap reached");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values(j) = a(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]);
    out.vectors.col(j) = v.col(order[static_cast<std::size_t>(j)]);
  }
  return out;
}

Matrix sqrtm_psd(const ConstMatrixRef& a) {
  const SymEig eig = sym_eig(a);
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);
  const double scale = eig.values.cwiseAbs().maxCoeff();
  Vector root(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = eig.values(i);
    if (lambda < -1e-8 * scale) {
      throw NotPSD("sqrtm_psd: eigenvalue " + std::to_string(lambda));
    }
    root(i) = lambda > 0.0 ? std::sqrt(lambda) : 0.0;
  }
  Matrix out = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace scdm::numkit
