#pragma once

#include "scdm/numkit/matrix.hpp"

namespace scdm::numkit {

// Lower-triangular L with L·Lᵀ = a. Throws NotPositiveDefinite when a pivot
// falls to 1e-12 or below, DimensionMismatch for non-square/asymmetric input.
Matrix cholesky(const ConstMatrixRef& a);

// Solves (L·Lᵀ) x = b for each column of b.
Matrix cholesky_solve(const ConstMatrixRef& lower, const ConstMatrixRef& b);

// log det(L·Lᵀ).
double cholesky_logdet(const ConstMatrixRef& lower);

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // column j pairs with values(j); orthonormal
};

// Cyclic Jacobi eigensolver for symmetric matrices. Sweeps until the
// off-diagonal mass is negligible; throws NoConvergence after 100·n sweeps.
SymEig sym_eig(const ConstMatrixRef& a);

// Principal square root of a symmetric PSD matrix. Eigenvalues in
// [-1e-8·max|λ|, 0) are clamped to zero; anything more negative is NotPSD.
Matrix sqrtm_psd(const ConstMatrixRef& a);

}  // namespace scdm::numkit
