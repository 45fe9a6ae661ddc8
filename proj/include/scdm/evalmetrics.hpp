#pragma once

#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace scdm::eval {

using numkit::ConstMatrixRef;
using numkit::Matrix;
using numkit::Vector;

struct GaussStats {
  Vector mean;
  Matrix cov;  // unbiased (N − 1)
  std::size_t n = 0;
};

// Throws TooFewSamples for N < 2.
GaussStats fit_gaussian(const ConstMatrixRef& x);

// ‖μa − μb‖² + tr(Σa + Σb − 2(Σa Σb)^{1/2}), with 1e-8·I added to both
// covariances. The cross term is evaluated as tr((√Σa Σb √Σa)^{1/2}).
double frechet_distance(const GaussStats& a, const GaussStats& b);

// Unbiased MMD² with k(x, y) = exp(−‖x − y‖² / (2h²)). Throws TooFewSamples
// when either side has fewer than two rows.
double mmd_rbf(const ConstMatrixRef& x, const ConstMatrixRef& y, double bandwidth);

// KL(N(μa, Σa) ‖ N(μb, Σb)) in closed form. Throws NotPositiveDefinite.
double gauss_kl(const Vector& mean_a, const ConstMatrixRef& cov_a, const Vector& mean_b,
                const ConstMatrixRef& cov_b);

// Row-wise log N(x; μ, Σ).
Vector gauss_logpdf(const ConstMatrixRef& x, const Vector& mean, const ConstMatrixRef& cov);

struct DivergenceReport {
  double value = 0.0;
  double std_err = 0.0;  // 0 for closed-form values
  std::size_t n_mc = 0;
  std::string method;
};

using BatchSampler = std::function<Matrix(numkit::Rng&, std::size_t n)>;
using BatchLogDensity = std::function<Vector(const ConstMatrixRef&)>;

// Monte-Carlo KL(q ‖ p) = E_q[log q − log p] from n_mc draws of q, processed
// in chunks. Requires n_mc ≥ 1000; NonFiniteLogDensity on NaN/Inf terms.
DivergenceReport kl_mc(const BatchSampler& q_sampler, const BatchLogDensity& q_logdensity,
                       const BatchLogDensity& p_logdensity, std::size_t n_mc, numkit::Rng& rng);

struct MetricRow {
  std::string run_id;
  std::size_t step = 0;
  std::string metric;
  double value = 0.0;
  double std_err = 0.0;
};

// Appends to `run_id,step,metric,value,stderr`, writing the header when the
// file is new.
void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

}  // namespace scdm::eval
