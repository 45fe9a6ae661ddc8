#include "scdm/evalmetrics.hpp"

#include "scdm/errors.hpp"
#include "scdm/io.hpp"
#include "scdm/numkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace scdm::eval {

GaussStats fit_gaussian(const ConstMatrixRef& x) {
  if (x.rows() < 2) throw TooFewSamples("fit_gaussian: need at least 2 rows");
  GaussStats s;
  s.n = static_cast<std::size_t>(x.rows());
  s.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

double frechet_distance(const GaussStats& a, const GaussStats& b) {
  if (a.mean.size() != b.mean.size()) throw DimensionMismatch("frechet_distance: dims differ");
  const Eigen::Index d = a.mean.size();
  const Matrix reg = 1e-8 * Matrix::Identity(d, d);
  const Matrix ca = a.cov + reg;
  const Matrix cb = b.cov + reg;
  const Matrix root_a = numkit::sqrtm_psd(ca);
  Matrix inner = root_a * cb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = numkit::sqrtm_psd(inner).trace();
  const double value = (a.mean - b.mean).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

namespace {

// Σ_{i,j} k(a_i, b_j), optionally skipping i = j.
double kernel_sum(const ConstMatrixRef& a, const ConstMatrixRef& b, double bandwidth, bool skip_diagonal) {
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  double total = 0.0;
  constexpr Eigen::Index kBlock = 1024;
  for (Eigen::Index i0 = 0; i0 < a.rows(); i0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, a.rows() - i0);
    const Matrix g = a.middleRows(i0, rows) * b.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (skip_diagonal && i0 + i == j) continue;
        const double d2 = std::max(0.0, na(i0 + i) + nb(j) - 2.0 * g(i, j));
        total += std::exp(-d2 * inv);
      }
    }
  }
  return total;
}

}  // namespace

double mmd_rbf(const ConstMatrixRef& x, const ConstMatrixRef& y, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error("mmd_rbf: bandwidth must be > 0");
  if (x.rows() < 2 || y.rows() < 2) throw TooFewSamples("mmd_rbf: need at least 2 rows per side");
  if (x.cols() != y.cols()) throw DimensionMismatch("mmd_rbf: dims differ");
  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const double kxx = kernel_sum(x, x, bandwidth, true) / (m * (m - 1.0));
  const double kyy = kernel_sum(y, y, bandwidth, true) / (n * (n - 1.0));
  const double kxy = kernel_sum(x, y, bandwidth, false) / (m * n);
  return kxx + kyy - 2.0 * kxy;
}

double gauss_kl(const Vector& mean_a, const ConstMatrixRef& cov_a, const Vector& mean_b,
                const ConstMatrixRef& cov_b) {
  const Eigen::Index d = mean_a.size();
  if (mean_b.size() != d || cov_a.rows() != d || cov_b.rows() != d) throw DimensionMismatch("gauss_kl: dims");
  const Matrix lb = numkit::cholesky(cov_b);
  const Matrix la = numkit::cholesky(cov_a);
  const Matrix solved = numkit::cholesky_solve(lb, cov_a);
  const Vector diff = mean_b - mean_a;
  const Vector sd = numkit::cholesky_solve(lb, diff);
  const double value = 0.5 * (solved.trace() + diff.dot(sd) - static_cast<double>(d) +
                              numkit::cholesky_logdet(lb) - numkit::cholesky_logdet(la));
  return std::max(value, 0.0);
}

Vector gauss_logpdf(const ConstMatrixRef& x, const Vector& mean, const ConstMatrixRef& cov) {
  const Eigen::Index d = mean.size();
  if (x.cols() != d) throw DimensionMismatch("gauss_logpdf: dims");
  const Matrix l = numkit::cholesky(cov);
  const double norm = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + numkit::cholesky_logdet(l));
  // Solve L z = (x − μ)ᵀ for all rows at once.
  Matrix centered = (x.rowwise() - mean.transpose()).transpose();
  l.triangularView<Eigen::Lower>().solveInPlace(centered);
  return (norm - 0.5 * centered.colwise().squaredNorm().array()).matrix().transpose();
}

DivergenceReport kl_mc(const BatchSampler& q_sampler, const BatchLogDensity& q_logdensity,
                       const BatchLogDensity& p_logdensity, std::size_t n_mc, numkit::Rng& rng) {
  if (n_mc < 1000) throw Error("kl_mc: n_mc must be ≥ 1000");
  constexpr std::size_t kChunk = 16384;
  double sum = 0.0;
  double sum_sq = 0.0;
  // Welford-free shifted accumulation: shift by the first chunk mean.
  double shift = 0.0;
  bool shifted = false;
  for (std::size_t done = 0; done < n_mc;) {
    const std::size_t m = std::min(kChunk, n_mc - done);
    const Matrix x = q_sampler(rng, m);
    const Vector lq = q_logdensity(x);
    const Vector lp = p_logdensity(x);
    const Vector diff = lq - lp;
    if (!diff.allFinite()) throw NonFiniteLogDensity("kl_mc: non-finite log-density ratio");
    if (!shifted) {
      shift = diff.mean();
      shifted = true;
    }
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
      const double v = diff(i) - shift;
      sum += v;
      sum_sq += v * v;
    }
    done += m;
  }
  const double n = static_cast<double>(n_mc);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {shift + mean, std::sqrt(var / n), n_mc, "monte_carlo"};
}

void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  const bool fresh = !std::filesystem::exists(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << "run_id,step,metric,value,stderr\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.step << ',' << r.metric << ',' << io::format_double(r.value) << ','
        << io::format_double(r.std_err) << '\n';
  }
}

}  // namespace scdm::eval
