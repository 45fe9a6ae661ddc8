#include "scdm/errors.hpp"
#include "scdm/evalmetrics.hpp"
#include "scdm/io.hpp"
#include "scdm/numkit/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace scdm;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

namespace fs = std::filesystem;

namespace {

Matrix random_spd(Rng& rng, Eigen::Index d) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

eval::GaussStats stats(const Vector& mean, const Matrix& cov) { return {mean, cov, 100}; }

// tr((ΣaΣb)^{1/2}) from the eigenvalues of the non-symmetric product.
double trace_sqrt_product(const Matrix& a, const Matrix& b) {
  const Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(a * b));
  double t = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) t += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return t;
}

double brute_mmd(const Matrix& x, const Matrix& y, double h) {
  auto k = [h](const auto& a, const auto& b) { return std::exp(-(a - b).squaredNorm() / (2 * h * h)); };
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  double kxx = 0, kyy = 0, kxy = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (i != j) kxx += k(x.row(i), x.row(j));
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      if (i != j) kyy += k(y.row(i), y.row(j));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) kxy += k(x.row(i), y.row(j));
  return kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2 * kxy / (n * m);
}

eval::BatchSampler gauss_sampler(const Vector& mean, const Matrix& cov) {
  const Matrix chol = numkit::cholesky(cov);
  return [mean, chol](Rng& rng, std::size_t n) { return numkit::gauss_sample(rng, mean, chol, n); };
}

eval::BatchLogDensity gauss_density(const Vector& mean, const Matrix& cov) {
  return [mean, cov](const numkit::ConstMatrixRef& x) { return eval::gauss_logpdf(x, mean, cov); };
}

}  // namespace

TEST(FitGaussian, Examples) {
  const eval::GaussStats s = eval::fit_gaussian(numkit::from_rows({{0, 0}, {2, 0}}));
  EXPECT_EQ(s.n, 2u);
  EXPECT_DOUBLE_EQ(s.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(s.mean(1), 0.0);
  EXPECT_DOUBLE_EQ(s.cov(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.cov(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s.cov(1, 1), 0.0);

  const eval::GaussStats same = eval::fit_gaussian(Matrix::Constant(5, 3, 1.5));
  EXPECT_TRUE(same.cov.isZero(0.0));
  EXPECT_THROW(eval::fit_gaussian(Matrix::Zero(1, 2)), TooFewSamples);
}

TEST(FitGaussian, RecoversParameters) {
  Rng rng(1);
  const Vector mean{{1.0, -2.0, 0.5}};
  const Matrix cov = random_spd(rng, 3);
  const std::size_t n = 100000;
  const eval::GaussStats s = eval::fit_gaussian(numkit::gauss_sample(rng, mean, numkit::cholesky(cov), n));
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.mean(i), mean(i), 3.0 * std::sqrt(cov(i, i) / n));
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double sd = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      EXPECT_NEAR(s.cov(i, j), cov(i, j), 4.0 * sd);
    }
  }
  EXPECT_LE((s.cov - s.cov.transpose()).norm(), 1e-10);
}

TEST(FrechetDistance, Examples) {
  const Matrix i2 = Matrix::Identity(2, 2);
  EXPECT_NEAR(eval::frechet_distance(stats(Vector::Zero(2), i2), stats(Vector::Zero(2), i2)), 0.0, 1e-9);
  EXPECT_NEAR(eval::frechet_distance(stats(Vector::Zero(2), i2), stats(Vector{{1.0, 0.0}}, i2)), 1.0, 1e-9);
  const Matrix four = Matrix::Constant(1, 1, 4.0);
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  EXPECT_NEAR(eval::frechet_distance(stats(Vector::Zero(1), four), stats(Vector::Zero(1), one)), 1.0, 1e-6);
}

TEST(FrechetDistance, MatchesEigenvalueOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_index(5));
    Vector ma(d), mb(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      ma(i) = rng.normal();
      mb(i) = rng.normal();
    }
    const Matrix a = random_spd(rng, d);
    const Matrix b = random_spd(rng, d);
    const double expected = (ma - mb).squaredNorm() + a.trace() + b.trace() - 2.0 * trace_sqrt_product(a, b);
    const double fd_ab = eval::frechet_distance(stats(ma, a), stats(mb, b));
    const double fd_ba = eval::frechet_distance(stats(mb, b), stats(ma, a));
    EXPECT_NEAR(fd_ab, expected, 1e-6 * std::max(1.0, expected));
    EXPECT_NEAR(fd_ab, fd_ba, 1e-9 * std::max(1.0, fd_ab));
    EXPECT_GE(fd_ab, 0.0);
  }
}

TEST(Mmd, SameRowsNonPositive) {
  Rng rng(3);
  const Matrix x = numkit::gauss_sample(rng, Vector::Zero(2), Matrix::Identity(2, 2), 200);
  EXPECT_LE(eval::mmd_rbf(x, x, 1.0), 1e-9);
  EXPECT_THROW(eval::mmd_rbf(x.topRows(1), x, 1.0), TooFewSamples);
}

TEST(Mmd, MatchesBruteForce) {
  Rng rng(4);
  const Matrix x = numkit::gauss_sample(rng, Vector::Zero(2), std::sqrt(0.1) * Matrix::Identity(2, 2), 60);
  const Matrix y = numkit::gauss_sample(rng, Vector{{50.0, 0.0}}, std::sqrt(0.1) * Matrix::Identity(2, 2), 45);
  const double v = eval::mmd_rbf(x, y, 1.0);
  EXPECT_NEAR(v, brute_mmd(x, y, 1.0), 1e-12);
  EXPECT_NEAR(eval::mmd_rbf(y, x, 1.0), v, 1e-12);
  const Matrix z = numkit::gauss_sample(rng, Vector::Zero(2), Matrix::Identity(2, 2), 30);
  EXPECT_NEAR(eval::mmd_rbf(x, z, 0.7), brute_mmd(x, z, 0.7), 1e-12);
}

TEST(Mmd, UnbiasedUnderNull) {
  Rng rng(5);
  std::vector<double> v;
  for (int r = 0; r < 100; ++r) {
    const Matrix x = numkit::gauss_sample(rng, Vector::Zero(2), Matrix::Identity(2, 2), 50);
    const Matrix y = numkit::gauss_sample(rng, Vector::Zero(2), Matrix::Identity(2, 2), 50);
    v.push_back(eval::mmd_rbf(x, y, 1.0));
  }
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= 100.0;
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  const double se = std::sqrt(var / 99.0 / 100.0);
  EXPECT_NEAR(mean, 0.0, 3.0 * se);
}

TEST(GaussKl, Examples) {
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  EXPECT_NEAR(eval::gauss_kl(Vector::Zero(1), one, Vector::Zero(1), one), 0.0, 1e-15);
  EXPECT_NEAR(eval::gauss_kl(Vector::Zero(1), one, Vector::Ones(1), one), 0.5, 1e-14);
  EXPECT_NEAR(eval::gauss_kl(Vector::Zero(1), one, Vector::Zero(1), Matrix::Constant(1, 1, 4.0)),
              0.5 * (0.25 - 1.0 + std::log(4.0)), 1e-14);
  EXPECT_NEAR(eval::gauss_kl(Vector::Zero(1), one, Vector::Zero(1), Matrix::Constant(1, 1, 4.0)), 0.3181, 1e-4);
  EXPECT_THROW(eval::gauss_kl(Vector::Zero(1), one, Vector::Zero(1), Matrix::Constant(1, 1, -1.0)),
               NotPositiveDefinite);
}

TEST(GaussLogpdf, MatchesScalarFormula) {
  const Matrix x = numkit::from_rows({{0.3}, {-1.2}});
  const Vector lp = eval::gauss_logpdf(x, Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 2.0));
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double z = x(i, 0) - 0.5;
    EXPECT_NEAR(lp(i), -0.5 * std::log(2 * M_PI * 2.0) - z * z / 4.0, 1e-14);
  }
}

TEST(KlMc, AgreesWithClosedForm) {
  Rng rng(6);
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  const eval::DivergenceReport r = eval::kl_mc(gauss_sampler(Vector::Zero(1), one), gauss_density(Vector::Zero(1), one),
                                               gauss_density(Vector::Ones(1), one), 100000, rng);
  EXPECT_EQ(r.n_mc, 100000u);
  EXPECT_GT(r.std_err, 0.0);
  EXPECT_NEAR(r.value, 0.5, 3.0 * r.std_err);

  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_index(4));
    Vector ma(d), mb(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      ma(i) = rng.normal();
      mb(i) = rng.normal();
    }
    const Matrix a = random_spd(rng, d);
    const Matrix b = random_spd(rng, d);
    const auto mc = eval::kl_mc(gauss_sampler(ma, a), gauss_density(ma, a), gauss_density(mb, b), 50000, rng);
    EXPECT_NEAR(mc.value, eval::gauss_kl(ma, a, mb, b), 3.5 * mc.std_err) << "trial " << trial;
  }
}

TEST(KlMc, SameDistributionNearZero) {
  Rng rng(7);
  const Matrix cov = random_spd(rng, 2);
  const auto r = eval::kl_mc(gauss_sampler(Vector::Zero(2), cov), gauss_density(Vector::Zero(2), cov),
                             gauss_density(Vector::Zero(2), cov), 5000, rng);
  EXPECT_LE(std::abs(r.value), 3.0 * r.std_err + 1e-12);
}

TEST(KlMc, MixtureVersusMomentMatchedGaussianIsPositive) {
  // q = ½N(−2, 1) + ½N(2, 1); its moment-matched Gaussian is N(0, 5).
  eval::BatchSampler q = [](Rng& rng, std::size_t n) {
    Matrix x(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) = (rng.uniform() < 0.5 ? -2.0 : 2.0) + rng.normal();
    return x;
  };
  eval::BatchLogDensity q_log = [](const numkit::ConstMatrixRef& x) {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double a = -0.5 * (x(i, 0) + 2) * (x(i, 0) + 2);
      const double b = -0.5 * (x(i, 0) - 2) * (x(i, 0) - 2);
      const double m = std::max(a, b);
      out(i) = m + std::log(0.5 * std::exp(a - m) + 0.5 * std::exp(b - m)) - 0.5 * std::log(2 * M_PI);
    }
    return out;
  };
  Rng rng(8);
  const auto r = eval::kl_mc(q, q_log, gauss_density(Vector::Zero(1), Matrix::Constant(1, 1, 5.0)), 20000, rng);
  EXPECT_GT(r.value, 3.0 * r.std_err);
  const auto big = eval::kl_mc(q, q_log, gauss_density(Vector::Zero(1), Matrix::Constant(1, 1, 5.0)), 400000, rng);
  EXPECT_NEAR(r.value, big.value, 3.0 * std::hypot(r.std_err, big.std_err));
}

TEST(KlMc, RejectsSmallBudgetAndNonFinite) {
  Rng rng(9);
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  EXPECT_THROW(eval::kl_mc(gauss_sampler(Vector::Zero(1), one), gauss_density(Vector::Zero(1), one),
                           gauss_density(Vector::Zero(1), one), 999, rng),
               Error);
  eval::BatchLogDensity bad = [](const numkit::ConstMatrixRef& x) {
    return Vector::Constant(x.rows(), std::numeric_limits<double>::quiet_NaN());
  };
  EXPECT_THROW(eval::kl_mc(gauss_sampler(Vector::Zero(1), one), gauss_density(Vector::Zero(1), one), bad, 1000, rng),
               NonFiniteLogDensity);
}

TEST(MetricsCsv, AppendsWithSingleHeader) {
  const fs::path dir = fs::temp_directory_path() / "scdm_test_metrics";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path path = dir / "metrics.csv";
  eval::append_metrics_csv(path, {{"run", 0, "fd_raw/em", 0.25, 0.0}});
  eval::append_metrics_csv(path, {{"run", 10, "mmd/em", 0.5, 0.01}});
  const io::CsvTable t = io::read_csv(path);
  EXPECT_EQ(t.header, (std::vector<std::string>{"run_id", "step", "metric", "value", "stderr"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][2], "mmd/em");
  EXPECT_EQ(io::parse_double(t.rows[1][4]), 0.01);
}
