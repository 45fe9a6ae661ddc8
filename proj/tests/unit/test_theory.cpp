#include "scdm/errors.hpp"
#include "scdm/evalmetrics.hpp"
#include "scdm/io.hpp"
#include "scdm/theory_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace scdm;
using namespace scdm::theory;

namespace fs = std::filesystem;

namespace {

MogSpec two_component_1d(double half_gap, double var = 1.0) {
  MogSpec q;
  q.weights = Vector::Constant(2, 0.5);
  q.means = numkit::from_rows({{-half_gap}, {half_gap}});
  q.covs.assign(2, Matrix::Constant(1, 1, var));
  return q;
}

Vector random_simplex(Rng& rng, std::size_t n, bool allow_zero) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = -std::log(1.0 - rng.uniform());
    if (allow_zero && rng.uniform() < 0.2) v(i) = 0.0;
  }
  if (v.sum() == 0.0) v(0) = 1.0;
  return v / v.sum();
}

// KL(N(m1, v1) ‖ N(m2, v2)) in one dimension.
double kl_1d(double m1, double v1, double m2, double v2) {
  return 0.5 * (v1 / v2 + (m1 - m2) * (m1 - m2) / v2 - 1.0 + std::log(v2 / v1));
}

double kl_to_gaussian(const MogSpec& q, const Vector& mean, const Matrix& cov, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return eval::kl_mc([&](Rng& r, std::size_t m) { return mog_sample(q, r, m); },
                     [&](const numkit::ConstMatrixRef& x) { return mog_logpdf(q, x); },
                     [&](const numkit::ConstMatrixRef& x) { return eval::gauss_logpdf(x, mean, cov); }, n, rng)
      .value;
}

}  // namespace

TEST(CategoricalKl, ExamplesAndSupport) {
  const Vector q{{0.5, 0.5}};
  EXPECT_EQ(categorical_kl(q, q), 0.0);
  EXPECT_NEAR(categorical_kl(q, Vector{{0.25, 0.75}}), 0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75), 1e-15);
  EXPECT_EQ(categorical_kl(Vector{{1.0, 0.0}}, Vector{{0.5, 0.5}}), std::log(2.0));
  EXPECT_THROW(categorical_kl(Vector{{0.5, 0.5}}, Vector{{1.0, 0.0}}), SupportViolation);
}

TEST(Convexity, DegenerateCasesAreEqualities) {
  const Vector a{{0.2, 0.3, 0.5}};
  const Vector b{{0.4, 0.4, 0.2}};
  const ConvexityCheck same = convexity_check_categorical({a, a}, {b, b}, Vector{{0.3, 0.7}});
  EXPECT_NEAR(same.lhs, same.rhs, 1e-15);
  EXPECT_TRUE(same.holds);
  const ConvexityCheck zero = convexity_check_categorical({a, b}, {a, b}, Vector{{0.5, 0.5}});
  EXPECT_NEAR(zero.lhs, 0.0, 1e-15);
  EXPECT_NEAR(zero.rhs, 0.0, 1e-15);
  EXPECT_THROW(convexity_check_categorical({Vector{{0.5, 0.5}}}, {Vector{{1.0, 0.0}}}, Vector::Ones(1)),
               SupportViolation);
}

TEST(Convexity, HoldsOnRandomInstances) {
  Rng rng(1);
  int holds = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t support = 1 + rng.uniform_index(10);
    const std::size_t k = 1 + rng.uniform_index(5);
    std::vector<Vector> qs, ps;
    for (std::size_t c = 0; c < k; ++c) {
      qs.push_back(random_simplex(rng, support, true));
      ps.push_back(random_simplex(rng, support, false));
    }
    const ConvexityCheck r = convexity_check_categorical(qs, ps, random_simplex(rng, k, false));
    holds += r.holds && r.lhs <= r.rhs + 1e-12;
  }
  EXPECT_EQ(holds, 1000);
}

TEST(Convexity, MatchesDirectEvaluation) {
  Rng rng(2);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t support = 2 + rng.uniform_index(6);
    const std::size_t k = 2 + rng.uniform_index(3);
    std::vector<Vector> qs, ps;
    for (std::size_t c = 0; c < k; ++c) {
      qs.push_back(random_simplex(rng, support, false));
      ps.push_back(random_simplex(rng, support, false));
    }
    const Vector w = random_simplex(rng, k, false);
    Vector qm = Vector::Zero(static_cast<Eigen::Index>(support));
    Vector pm = Vector::Zero(static_cast<Eigen::Index>(support));
    double rhs = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      qm += w(static_cast<Eigen::Index>(c)) * qs[c];
      pm += w(static_cast<Eigen::Index>(c)) * ps[c];
      double kl = 0.0;
      for (Eigen::Index i = 0; i < qs[c].size(); ++i) kl += qs[c](i) * std::log(qs[c](i) / ps[c](i));
      rhs += w(static_cast<Eigen::Index>(c)) * kl;
    }
    double lhs = 0.0;
    for (Eigen::Index i = 0; i < qm.size(); ++i) lhs += qm(i) * std::log(qm(i) / pm(i));
    const ConvexityCheck r = convexity_check_categorical(qs, ps, w);
    EXPECT_NEAR(r.lhs, lhs, 1e-12);
    EXPECT_NEAR(r.rhs, rhs, 1e-12);
  }
}

TEST(OptimalUncond, MomentMatching) {
  const Gaussian g = optimal_uncond_gaussian(two_component_1d(2.0));
  EXPECT_NEAR(g.mean(0), 0.0, 1e-15);
  EXPECT_NEAR(g.cov(0, 0), 5.0, 1e-12);

  MogSpec single;
  single.weights = Vector::Ones(1);
  single.means = numkit::from_rows({{1.0, -2.0}});
  single.covs = {numkit::from_rows({{2.0, 0.3}, {0.3, 1.0}})};
  const Gaussian s = optimal_uncond_gaussian(single);
  EXPECT_LE((s.mean - single.means.row(0).transpose()).norm(), 1e-15);
  EXPECT_LE((s.cov - single.covs[0]).norm(), 1e-15);

  // Monte-Carlo moments of a random mixture.
  Rng rng(3);
  const MogSpec q = random_separated_spec(rng, 2, 3, 3.0, CovarianceMode::per_component);
  const Gaussian m = optimal_uncond_gaussian(q);
  const eval::GaussStats st = eval::fit_gaussian(mog_sample(q, rng, 200000));
  EXPECT_LE((st.mean - m.mean).norm(), 0.05 * std::sqrt(m.cov.trace()));
  EXPECT_LE((st.cov - m.cov).norm(), 0.03 * m.cov.norm());
}

TEST(OptimalUncond, ShiftedMeanIsWorse) {
  Rng rng(4);
  const MogSpec q = random_separated_spec(rng, 2, 3, 3.0);
  const Gaussian g = optimal_uncond_gaussian(q);
  Rng mc(5);
  const auto base = eval::kl_mc([&](Rng& r, std::size_t m) { return mog_sample(q, r, m); },
                                [&](const numkit::ConstMatrixRef& x) { return mog_logpdf(q, x); },
                                [&](const numkit::ConstMatrixRef& x) { return eval::gauss_logpdf(x, g.mean, g.cov); },
                                100000, mc);
  Vector shifted = g.mean;
  shifted(0) += 0.5;
  Rng mc2(5);
  const auto worse = eval::kl_mc([&](Rng& r, std::size_t m) { return mog_sample(q, r, m); },
                                 [&](const numkit::ConstMatrixRef& x) { return mog_logpdf(q, x); },
                                 [&](const numkit::ConstMatrixRef& x) { return eval::gauss_logpdf(x, shifted, g.cov); },
                                 100000, mc2);
  EXPECT_GT(worse.value - base.value, 3.0 * std::hypot(base.std_err, worse.std_err));
}

TEST(OptimalUncond, PerturbationsNeverImprove) {
  Rng rng(6);
  const MogSpec q = random_separated_spec(rng, 2, 3, 3.0, CovarianceMode::per_component);
  const Gaussian g = optimal_uncond_gaussian(q);
  const std::size_t n = 50000;
  // Common random numbers: every evaluation uses the same draws from q.
  const double base = kl_to_gaussian(q, g.mean, g.cov, n, 7);
  for (int dir = 0; dir < 10; ++dir) {
    Vector mean = g.mean;
    Matrix cov = g.cov;
    if (dir % 2 == 0) {
      Vector u(2);
      u << rng.normal(), rng.normal();
      mean += 0.1 * u.normalized();
    } else {
      Matrix a(2, 2);
      a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
      const Matrix sym = 0.5 * (a + a.transpose());
      cov += 0.1 * sym / sym.norm();
    }
    EXPECT_GE(kl_to_gaussian(q, mean, cov, n, 7), base - 1e-3) << "direction " << dir;
  }
}

TEST(ConditionalFit, FreeCovariancesAreExact) {
  Rng rng(8);
  const MogSpec q = random_separated_spec(rng, 2, 3, 4.0, CovarianceMode::per_component);
  const ConditionalFit f = conditional_fit(q);
  EXPECT_EQ(f.means, q.means);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f.covs[c], q.covs[c]);
  EXPECT_TRUE(f.per_condition_kl.isZero(0.0));
  Rng mc(9);
  const Prop1Report r = prop1_experiment(q, {FamilyPolicy::free_covariance}, 5000, mc);
  EXPECT_EQ(r.kl_cond_mixture.value, 0.0);
}

TEST(ConditionalFit, SharedTrueCovarianceIsExact) {
  Rng rng(10);
  const MogSpec q = random_separated_spec(rng, 3, 4, 4.0, CovarianceMode::shared);
  const ConditionalFit f = conditional_fit(q, q.covs[0]);
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(f.per_condition_kl(c), 0.0, 1e-12);
  EXPECT_LE((pooled_within_covariance(q) - q.covs[0]).norm(), 1e-12);
}

TEST(ConditionalFit, MisspecifiedSharedCovariance) {
  MogSpec q;
  q.weights = Vector{{0.3, 0.7}};
  q.means = numkit::from_rows({{3.0, 0.0}, {-3.0, 1.0}});
  q.covs.assign(2, 4.0 * Matrix::Identity(2, 2));
  const ConditionalFit f = conditional_fit(q, Matrix::Identity(2, 2));
  const double per_dim = 0.5 * (4.0 - 1.0 - std::log(4.0));
  EXPECT_NEAR(f.per_condition_kl(0), 2.0 * per_dim, 1e-12);
  EXPECT_NEAR(f.per_condition_kl(1), 2.0 * per_dim, 1e-12);
  EXPECT_EQ(f.means, q.means);
}

TEST(ConditionalFit, JointGridSearchMatchesPerConditionMeanMatching) {
  // Joint minimisation of Σ_c w_c KL(q_c ‖ N(E_c, s)) over (s, E_1..E_3)
  // against a shared s with per-condition mean matching.
  MogSpec q;
  q.weights = Vector{{0.2, 0.5, 0.3}};
  q.means = numkit::from_rows({{-2.0}, {0.5}, {3.0}});
  q.covs = {Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  const Matrix pooled = pooled_within_covariance(q);
  const ConditionalFit fit = conditional_fit(q, pooled);
  double fit_obj = 0.0;
  for (Eigen::Index c = 0; c < 3; ++c) fit_obj += q.weights(c) * fit.per_condition_kl(c);

  const double h = 0.05;
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double best_e[3] = {0, 0, 0};
  for (int is = 0; is <= 60; ++is) {
    const double s = 0.5 + h * is;
    for (int a = -10; a <= 10; ++a)
      for (int b = -10; b <= 10; ++b)
        for (int c = -10; c <= 10; ++c) {
          const double e[3] = {q.means(0, 0) + 0.1 * a, q.means(1, 0) + 0.1 * b, q.means(2, 0) + 0.1 * c};
          double obj = 0.0;
          for (int j = 0; j < 3; ++j) obj += q.weights(j) * kl_1d(q.means(j, 0), q.covs[j](0, 0), e[j], s);
          if (obj < best) {
            best = obj;
            best_s = s;
            for (int j = 0; j < 3; ++j) best_e[j] = e[j];
          }
        }
  }
  EXPECT_NEAR(best_s, pooled(0, 0), h);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(best_e[j], fit.means(j, 0), 1e-12);
  EXPECT_GE(best, fit_obj - 1e-12);
  EXPECT_NEAR(best, fit_obj, 1e-3);
}

TEST(SufficientCondition, SingleComponentHasZeroMargin) {
  MogSpec q;
  q.weights = Vector::Ones(1);
  q.means = Matrix::Zero(1, 2);
  q.covs = {Matrix::Identity(2, 2)};
  Rng rng(11);
  const SufficientConditionReport r = sufficient_condition_check(Matrix::Identity(2, 2), q, 20000, rng);
  ASSERT_EQ(r.margins.size(), 1u);
  EXPECT_NEAR(r.margins[0], 0.0, 1e-12);
  EXPECT_FALSE(r.all_positive);
}

TEST(SufficientCondition, SeparatedComponentsHavePositiveMargins) {
  const MogSpec q = two_component_1d(4.0);
  Rng rng(12);
  const SufficientConditionReport r = sufficient_condition_check(q.covs[0], q, 200000, rng);
  EXPECT_TRUE(r.all_positive);
  for (double m : r.margins) EXPECT_GT(m, 3.0 * r.std_err);
}

TEST(SufficientCondition, OverlappingComponentsAreInconclusive) {
  const MogSpec q = two_component_1d(0.1);
  Rng rng(13);
  const SufficientConditionReport r = sufficient_condition_check(q.covs[0], q, 20000, rng);
  for (double m : r.margins) EXPECT_LE(std::abs(m), 3.0 * r.std_err + 1e-3);
  EXPECT_FALSE(r.all_positive);
}

TEST(Prop1Experiment, TwoComponentExample) {
  Rng rng(14);
  const Prop1Report r = prop1_experiment(two_component_1d(2.0), {FamilyPolicy::free_covariance}, 200000, rng);
  EXPECT_EQ(r.kl_cond_mixture.value, 0.0);
  EXPECT_GT(r.kl_uncond.value, 3.0 * r.kl_uncond.std_err);
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.margin(), r.kl_uncond.value, 1e-15);
}

TEST(Prop1Experiment, SingleComponentDoesNotHold) {
  MogSpec q;
  q.weights = Vector::Ones(1);
  q.means = Matrix::Zero(1, 1);
  q.covs = {Matrix::Constant(1, 1, 2.0)};
  Rng rng(15);
  for (auto policy : {FamilyPolicy::shared_covariance, FamilyPolicy::free_covariance}) {
    const Prop1Report r = prop1_experiment(q, {policy}, 10000, rng);
    EXPECT_NEAR(r.kl_uncond.value, 0.0, 1e-12);
    EXPECT_NEAR(r.kl_cond_mixture.value, 0.0, 1e-12);
    EXPECT_FALSE(r.holds);
  }
}

TEST(Prop1Experiment, GapGrowsWithSeparation) {
  const double ladder[5] = {0.25, 0.75, 1.5, 2.5, 4.0};
  double prev = -1.0;
  double prev_se = 0.0;
  for (double half_gap : ladder) {
    Rng rng(16);
    const Prop1Report r = prop1_experiment(two_component_1d(half_gap), {FamilyPolicy::shared_covariance}, 50000, rng);
    const double gap = r.margin();
    EXPECT_GE(gap, prev - 3.0 * std::hypot(r.combined_stderr(), prev_se)) << "half gap " << half_gap;
    prev = gap;
    prev_se = r.combined_stderr();
  }
}

TEST(RandomSeparatedSpec, SeparationAndValidity) {
  Rng rng(17);
  for (auto mode : {CovarianceMode::shared, CovarianceMode::per_component}) {
    for (int i = 0; i < 20; ++i) {
      const std::size_t d = 1 + rng.uniform_index(3);
      const std::size_t k = 2 + rng.uniform_index(4);
      const MogSpec q = random_separated_spec(rng, d, k, 4.0, mode);
      EXPECT_NO_THROW(q.validate());
      EXPECT_EQ(q.k(), k);
      EXPECT_EQ(q.dim(), d);
      EXPECT_GE(separation_ratio(q), 4.0 - 1e-9);
      EXPECT_NEAR(q.weights.sum(), 1.0, 1e-12);
      if (mode == CovarianceMode::shared) {
        for (std::size_t c = 1; c < k; ++c) EXPECT_EQ(q.covs[c], q.covs[0]);
      }
    }
  }
  EXPECT_EQ(covariance_mode_from_string("per_component"), CovarianceMode::per_component);
  EXPECT_THROW(covariance_mode_from_string("diag"), ConfigError);
  EXPECT_THROW(family_policy_from_string("tied"), ConfigError);
}

TEST(MogSpec, DensityIntegratesAndValidates) {
  const MogSpec q = two_component_1d(1.0);
  double mass = 0.0;
  const int m = 4000;
  Matrix grid(m, 1);
  for (int i = 0; i < m; ++i) grid(i, 0) = -10.0 + 20.0 * (i + 0.5) / m;
  const Vector lp = mog_logpdf(q, grid);
  for (int i = 0; i < m; ++i) mass += std::exp(lp(i)) * 20.0 / m;
  EXPECT_NEAR(mass, 1.0, 1e-9);
  MogSpec bad = q;
  bad.weights = Vector{{0.7, 0.4}};
  EXPECT_THROW(bad.validate(), BadWeights);
}

TEST(TheoryBatch, SmallBatchHoldsAndWritesCsv) {
  TheoryBatchConfig cfg;
  cfg.n_instances = 6;
  cfg.n_mc = 20000;
  for (auto mode : {CovarianceMode::shared, CovarianceMode::per_component}) {
    cfg.cov_mode = mode;
    const std::vector<TheoryRow> rows = run_theory_batch(cfg);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
      EXPECT_TRUE(r.report.holds) << "instance " << r.instance_id << " " << to_string(mode);
      EXPECT_GE(r.separation, 4.0 - 1e-9);
    }
    EXPECT_EQ(run_theory_batch(cfg)[3].report.kl_uncond.value, rows[3].report.kl_uncond.value);
  }
  const fs::path dir = fs::temp_directory_path() / "scdm_test_theory";
  fs::remove_all(dir);
  const auto rows = run_theory_batch(cfg);
  write_theory_csv(dir / "theory.csv", rows);
  const io::CsvTable t = io::read_csv(dir / "theory.csv");
  EXPECT_EQ(t.header.size(), 8u);
  EXPECT_EQ(t.header.back(), "holds");
  EXPECT_EQ(t.rows.size(), 6u);
}
