#include "scdm/theory_oracle.hpp"

#include "scdm/errors.hpp"
#include "scdm/io.hpp"
#include "scdm/numkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace scdm::theory {

void MogSpec::validate() const {
  if (weights.size() == 0) throw BadWeights("MogSpec: no components");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw BadWeights("MogSpec: weights are not a simplex");
  }
  if (static_cast<std::size_t>(means.rows()) != k() || covs.size() != k()) {
    throw DimensionMismatch("MogSpec: component counts differ");
  }
  for (const auto& c : covs) {
    if (static_cast<std::size_t>(c.rows()) != dim() || static_cast<std::size_t>(c.cols()) != dim()) {
      throw DimensionMismatch("MogSpec: covariance shape");
    }
    numkit::cholesky(c);
  }
}

Vector mog_logpdf(const MogSpec& q, const ConstMatrixRef& x) {
  const Eigen::Index n = x.rows();
  Matrix terms(n, static_cast<Eigen::Index>(q.k()));
  for (std::size_t c = 0; c < q.k(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double lw = q.weights(ci) > 0.0 ? std::log(q.weights(ci)) : -std::numeric_limits<double>::infinity();
    terms.col(ci) = eval::gauss_logpdf(x, q.means.row(ci).transpose(), q.covs[c]).array() + lw;
  }
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = terms.row(i).maxCoeff();
    out(i) = mx + std::log((terms.row(i).array() - mx).exp().sum());
  }
  return out;
}

Matrix mog_sample(const MogSpec& q, Rng& rng, std::size_t n) {
  std::vector<Matrix> chol;
  for (const auto& c : q.covs) chol.push_back(numkit::cholesky(c));
  const auto d = static_cast<Eigen::Index>(q.dim());
  Matrix x(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t comp = q.k() - 1;
    for (std::size_t c = 0; c < q.k(); ++c) {
      acc += q.weights(static_cast<Eigen::Index>(c));
      if (u < acc) {
        comp = c;
        break;
      }
    }
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    x.row(i) = (q.means.row(static_cast<Eigen::Index>(comp)).transpose() +
                chol[comp].triangularView<Eigen::Lower>() * z)
                   .transpose();
  }
  return x;
}

double categorical_kl(const Vector& q, const Vector& p) {
  if (q.size() != p.size()) throw DimensionMismatch("categorical_kl: supports differ");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) <= 0.0) continue;
    if (p(i) <= 0.0) throw SupportViolation("categorical_kl: q > 0 where p = 0 at index " + std::to_string(i));
    kl += q(i) * std::log(q(i) / p(i));
  }
  return kl;
}

ConvexityCheck convexity_check_categorical(const std::vector<Vector>& q_list, const std::vector<Vector>& p_list,
                                           const Vector& weights) {
  if (q_list.size() != p_list.size() || q_list.size() != static_cast<std::size_t>(weights.size()) || q_list.empty()) {
    throw DimensionMismatch("convexity_check_categorical: list sizes");
  }
  const Eigen::Index s = q_list.front().size();
  Vector q_mix = Vector::Zero(s);
  Vector p_mix = Vector::Zero(s);
  ConvexityCheck out;
  for (std::size_t c = 0; c < q_list.size(); ++c) {
    const double w = weights(static_cast<Eigen::Index>(c));
    q_mix += w * q_list[c];
    p_mix += w * p_list[c];
    if (w > 0.0) out.rhs += w * categorical_kl(q_list[c], p_list[c]);
  }
  out.lhs = categorical_kl(q_mix, p_mix);
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

Gaussian optimal_uncond_gaussian(const MogSpec& q) {
  const auto d = static_cast<Eigen::Index>(q.dim());
  Gaussian g{Vector::Zero(d), Matrix::Zero(d, d)};
  for (std::size_t c = 0; c < q.k(); ++c) {
    g.mean += q.weights(static_cast<Eigen::Index>(c)) * q.means.row(static_cast<Eigen::Index>(c)).transpose();
  }
  for (std::size_t c = 0; c < q.k(); ++c) {
    const Vector dm = q.means.row(static_cast<Eigen::Index>(c)).transpose() - g.mean;
    g.cov += q.weights(static_cast<Eigen::Index>(c)) * (q.covs[c] + dm * dm.transpose());
  }
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

Matrix pooled_within_covariance(const MogSpec& q) {
  const auto d = static_cast<Eigen::Index>(q.dim());
  Matrix s = Matrix::Zero(d, d);
  for (std::size_t c = 0; c < q.k(); ++c) s += q.weights(static_cast<Eigen::Index>(c)) * q.covs[c];
  return 0.5 * (s + s.transpose());
}

ConditionalFit conditional_fit(const MogSpec& q, const std::optional<Matrix>& shared_cov) {
  ConditionalFit fit;
  fit.means = q.means;
  fit.per_condition_kl = Vector::Zero(static_cast<Eigen::Index>(q.k()));
  for (std::size_t c = 0; c < q.k(); ++c) {
    if (shared_cov) {
      fit.covs.push_back(*shared_cov);
      const Vector mu = q.means.row(static_cast<Eigen::Index>(c)).transpose();
      fit.per_condition_kl(static_cast<Eigen::Index>(c)) = eval::gauss_kl(mu, q.covs[c], mu, *shared_cov);
    } else {
      fit.covs.push_back(q.covs[c]);
    }
  }
  return fit;
}

SufficientConditionReport sufficient_condition_check(const Matrix& theta, const MogSpec& q, std::size_t n_mc,
                                                     Rng& rng) {
  q.validate();
  numkit::cholesky(theta);
  const Gaussian moments = optimal_uncond_gaussian(q);
  const DivergenceReport uncond = eval::kl_mc(
      [&](Rng& r, std::size_t n) { return mog_sample(q, r, n); },
      [&](const ConstMatrixRef& x) { return mog_logpdf(q, x); },
      [&](const ConstMatrixRef& x) { return eval::gauss_logpdf(x, moments.mean, theta); }, n_mc, rng);
  const ConditionalFit fit = conditional_fit(q, theta);
  SufficientConditionReport out;
  out.std_err = uncond.std_err;
  out.all_positive = true;
  for (std::size_t c = 0; c < q.k(); ++c) {
    const double m = uncond.value - fit.per_condition_kl(static_cast<Eigen::Index>(c));
    out.margins.push_back(m);
    out.all_positive = out.all_positive && m > 3.0 * out.std_err;
  }
  return out;
}

std::string to_string(FamilyPolicy p) {
  return p == FamilyPolicy::shared_covariance ? "shared_covariance" : "free_covariance";
}

FamilyPolicy family_policy_from_string(const std::string& s) {
  if (s == "shared_covariance") return FamilyPolicy::shared_covariance;
  if (s == "free_covariance") return FamilyPolicy::free_covariance;
  throw ConfigError("family", "unknown family policy '" + s + "'");
}

double Prop1Report::combined_stderr() const {
  return std::hypot(kl_uncond.std_err, kl_cond_mixture.std_err);
}

Prop1Report prop1_experiment(const MogSpec& q, const GaussianFamilySpec& family, std::size_t n_mc, Rng& rng) {
  q.validate();
  const Gaussian uncond = optimal_uncond_gaussian(q);
  const Matrix pooled = pooled_within_covariance(q);
  const ConditionalFit fit = conditional_fit(
      q, family.policy == FamilyPolicy::shared_covariance ? std::optional<Matrix>(pooled) : std::nullopt);
  MogSpec model{q.weights, fit.means, fit.covs};

  auto sampler = [&](Rng& r, std::size_t n) { return mog_sample(q, r, n); };
  auto q_log = [&](const ConstMatrixRef& x) { return mog_logpdf(q, x); };
  Prop1Report rep;
  rep.kl_uncond = eval::kl_mc(
      sampler, q_log, [&](const ConstMatrixRef& x) { return eval::gauss_logpdf(x, uncond.mean, uncond.cov); }, n_mc,
      rng);
  rep.kl_cond_mixture = eval::kl_mc(
      sampler, q_log, [&](const ConstMatrixRef& x) { return mog_logpdf(model, x); }, n_mc, rng);
  const SufficientConditionReport suff = sufficient_condition_check(pooled, q, n_mc, rng);
  rep.sufficient_condition_margins = suff.margins;
  rep.sufficient_condition_stderr = suff.std_err;
  rep.holds = rep.kl_cond_mixture.value + 3.0 * rep.kl_cond_mixture.std_err <
              rep.kl_uncond.value - 3.0 * rep.kl_uncond.std_err;
  return rep;
}

std::string to_string(CovarianceMode m) { return m == CovarianceMode::shared ? "shared" : "per_component"; }

CovarianceMode covariance_mode_from_string(const std::string& s) {
  if (s == "shared") return CovarianceMode::shared;
  if (s == "per_component") return CovarianceMode::per_component;
  throw ConfigError("cov_mode", "unknown covariance mode '" + s + "'");
}

namespace {

Matrix random_rotation(Rng& rng, Eigen::Index d) {
  // Gram–Schmidt on a Gaussian matrix.
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) a.col(j) -= a.col(k).dot(a.col(j)) * a.col(k);
    a.col(j).normalize();
  }
  return a;
}

Matrix random_covariance(Rng& rng, Eigen::Index d) {
  const Matrix r = random_rotation(rng, d);
  Vector sd(d);
  for (Eigen::Index i = 0; i < d; ++i) sd(i) = 0.5 + rng.uniform();
  Matrix c = r * sd.array().square().matrix().asDiagonal() * r.transpose();
  return 0.5 * (c + c.transpose());
}

double max_sigma(const std::vector<Matrix>& covs) {
  double s = 0.0;
  for (const auto& c : covs) s = std::max(s, std::sqrt(numkit::sym_eig(c).values.maxCoeff()));
  return s;
}

}  // namespace

double separation_ratio(const MogSpec& q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.k(); ++i)
    for (std::size_t j = i + 1; j < q.k(); ++j)
      best = std::min(best, (q.means.row(static_cast<Eigen::Index>(i)) - q.means.row(static_cast<Eigen::Index>(j))).norm());
  return best / max_sigma(q.covs);
}

MogSpec random_separated_spec(Rng& rng, std::size_t d, std::size_t k, double separation, CovarianceMode cov_mode) {
  if (d == 0 || k == 0) throw DimensionMismatch("random_separated_spec: d and k must be > 0");
  const auto di = static_cast<Eigen::Index>(d);
  MogSpec q;
  q.weights = Vector(static_cast<Eigen::Index>(k));
  for (Eigen::Index c = 0; c < q.weights.size(); ++c) q.weights(c) = 0.5 + rng.uniform();
  q.weights /= q.weights.sum();
  q.weights(q.weights.size() - 1) = 1.0 - q.weights.head(q.weights.size() - 1).sum();
  if (cov_mode == CovarianceMode::shared) {
    q.covs.assign(k, random_covariance(rng, di));
  } else {
    for (std::size_t c = 0; c < k; ++c) q.covs.push_back(random_covariance(rng, di));
  }
  const double min_dist = separation * max_sigma(q.covs);
  // Rejection-sample means in a cube scaled to the requested separation.
  double side = 2.0 * min_dist * std::pow(static_cast<double>(k), 1.0 / static_cast<double>(d));
  q.means = Matrix(static_cast<Eigen::Index>(k), di);
  for (std::size_t attempt = 0;; ++attempt) {
    for (Eigen::Index c = 0; c < q.means.rows(); ++c)
      for (Eigen::Index j = 0; j < di; ++j) q.means(c, j) = side * (rng.uniform() - 0.5);
    bool ok = true;
    for (Eigen::Index i = 0; i < q.means.rows() && ok; ++i)
      for (Eigen::Index j = i + 1; j < q.means.rows() && ok; ++j) ok = (q.means.row(i) - q.means.row(j)).norm() >= min_dist;
    if (ok) break;
    if (attempt % 1000 == 999) side *= 1.1;
  }
  return q;
}

std::vector<TheoryRow> run_theory_batch(const TheoryBatchConfig& cfg) {
  if (cfg.dims.empty() || cfg.ks.empty()) throw ConfigError("verify_theory", "dims and ks must be non-empty");
  std::vector<TheoryRow> rows;
  std::size_t id = 0;
  for (double sep : cfg.separations) {
    for (std::size_t i = 0; i < cfg.n_instances; ++i, ++id) {
      Rng rng(numkit::derive_seed(cfg.seed, "theory", std::to_string(id)));
      const std::size_t d = cfg.dims[rng.uniform_index(cfg.dims.size())];
      const std::size_t k = cfg.ks[rng.uniform_index(cfg.ks.size())];
      const MogSpec q = random_separated_spec(rng, d, k, sep, cfg.cov_mode);
      TheoryRow row;
      row.instance_id = id;
      row.separation = k > 1 ? separation_ratio(q) : 0.0;
      row.report = prop1_experiment(q, GaussianFamilySpec{cfg.policy}, cfg.n_mc, rng);
      row.min_margin = *std::min_element(row.report.sufficient_condition_margins.begin(),
                                         row.report.sufficient_condition_margins.end());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_theory_csv(const std::filesystem::path& path, const std::vector<TheoryRow>& rows) {
  std::string text = "instance_id,separation,kl_uncond,kl_uncond_se,kl_cond,kl_cond_se,min_margin,holds\n";
  for (const auto& r : rows) {
    text += std::to_string(r.instance_id) + "," + io::format_double(r.separation) + "," +
            io::format_double(r.report.kl_uncond.value) + "," + io::format_double(r.report.kl_uncond.std_err) + "," +
            io::format_double(r.report.kl_cond_mixture.value) + "," +
            io::format_double(r.report.kl_cond_mixture.std_err) + "," + io::format_double(r.min_margin) + "," +
            (r.report.holds ? "true" : "false") + "\n";
  }
  io::write_text(path, text);
}

}  // namespace scdm::theory
