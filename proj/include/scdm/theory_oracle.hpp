#pragma once

#include "scdm/evalmetrics.hpp"
#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scdm::theory {

using eval::DivergenceReport;
using numkit::ConstMatrixRef;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

// q(c) = weights, q(x|c) = N(means[c], covs[c]), q(x) the mixture.
struct MogSpec {
  Vector weights;
  Matrix means;  // K×d
  std::vector<Matrix> covs;

  std::size_t k() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
  // BadWeights / DimensionMismatch / NotPositiveDefinite.
  void validate() const;
};

Vector mog_logpdf(const MogSpec& q, const ConstMatrixRef& x);
Matrix mog_sample(const MogSpec& q, Rng& rng, std::size_t n);

struct Gaussian {
  Vector mean;
  Matrix cov;
};

// Σ_i q_i log(q_i / p_i) with 0·log 0 = 0. SupportViolation when q_i > 0 = p_i.
double categorical_kl(const Vector& q, const Vector& p);

struct ConvexityCheck {
  double lhs = 0.0;  // KL(Σ w_c q_c ‖ Σ w_c p_c)
  double rhs = 0.0;  // Σ w_c KL(q_c ‖ p_c)
  bool holds = false;  // lhs ≤ rhs + 1e-12
};

ConvexityCheck convexity_check_categorical(const std::vector<Vector>& q_list, const std::vector<Vector>& p_list,
                                           const Vector& weights);

// argmin over N(μ, Σ) of KL(q ‖ N(μ, Σ)): the mixture's first two moments.
Gaussian optimal_uncond_gaussian(const MogSpec& q);

// Per-condition fit within the Gaussian family. With shared_cov the
// embedding (mean) is fitted under that fixed covariance; otherwise each
// condition also gets its own covariance and the fit is exact.
struct ConditionalFit {
  Matrix means;
  std::vector<Matrix> covs;
  Vector per_condition_kl;  // KL(q(x|c) ‖ fit_c), closed form
};

ConditionalFit conditional_fit(const MogSpec& q, const std::optional<Matrix>& shared_cov = std::nullopt);

// Σ_c w_c Σ_c: the covariance minimising E_c KL(q(x|c) ‖ N(μ_c, Σ)).
Matrix pooled_within_covariance(const MogSpec& q);

struct SufficientConditionReport {
  std::vector<double> margins;  // min_E KL(q‖N(E,θ)) − min_E KL(q_c‖N(E,θ))
  double std_err = 0.0;         // combined MC error of each margin
  bool all_positive = false;    // every margin > 3·std_err
};

SufficientConditionReport sufficient_condition_check(const Matrix& theta, const MogSpec& q, std::size_t n_mc,
                                                     Rng& rng);

// How the conditional model is parameterised within the Gaussian family
// p_{θ,E} = N(E, θ). shared_covariance keeps one backbone θ for every
// condition (optimum: pooled within-condition covariance); free_covariance
// gives every condition its own covariance.
enum class FamilyPolicy { shared_covariance, free_covariance };
std::string to_string(FamilyPolicy p);
FamilyPolicy family_policy_from_string(const std::string& s);

struct GaussianFamilySpec {
  FamilyPolicy policy = FamilyPolicy::shared_covariance;
};

struct Prop1Report {
  DivergenceReport kl_uncond;
  DivergenceReport kl_cond_mixture;
  std::vector<double> sufficient_condition_margins;
  double sufficient_condition_stderr = 0.0;
  bool holds = false;  // kl_cond + 3·se_cond < kl_uncond − 3·se_uncond

  double margin() const { return kl_uncond.value - kl_cond_mixture.value; }
  double combined_stderr() const;
};

Prop1Report prop1_experiment(const MogSpec& q, const GaussianFamilySpec& family, std::size_t n_mc, Rng& rng);

enum class CovarianceMode { shared, per_component };
std::string to_string(CovarianceMode m);
CovarianceMode covariance_mode_from_string(const std::string& s);

// Random MoG with component std devs in [0.5, 1.5] along random axes and
// minimum pairwise mean distance ≥ separation · (largest component σ).
MogSpec random_separated_spec(Rng& rng, std::size_t d, std::size_t k, double separation,
                              CovarianceMode cov_mode = CovarianceMode::shared);

// min_{i<j} ‖μ_i − μ_j‖ / max_c σ_max(Σ_c); +∞ for K = 1.
double separation_ratio(const MogSpec& q);

struct TheoryBatchConfig {
  std::size_t n_instances = 100;
  std::vector<double> separations = {4.0};
  std::vector<std::size_t> dims = {1, 2, 3};
  std::vector<std::size_t> ks = {2, 3, 4, 5};
  std::size_t n_mc = 200000;
  FamilyPolicy policy = FamilyPolicy::shared_covariance;
  CovarianceMode cov_mode = CovarianceMode::shared;
  std::uint64_t seed = 20220901;
};

struct TheoryRow {
  std::size_t instance_id = 0;
  double separation = 0.0;  // realised separation ratio
  Prop1Report report;
  double min_margin = 0.0;  // smallest sufficient-condition margin
};

// n_instances per entry of `separations`; instance i draws from
// Rng(derive_seed(seed, "theory", i)).
std::vector<TheoryRow> run_theory_batch(const TheoryBatchConfig& cfg);

// instance_id,separation,kl_uncond,kl_uncond_se,kl_cond,kl_cond_se,min_margin,holds
void write_theory_csv(const std::filesystem::path& path, const std::vector<TheoryRow>& rows);

}  // namespace scdm::theory
