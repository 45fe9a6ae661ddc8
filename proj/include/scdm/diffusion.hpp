#pragma once

#include "scdm/io.hpp"
#include "scdm/nn/mlp.hpp"
#include "scdm/nn/optim.hpp"
#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace scdm::diffusion {

using nn::Mlp;
using numkit::ConstMatrixRef;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

// Condition index meaning "no condition": selects the null embedding row K.
inline constexpr int kNullCondition = -1;

// Linear VP schedule β(t) = β_min + (β_max − β_min)·t on t ∈ [0, 1].
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  void validate() const;
  double beta(double t) const { return beta_min + (beta_max - beta_min) * t; }
  // ∫₀ᵗ β(s) ds
  double integral(double t) const { return beta_min * t + 0.5 * (beta_max - beta_min) * t * t; }
};

// ᾱ(t) = exp(−∫₀ᵗ β).
double alpha_bar(double t, const NoiseSchedule& sched);
// Half log-SNR λ(t) = ½·log(ᾱ / (1 − ᾱ)) and its inverse.
double half_log_snr(double t, const NoiseSchedule& sched);
double time_of_half_log_snr(double lambda, const NoiseSchedule& sched);

struct Perturbed {
  Vector x_t;
  Vector eps;
};

// x_t = √ᾱ(t)·x0 + √(1 − ᾱ(t))·ε with ε ~ N(0, I) drawn from rng.
Perturbed perturb(Rng& rng, const Vector& x0, double t, const NoiseSchedule& sched);
Vector perturb_with(const Vector& x0, const Vector& eps, double t, const NoiseSchedule& sched);

struct ScoreNetShape {
  std::size_t data_dim = 2;
  std::size_t k = 0;  // number of real conditions; 0 means unconditional only
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t embed_dim = 32;
  std::size_t n_frequencies = 16;
  double freq_min = 1.0;
  double freq_max = 1000.0;
};

// ε-prediction network. The input row is [x_t, time_proj(φ(t)) + E[c]] where
// φ(t) = (sin ω_j t, cos ω_j t)_j and E has K + 1 rows; row K is the null
// embedding used by the unconditional path.
struct ScoreNetParams {
  Mlp trunk;           // [d + d_e, hidden..., d]
  Matrix embed_table;  // (K + 1) × d_e
  Vector frequencies;  // n_frequencies log-spaced ω_j
  Mlp time_proj;       // affine [2·n_frequencies, d_e]
  std::size_t k = 0;
  std::size_t embed_dim = 0;
  std::size_t data_dim = 0;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

ScoreNetParams init_score_net(const ScoreNetShape& shape, Rng& rng, bool zero_last = false);

// Sinusoidal features, one row per entry of t.
Matrix time_features(const Vector& frequencies, const Vector& t);

// Batched ε̂(x_t, t, c). Throws BadCondition for c ∉ [0, K) ∪ {kNullCondition}.
Matrix eps_predict(const ScoreNetParams& params, const ConstMatrixRef& x_t, const Vector& t,
                   const std::vector<int>& conditions);
Vector eps_predict(const ScoreNetParams& params, const Vector& x_t, double t, int condition);

struct ScoreNetGrads {
  nn::AlignedBuffer trunk;
  nn::AlignedBuffer embed;  // row-major (K + 1) × d_e
  nn::AlignedBuffer time;

  explicit ScoreNetGrads(const ScoreNetParams& p);
};

// Everything random in one DSM step, fixed so the loss is a pure function of
// the parameters.
struct FrozenBatch {
  Matrix x0;
  std::vector<int> conditions;
  Vector t;
  Matrix eps;
};

// mean_i ‖ε̂(x_t,i, t_i, c_i) − ε_i‖²; adds the gradient into grads when
// non-null.
double dsm_loss(const ScoreNetParams& params, const FrozenBatch& batch, const NoiseSchedule& sched,
                ScoreNetGrads* grads);

enum class TrainMode { unconditional, label_conditional, cluster_conditional };
std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::unconditional;
  std::size_t steps = 20000;
  std::size_t batch_size = 256;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double t_min_train = 1e-3;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0: evaluate only at the end

  void validate() const;
};

io::Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const io::Json& j);

// Adam state for every parameter block of a ScoreNetParams.
class DsmOptimizer {
 public:
  DsmOptimizer(const ScoreNetParams& params, const TrainConfig& cfg);
  void step(ScoreNetParams& params, const ScoreNetGrads& grads);

 private:
  nn::Adam trunk_;
  nn::Adam embed_;
  nn::Adam time_;
};

// Draws t ~ U[t_min_train, 1] and ε ~ N(0, I) for the given rows, then takes
// one Adam step. Returns the pre-update loss; throws NonFiniteLoss.
double dsm_step(Rng& rng, ScoreNetParams& params, const ConstMatrixRef& x0, const std::vector<int>& conditions,
                const NoiseSchedule& sched, const TrainConfig& cfg, DsmOptimizer& opt, std::size_t step_index = 0);

// Metric to minimise for "report the best" checkpointing; lower is better.
using CheckpointMetric = std::function<double(const ScoreNetParams&, std::size_t step)>;

struct TrainResult {
  ScoreNetParams final_params;
  ScoreNetParams best_params;
  std::size_t best_step = 0;
  double best_metric = 0.0;
  std::vector<double> loss_trace;
  std::vector<std::pair<std::size_t, double>> eval_trace;
};

// Trains from init_score_net(shape, Rng(cfg.seed).split(1)). conditions[i]
// must be kNullCondition in unconditional mode and a valid index otherwise.
// When a metric is supplied it is evaluated every eval_every steps and at the
// end; best_params tracks the minimum.
TrainResult train_dm(const ConstMatrixRef& data, const std::vector<int>& conditions, const ScoreNetShape& shape,
                     const NoiseSchedule& sched, const TrainConfig& cfg, const CheckpointMetric& metric = {});

// {trunk, embed_table, time_embed, schedule, train_config, step, loss_trace_path, ...}
io::Json checkpoint_to_json(const ScoreNetParams& params, const NoiseSchedule& sched, const TrainConfig& cfg,
                            std::size_t step, const std::string& loss_trace_path);
struct Checkpoint {
  ScoreNetParams params;
  NoiseSchedule schedule;
  TrainConfig train_config;
  std::size_t step = 0;
};
Checkpoint checkpoint_from_json(const io::Json& j);

// ---- sampling ----

enum class SamplerKind { euler_maruyama, dpm_solver };
std::string to_string(SamplerKind k);
SamplerKind sampler_kind_from_string(const std::string& s);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::euler_maruyama;
  int order = 1;  // dpm_solver only
  std::size_t steps = 1000;
  double t_end = 1e-3;

  void validate() const;
  std::string label() const;  // e.g. "em1000", "dpm2_50"
};

io::Json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const io::Json& j);

// Condition prior for ancestral sampling: either a K-simplex q̂(c) or the
// point mass on the null condition.
struct ConditionPrior {
  std::optional<Vector> probs;

  static ConditionPrior null() { return {}; }
  static ConditionPrior categorical(Vector p) { return {std::move(p)}; }
  static ConditionPrior point_mass(std::size_t k, std::size_t j);
  static ConditionPrior uniform(std::size_t k);
  void validate() const;
};

// ε̂ for a batch of rows at a common time t.
using EpsModel = std::function<Matrix(const ConstMatrixRef& x, double t, const std::vector<int>& conditions)>;

EpsModel network_model(const ScoreNetParams& params);
// ε*(x, t) = √(1 − ᾱ(t))·x, the exact predictor for data ~ N(0, I).
EpsModel standard_normal_oracle(const NoiseSchedule& sched);

struct Samples {
  Matrix x;
  std::vector<int> conditions;
};

// Ancestral sampling: c ~ prior, x_1 ~ N(0, I), then integrate from t = 1
// down to t_end on a uniform time grid. Each chain draws from its own stream
// rng.split(chain index), so the result does not depend on batching.
Samples sample(Rng& rng, const EpsModel& model, std::size_t data_dim, const NoiseSchedule& sched,
               const ConditionPrior& prior, std::size_t n, const SamplerConfig& scfg);
Samples sample(Rng& rng, const ScoreNetParams& params, const NoiseSchedule& sched, const ConditionPrior& prior,
               std::size_t n, const SamplerConfig& scfg);

// CSV rows dim_0..dim_{d-1},condition (−1 for the null condition).
void write_samples_csv(const std::string& path, const Samples& s);
Samples read_samples_csv(const std::string& path);

}  // namespace scdm::diffusion
