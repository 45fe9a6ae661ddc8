#include "scdm/diffusion.hpp"
#include "scdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace scdm::diffusion {

std::string to_string(SamplerKind k) { return k == SamplerKind::euler_maruyama ? "euler_maruyama" : "dpm_solver"; }

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "euler_maruyama") return SamplerKind::euler_maruyama;
  if (s == "dpm_solver") return SamplerKind::dpm_solver;
  throw ConfigError("samplers.kind", "unknown sampler '" + s + "'");
}

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("samplers.steps", "must be ≥ 1");
  if (!(t_end > 0.0 && t_end < 1.0)) throw ConfigError("samplers.t_end", "must lie in (0, 1)");
  if (kind == SamplerKind::dpm_solver && order != 1 && order != 2) {
    throw ConfigError("samplers.order", "dpm_solver order must be 1 or 2");
  }
}

std::string SamplerConfig::label() const {
  if (kind == SamplerKind::euler_maruyama) return "em" + std::to_string(steps);
  return "dpm" + std::to_string(order) + "_" + std::to_string(steps);
}

io::Json to_json(const SamplerConfig& cfg) {
  return {{"kind", to_string(cfg.kind)}, {"order", cfg.order}, {"steps", cfg.steps}, {"t_end", cfg.t_end}};
}

SamplerConfig sampler_config_from_json(const io::Json& j) {
  SamplerConfig c;
  c.kind = sampler_kind_from_string(j.at("kind").get<std::string>());
  c.order = j.value("order", 1);
  c.steps = j.at("steps").get<std::size_t>();
  c.t_end = j.value("t_end", 1e-3);
  return c;
}

ConditionPrior ConditionPrior::point_mass(std::size_t k, std::size_t j) {
  Vector p = Vector::Zero(static_cast<Eigen::Index>(k));
  p(static_cast<Eigen::Index>(j)) = 1.0;
  return categorical(std::move(p));
}

ConditionPrior ConditionPrior::uniform(std::size_t k) {
  return categorical(Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k)));
}

void ConditionPrior::validate() const {
  if (!probs) return;
  if (probs->size() == 0) throw BadWeights("condition prior is empty");
  if ((probs->array() < 0.0).any() || !probs->allFinite()) throw BadWeights("condition prior has invalid entries");
  if (std::abs(probs->sum() - 1.0) > 1e-9) throw BadWeights("condition prior does not sum to 1");
}

EpsModel network_model(const ScoreNetParams& params) {
  return [&params](const ConstMatrixRef& x, double t, const std::vector<int>& conditions) {
    return eps_predict(params, x, Vector::Constant(x.rows(), t), conditions);
  };
}

EpsModel standard_normal_oracle(const NoiseSchedule& sched) {
  return [sched](const ConstMatrixRef& x, double t, const std::vector<int>&) {
    return Matrix(std::sqrt(1.0 - alpha_bar(t, sched)) * x);
  };
}

namespace {

int draw_condition(Rng& rng, const ConditionPrior& prior) {
  if (!prior.probs) return kNullCondition;
  const Vector& p = *prior.probs;
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) <= 0.0) continue;
    last_positive = static_cast<int>(j);
    acc += p(j);
    if (u < acc) return static_cast<int>(j);
  }
  return last_positive;
}

void fill_noise(std::vector<Rng>& chains, std::size_t first, Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Rng& r = chains[first + static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = r.normal();
  }
}

}  // namespace

Samples sample(Rng& rng, const EpsModel& model, std::size_t data_dim, const NoiseSchedule& sched,
               const ConditionPrior& prior, std::size_t n, const SamplerConfig& scfg) {
  scfg.validate();
  sched.validate();
  prior.validate();
  const Rng base(rng.next_u64());
  std::vector<Rng> chains;
  chains.reserve(n);
  Samples out;
  out.x = Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data_dim));
  out.conditions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    chains.push_back(base.split(i));
    out.conditions[i] = draw_condition(chains.back(), prior);
    for (std::size_t j = 0; j < data_dim; ++j) {
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chains.back().normal();
    }
  }

  const double dt = (1.0 - scfg.t_end) / static_cast<double>(scfg.steps);
  constexpr std::size_t kBlock = 2048;
  for (std::size_t first = 0; first < n; first += kBlock) {
    const std::size_t rows = std::min(kBlock, n - first);
    Matrix x = out.x.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(rows));
    const std::vector<int> cond(out.conditions.begin() + static_cast<std::ptrdiff_t>(first),
                                out.conditions.begin() + static_cast<std::ptrdiff_t>(first + rows));
    Matrix z(x.rows(), x.cols());
    for (std::size_t s = 0; s < scfg.steps; ++s) {
      const double t = 1.0 - static_cast<double>(s) * dt;
      const double t_next = s + 1 == scfg.steps ? scfg.t_end : t - dt;
      if (scfg.kind == SamplerKind::euler_maruyama) {
        // Reverse SDE dx = [−½βx − β·score]dt + √β dW̄ stepped backwards in time,
        // with score = −ε̂/σ(t).
        const double beta = sched.beta(t);
        const double sigma = std::sqrt(1.0 - alpha_bar(t, sched));
        const double h = t - t_next;
        const Matrix eps = model(x, t, cond);
        fill_noise(chains, first, z);
        x = x + (0.5 * beta * h) * x - (beta * h / sigma) * eps + std::sqrt(beta * h) * z;
      } else {
        const double ab_t = alpha_bar(t, sched);
        const double ab_n = alpha_bar(t_next, sched);
        const double alpha_t = std::sqrt(ab_t);
        const double alpha_n = std::sqrt(ab_n);
        const double sigma_n = std::sqrt(1.0 - ab_n);
        const double lam_t = half_log_snr(t, sched);
        const double lam_n = half_log_snr(t_next, sched);
        const double h = lam_n - lam_t;
        const Matrix eps = model(x, t, cond);
        if (scfg.order == 1) {
          x = (alpha_n / alpha_t) * x - (sigma_n * std::expm1(h)) * eps;
        } else {
          const double t_mid = time_of_half_log_snr(lam_t + 0.5 * h, sched);
          const double ab_m = alpha_bar(t_mid, sched);
          const Matrix u = (std::sqrt(ab_m) / alpha_t) * x - (std::sqrt(1.0 - ab_m) * std::expm1(0.5 * h)) * eps;
          const Matrix eps_mid = model(u, t_mid, cond);
          x = (alpha_n / alpha_t) * x - (sigma_n * std::expm1(h)) * eps_mid;
        }
      }
    }
    out.x.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(rows)) = x;
  }
  return out;
}

Samples sample(Rng& rng, const ScoreNetParams& params, const NoiseSchedule& sched, const ConditionPrior& prior,
               std::size_t n, const SamplerConfig& scfg) {
  if (prior.probs && static_cast<std::size_t>(prior.probs->size()) != params.k) {
    throw BadCondition("sample: prior has " + std::to_string(prior.probs->size()) + " entries, model has K = " +
                       std::to_string(params.k));
  }
  return sample(rng, network_model(params), params.data_dim, sched, prior, n, scfg);
}

void write_samples_csv(const std::string& path, const Samples& s) {
  std::string text;
  for (Eigen::Index j = 0; j < s.x.cols(); ++j) text += "dim_" + std::to_string(j) + ",";
  text += "condition\n";
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) text += io::format_double(s.x(i, j)) + ",";
    text += std::to_string(s.conditions[static_cast<std::size_t>(i)]) + "\n";
  }
  io::write_text(path, text);
}

Samples read_samples_csv(const std::string& path) {
  const io::CsvTable t = io::read_csv(path);
  if (t.header.empty() || t.header.back() != "condition") throw IoError(path + ": expected trailing 'condition' column");
  const std::size_t d = t.header.size() - 1;
  Samples s;
  s.x = Matrix(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  s.conditions.resize(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = io::parse_double(t.rows[i][j]);
    }
    s.conditions[i] = static_cast<int>(io::parse_int(t.rows[i][d]));
  }
  return s;
}

}  // namespace scdm::diffusion
