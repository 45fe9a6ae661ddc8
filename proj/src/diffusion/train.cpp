#include "scdm/diffusion.hpp"
#include "scdm/errors.hpp"

#include <cmath>

namespace scdm::diffusion {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::unconditional:
      return "unconditional";
    case TrainMode::label_conditional:
      return "label_conditional";
    case TrainMode::cluster_conditional:
      return "cluster_conditional";
  }
  return "unconditional";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "unconditional") return TrainMode::unconditional;
  if (s == "label_conditional") return TrainMode::label_conditional;
  if (s == "cluster_conditional") return TrainMode::cluster_conditional;
  throw ConfigError("mode", "unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("diffusion.batch_size", "must be > 0");
  if (!(lr > 0.0)) throw ConfigError("diffusion.lr", "must be > 0");
  if (!(t_min_train > 0.0 && t_min_train < 1.0)) throw ConfigError("diffusion.t_min_train", "must lie in (0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("diffusion.adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("diffusion.adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("diffusion.adam_eps", "must be > 0");
}

io::Json to_json(const TrainConfig& cfg) {
  return {{"mode", to_string(cfg.mode)},     {"steps", cfg.steps},         {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},                    {"adam_beta1", cfg.adam_beta1}, {"adam_beta2", cfg.adam_beta2},
          {"adam_eps", cfg.adam_eps},        {"t_min_train", cfg.t_min_train}, {"seed", cfg.seed},
          {"eval_every", cfg.eval_every}};
}

TrainConfig train_config_from_json(const io::Json& j) {
  TrainConfig c;
  c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  c.steps = j.at("steps").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.t_min_train = j.at("t_min_train").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.value("eval_every", std::size_t{0});
  return c;
}

DsmOptimizer::DsmOptimizer(const ScoreNetParams& params, const TrainConfig& cfg) {
  const nn::AdamConfig a{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  trunk_ = nn::Adam(params.trunk.parameter_count(), a);
  embed_ = nn::Adam(static_cast<std::size_t>(params.embed_table.size()), a);
  time_ = nn::Adam(params.time_proj.parameter_count(), a);
}

void DsmOptimizer::step(ScoreNetParams& params, const ScoreNetGrads& grads) {
  trunk_.step(params.trunk.values(), grads.trunk);
  embed_.step(std::span<double>(params.embed_table.data(), static_cast<std::size_t>(params.embed_table.size())),
              grads.embed);
  time_.step(params.time_proj.values(), grads.time);
}

double dsm_step(Rng& rng, ScoreNetParams& params, const ConstMatrixRef& x0, const std::vector<int>& conditions,
                const NoiseSchedule& sched, const TrainConfig& cfg, DsmOptimizer& opt, std::size_t step_index) {
  FrozenBatch batch;
  batch.x0 = x0;
  batch.conditions = conditions;
  batch.t = Vector(x0.rows());
  batch.eps = Matrix(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    batch.t(i) = cfg.t_min_train + (1.0 - cfg.t_min_train) * rng.uniform();
    for (Eigen::Index j = 0; j < x0.cols(); ++j) batch.eps(i, j) = rng.normal();
  }
  ScoreNetGrads grads(params);
  const double loss = dsm_loss(params, batch, sched, &grads);
  if (!std::isfinite(loss)) throw NonFiniteLoss("denoising score-matching loss is not finite", step_index);
  opt.step(params, grads);
  return loss;
}

TrainResult train_dm(const ConstMatrixRef& data, const std::vector<int>& conditions, const ScoreNetShape& shape,
                     const NoiseSchedule& sched, const TrainConfig& cfg, const CheckpointMetric& metric) {
  cfg.validate();
  sched.validate();
  if (static_cast<Eigen::Index>(conditions.size()) != data.rows()) {
    throw DimensionMismatch("train_dm: one condition per data row required");
  }
  if (data.rows() == 0) throw Error("train_dm: empty dataset");
  if (static_cast<std::size_t>(data.cols()) != shape.data_dim) throw DimensionMismatch("train_dm: data dim");
  for (int c : conditions) {
    if (cfg.mode == TrainMode::unconditional) {
      if (c != kNullCondition) throw BadCondition("train_dm: unconditional mode requires null conditions");
    } else if (c < 0 || static_cast<std::size_t>(c) >= shape.k) {
      throw BadCondition("train_dm: condition " + std::to_string(c) + " outside [0, " + std::to_string(shape.k) + ")");
    }
  }

  Rng init_rng = Rng(cfg.seed).split(1);
  Rng rng = Rng(cfg.seed).split(2);
  TrainResult out;
  out.final_params = init_score_net(shape, init_rng);
  DsmOptimizer opt(out.final_params, cfg);
  out.loss_trace.reserve(cfg.steps);

  bool have_best = false;
  auto evaluate = [&](std::size_t step) {
    if (!metric) return;
    const double m = metric(out.final_params, step);
    out.eval_trace.emplace_back(step, m);
    if (!have_best || m < out.best_metric) {
      out.best_metric = m;
      out.best_step = step;
      out.best_params = out.final_params;
      have_best = true;
    }
  };

  const auto b = static_cast<Eigen::Index>(cfg.batch_size);
  Matrix x0(b, data.cols());
  std::vector<int> cond(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const std::size_t row = rng.uniform_index(static_cast<std::size_t>(data.rows()));
      x0.row(i) = data.row(static_cast<Eigen::Index>(row));
      cond[static_cast<std::size_t>(i)] = conditions[row];
    }
    out.loss_trace.push_back(dsm_step(rng, out.final_params, x0, cond, sched, cfg, opt, step));
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) evaluate(step + 1);
  }
  evaluate(cfg.steps);
  if (!have_best) {
    out.best_params = out.final_params;
    out.best_step = cfg.steps;
  }
  return out;
}

}  // namespace scdm::diffusion
