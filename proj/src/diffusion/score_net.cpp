#include "scdm/diffusion.hpp"
#include "scdm/errors.hpp"

#include <cmath>
#include <numeric>

namespace scdm::diffusion {
namespace {

Eigen::Index embed_row(const ScoreNetParams& p, int c) {
  if (c == kNullCondition) return static_cast<Eigen::Index>(p.k);
  if (c < 0 || static_cast<std::size_t>(c) >= p.k) {
    throw BadCondition("condition " + std::to_string(c) + " outside [0, " + std::to_string(p.k) + ")");
  }
  return c;
}

struct ForwardCache {
  nn::MlpTape time_tape;
  nn::MlpTape trunk_tape;
  std::vector<Eigen::Index> rows;
};

Matrix forward_impl(const ScoreNetParams& p, const ConstMatrixRef& x_t, const Vector& t,
                    const std::vector<int>& conditions, ForwardCache* cache) {
  const Eigen::Index b = x_t.rows();
  if (static_cast<std::size_t>(x_t.cols()) != p.data_dim) throw DimensionMismatch("eps_predict: data dim");
  if (t.size() != b || static_cast<Eigen::Index>(conditions.size()) != b) {
    throw DimensionMismatch("eps_predict: batch sizes of x_t, t, conditions differ");
  }
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) rows[static_cast<std::size_t>(i)] = embed_row(p, conditions[static_cast<std::size_t>(i)]);
  const Matrix temb = nn::forward(p.time_proj, time_features(p.frequencies, t), cache ? &cache->time_tape : nullptr);
  const auto d = static_cast<Eigen::Index>(p.data_dim);
  const auto de = static_cast<Eigen::Index>(p.embed_dim);
  Matrix input(b, d + de);
  input.leftCols(d) = x_t;
  for (Eigen::Index i = 0; i < b; ++i) {
    input.row(i).tail(de) = temb.row(i) + p.embed_table.row(rows[static_cast<std::size_t>(i)]);
  }
  if (cache) cache->rows = std::move(rows);
  return nn::forward(p.trunk, input, cache ? &cache->trunk_tape : nullptr);
}

}  // namespace

std::size_t ScoreNetParams::parameter_count() const {
  return trunk.parameter_count() + static_cast<std::size_t>(embed_table.size()) + time_proj.parameter_count();
}

bool ScoreNetParams::all_finite() const {
  return trunk.all_finite() && embed_table.allFinite() && time_proj.all_finite();
}

ScoreNetParams init_score_net(const ScoreNetShape& shape, Rng& rng, bool zero_last) {
  if (shape.data_dim == 0 || shape.embed_dim == 0 || shape.n_frequencies == 0) {
    throw ConfigError("diffusion", "data_dim, embed_dim and n_frequencies must be > 0");
  }
  ScoreNetParams p;
  p.k = shape.k;
  p.embed_dim = shape.embed_dim;
  p.data_dim = shape.data_dim;
  p.frequencies = Vector(static_cast<Eigen::Index>(shape.n_frequencies));
  for (std::size_t j = 0; j < shape.n_frequencies; ++j) {
    const double frac = shape.n_frequencies == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(shape.n_frequencies - 1);
    p.frequencies(static_cast<Eigen::Index>(j)) = shape.freq_min * std::pow(shape.freq_max / shape.freq_min, frac);
  }
  p.time_proj = Mlp::init({2 * shape.n_frequencies, shape.embed_dim}, rng);
  p.embed_table = Matrix(static_cast<Eigen::Index>(shape.k + 1), static_cast<Eigen::Index>(shape.embed_dim));
  for (Eigen::Index i = 0; i < p.embed_table.rows(); ++i)
    for (Eigen::Index j = 0; j < p.embed_table.cols(); ++j) p.embed_table(i, j) = rng.normal();
  std::vector<std::size_t> dims{shape.data_dim + shape.embed_dim};
  dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
  dims.push_back(shape.data_dim);
  p.trunk = Mlp::init(dims, rng, zero_last);
  return p;
}

Matrix time_features(const Vector& frequencies, const Vector& t) {
  const Eigen::Index f = frequencies.size();
  Matrix out(t.size(), 2 * f);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    for (Eigen::Index j = 0; j < f; ++j) {
      const double a = frequencies(j) * t(i);
      out(i, 2 * j) = std::sin(a);
      out(i, 2 * j + 1) = std::cos(a);
    }
  }
  return out;
}

Matrix eps_predict(const ScoreNetParams& params, const ConstMatrixRef& x_t, const Vector& t,
                   const std::vector<int>& conditions) {
  return forward_impl(params, x_t, t, conditions, nullptr);
}

Vector eps_predict(const ScoreNetParams& params, const Vector& x_t, double t, int condition) {
  const Matrix out = forward_impl(params, x_t.transpose(), Vector::Constant(1, t), {condition}, nullptr);
  return out.row(0).transpose();
}

ScoreNetGrads::ScoreNetGrads(const ScoreNetParams& p)
    : trunk(p.trunk.parameter_count(), 0.0),
      embed(static_cast<std::size_t>(p.embed_table.size()), 0.0),
      time(p.time_proj.parameter_count(), 0.0) {}

double dsm_loss(const ScoreNetParams& params, const FrozenBatch& batch, const NoiseSchedule& sched,
                ScoreNetGrads* grads) {
  const Eigen::Index b = batch.x0.rows();
  if (b == 0) return 0.0;
  Matrix x_t(b, batch.x0.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    const double ab = alpha_bar(batch.t(i), sched);
    x_t.row(i) = std::sqrt(ab) * batch.x0.row(i) + std::sqrt(1.0 - ab) * batch.eps.row(i);
  }
  ForwardCache cache;
  const Matrix pred = forward_impl(params, x_t, batch.t, batch.conditions, grads ? &cache : nullptr);
  const Matrix resid = pred - batch.eps;
  const double loss = resid.squaredNorm() / static_cast<double>(b);
  if (!grads) return loss;

  const Matrix d_pred = (2.0 / static_cast<double>(b)) * resid;
  const Matrix d_input = nn::backward(params.trunk, cache.trunk_tape, d_pred, grads->trunk);
  const auto de = static_cast<Eigen::Index>(params.embed_dim);
  const Matrix d_cond = d_input.rightCols(de);
  Eigen::Map<Matrix> d_embed(grads->embed.data(), params.embed_table.rows(), params.embed_table.cols());
  for (Eigen::Index i = 0; i < b; ++i) d_embed.row(cache.rows[static_cast<std::size_t>(i)]) += d_cond.row(i);
  nn::backward(params.time_proj, cache.time_tape, d_cond, grads->time);
  return loss;
}

io::Json checkpoint_to_json(const ScoreNetParams& params, const NoiseSchedule& sched, const TrainConfig& cfg,
                            std::size_t step, const std::string& loss_trace_path) {
  return {{"trunk", nn::mlp_to_json(params.trunk)},
          {"embed_table", io::matrix_to_json(params.embed_table)},
          {"time_embed", {{"frequencies", io::vector_to_json(params.frequencies)},
                          {"projection", nn::mlp_to_json(params.time_proj)}}},
          {"schedule", {{"beta_min", sched.beta_min}, {"beta_max", sched.beta_max}}},
          {"train_config", to_json(cfg)},
          {"step", step},
          {"loss_trace_path", loss_trace_path},
          {"k", params.k},
          {"embed_dim", params.embed_dim},
          {"data_dim", params.data_dim}};
}

Checkpoint checkpoint_from_json(const io::Json& j) {
  Checkpoint c;
  c.params.trunk = nn::mlp_from_json(j.at("trunk"));
  c.params.embed_table = io::matrix_from_json(j.at("embed_table"));
  c.params.frequencies = io::vector_from_json(j.at("time_embed").at("frequencies"));
  c.params.time_proj = nn::mlp_from_json(j.at("time_embed").at("projection"));
  c.params.k = j.at("k").get<std::size_t>();
  c.params.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.params.data_dim = j.at("data_dim").get<std::size_t>();
  c.schedule.beta_min = j.at("schedule").at("beta_min").get<double>();
  c.schedule.beta_max = j.at("schedule").at("beta_max").get<double>();
  c.train_config = train_config_from_json(j.at("train_config"));
  c.step = j.at("step").get<std::size_t>();
  if (static_cast<std::size_t>(c.params.embed_table.rows()) != c.params.k + 1 ||
      static_cast<std::size_t>(c.params.embed_table.cols()) != c.params.embed_dim ||
      c.params.trunk.in_dim() != c.params.data_dim + c.params.embed_dim ||
      c.params.trunk.out_dim() != c.params.data_dim || c.params.time_proj.out_dim() != c.params.embed_dim ||
      c.params.time_proj.in_dim() != 2 * static_cast<std::size_t>(c.params.frequencies.size())) {
    throw IoError("diffusion checkpoint: inconsistent shapes");
  }
  return c;
}

}  // namespace scdm::diffusion
