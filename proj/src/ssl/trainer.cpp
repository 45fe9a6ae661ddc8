#include "scdm/errors.hpp"
#include "scdm/ssl_encoder.hpp"

#include <cmath>
#include <numeric>

namespace scdm::ssl {

std::string to_string(ContrastiveMode m) {
  return m == ContrastiveMode::in_batch ? "in_batch" : "momentum_queue";
}

ContrastiveMode contrastive_mode_from_string(const std::string& s) {
  if (s == "in_batch") return ContrastiveMode::in_batch;
  if (s == "momentum_queue") return ContrastiveMode::momentum_queue;
  throw ConfigError("ssl.mode", "unknown contrastive mode '" + s + "'");
}

void ContrastiveConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("ssl.feature_dim", "must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("ssl.temperature", "must be > 0");
  if (batch_size == 0) throw ConfigError("ssl.batch_size", "must be > 0");
  if (!(encoder_momentum >= 0.0 && encoder_momentum < 1.0)) {
    throw ConfigError("ssl.encoder_momentum", "must lie in [0, 1)");
  }
  if (mode == ContrastiveMode::momentum_queue && (queue_size == 0 || queue_size % batch_size != 0)) {
    throw ConfigError("ssl.queue_size", "must be a positive multiple of batch_size in momentum_queue mode");
  }
  if (!(lr > 0.0)) throw ConfigError("ssl.lr", "must be > 0");
}

Mlp initial_encoder(std::size_t input_dim, const ContrastiveConfig& cfg) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.feature_dim);
  numkit::Rng init_rng = numkit::Rng(cfg.seed).split(1);
  return Mlp::init(dims, init_rng);
}

ContrastiveTrainer::ContrastiveTrainer(const synth::PointSet& data, synth::AugmentationSpec aug,
                                       ContrastiveConfig cfg)
    : data_(data),
      aug_(aug),
      cfg_(std::move(cfg)),
      rng_(numkit::Rng(cfg_.seed).split(2)),
      online_(initial_encoder(data.dim(), cfg_)),
      key_(online_),
      opt_(online_.parameter_count(), nn::SgdConfig{cfg_.lr, cfg_.sgd_momentum, cfg_.weight_decay}),
      queue_(cfg_.mode == ContrastiveMode::momentum_queue ? cfg_.queue_size : 0, cfg_.feature_dim),
      batch_(std::min(cfg_.batch_size, data.size())) {
  cfg_.validate();
  aug_.validate(data);
  if (data.size() == 0) throw Error("train_encoder: empty dataset");
}

double ContrastiveTrainer::step(const std::vector<std::size_t>& rows) {
  const Matrix view_q = synth::augment_rows(rng_, data_, rows, aug_);
  const Matrix view_k = synth::augment_rows(rng_, data_, rows, aug_);
  const bool momentum = cfg_.mode == ContrastiveMode::momentum_queue;
  const Matrix negatives = momentum ? queue_.contents() : Matrix(0, static_cast<Eigen::Index>(cfg_.feature_dim));
  EncoderLoss l = encoder_loss(online_, key_, view_q, view_k, negatives, cfg_);
  if (!std::isfinite(l.loss)) throw NonFiniteLoss("contrastive loss is not finite", steps_);
  opt_.step(online_.values(), l.grad);
  if (momentum) {
    nn::ema_update(key_.values(), online_.values(), cfg_.encoder_momentum);
    queue_.push(l.keys);
  }
  ++steps_;
  return l.loss;
}

double ContrastiveTrainer::run_epoch() {
  std::vector<std::size_t> perm(data_.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng_.uniform_index(i)]);
  const std::size_t batches = perm.size() / batch_;
  double total = 0.0;
  std::vector<std::size_t> rows(batch_);
  for (std::size_t b = 0; b < batches; ++b) {
    std::copy(perm.begin() + static_cast<std::ptrdiff_t>(b * batch_),
              perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_), rows.begin());
    total += step(rows);
  }
  return total / static_cast<double>(batches);
}

EncoderTrainResult train_encoder(const synth::PointSet& data, const synth::AugmentationSpec& aug,
                                 const ContrastiveConfig& cfg, const EpochLogger& log) {
  ContrastiveTrainer trainer(data, aug, cfg);
  EncoderTrainResult out;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = trainer.run_epoch();
    out.epoch_loss.push_back(loss);
    if (log) log(e, loss);
  }
  out.params = trainer.online();
  out.final_loss = out.epoch_loss.empty() ? 0.0 : out.epoch_loss.back();
  return out;
}

io::Json to_json(const ContrastiveConfig& cfg) {
  return {{"feature_dim", cfg.feature_dim},
          {"hidden", cfg.hidden},
          {"temperature", cfg.temperature},
          {"mode", to_string(cfg.mode)},
          {"queue_size", cfg.queue_size},
          {"encoder_momentum", cfg.encoder_momentum},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"sgd_momentum", cfg.sgd_momentum},
          {"weight_decay", cfg.weight_decay},
          {"seed", cfg.seed}};
}

ContrastiveConfig contrastive_config_from_json(const io::Json& j) {
  ContrastiveConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.temperature = j.at("temperature").get<double>();
  c.mode = contrastive_mode_from_string(j.at("mode").get<std::string>());
  c.queue_size = j.at("queue_size").get<std::size_t>();
  c.encoder_momentum = j.at("encoder_momentum").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.sgd_momentum = j.at("sgd_momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

io::Json encoder_checkpoint(const EncoderTrainResult& result, const ContrastiveConfig& cfg) {
  io::Json j = nn::mlp_to_json(result.params);
  j["config"] = to_json(cfg);
  j["final_loss"] = result.final_loss;
  j["epoch_loss"] = result.epoch_loss;
  return j;
}

Mlp encoder_from_checkpoint(const io::Json& j) { return nn::mlp_from_json(j); }

}  // namespace scdm::ssl
