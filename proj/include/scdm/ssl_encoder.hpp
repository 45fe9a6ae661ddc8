#pragma once

#include "scdm/io.hpp"
#include "scdm/nn/mlp.hpp"
#include "scdm/nn/optim.hpp"
#include "scdm/numkit/matrix.hpp"
#include "scdm/synthdata.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace scdm::ssl {

using nn::Mlp;
using numkit::ConstMatrixRef;
using numkit::Matrix;

enum class ContrastiveMode { in_batch, momentum_queue };

std::string to_string(ContrastiveMode m);
ContrastiveMode contrastive_mode_from_string(const std::string& s);

struct ContrastiveConfig {
  std::size_t feature_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  double temperature = 0.2;
  ContrastiveMode mode = ContrastiveMode::momentum_queue;
  std::size_t queue_size = 1024;
  double encoder_momentum = 0.999;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 0.06;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

io::Json to_json(const ContrastiveConfig& cfg);
ContrastiveConfig contrastive_config_from_json(const io::Json& j);

// Row-wise L2 normalization. A zero row maps to the first basis vector.
Matrix normalize_rows(const ConstMatrixRef& z);
// Vector-Jacobian product of normalize_rows at z (zero rows get zero grad).
Matrix normalize_rows_backward(const ConstMatrixRef& z, const ConstMatrixRef& grad_y);

// Unit-norm features for each input row.
Matrix encode(const Mlp& params, const ConstMatrixRef& x);

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_q;
};

// Mean over rows of −log softmax of the positive logit q_i·k_i/τ against
// q_i·n_m/τ for every row n_m of `negatives` (M may be 0).
InfoNceResult info_nce(const ConstMatrixRef& q, const ConstMatrixRef& k, const ConstMatrixRef& negatives,
                       double temperature);

struct InBatchResult {
  double loss = 0.0;
  Matrix grad_q;
  Matrix grad_k;
};

// Symmetrized in-batch InfoNCE: row i of q is scored against every row of k
// (positive k_i, negatives k_j, j ≠ i) and vice versa; the two directions are
// averaged.
InBatchResult info_nce_in_batch(const ConstMatrixRef& q, const ConstMatrixRef& k, double temperature);

// FIFO ring of unit-norm key features.
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, std::size_t dim);

  void push(const ConstMatrixRef& keys);
  // Stored rows, oldest first.
  Matrix contents() const;
  std::size_t size() const noexcept { return count_; }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  Matrix buffer_;
  std::size_t cursor_ = 0;
  std::size_t count_ = 0;
};

// Loss and parameter gradient of the contrastive objective for one batch of
// paired views. In momentum_queue mode `key` encodes view_k without gradient
// and `negatives` supplies the queue; in in_batch mode `key` is ignored and
// both views run through `online`.
struct EncoderLoss {
  double loss = 0.0;
  nn::AlignedBuffer grad;  // layout of online.values()
  Matrix keys;               // normalized key features of view_k
};

EncoderLoss encoder_loss(const Mlp& online, const Mlp& key, const ConstMatrixRef& view_q,
                         const ConstMatrixRef& view_k, const ConstMatrixRef& negatives, const ContrastiveConfig& cfg);

class ContrastiveTrainer {
 public:
  ContrastiveTrainer(const synth::PointSet& data, synth::AugmentationSpec aug, ContrastiveConfig cfg);

  // One SGD step on the given rows; returns the batch loss. Throws
  // NonFiniteLoss carrying the global step index.
  double step(const std::vector<std::size_t>& rows);
  // One pass over a fresh permutation in full batches; returns mean loss.
  double run_epoch();

  const Mlp& online() const noexcept { return online_; }
  const Mlp& key() const noexcept { return key_; }
  const NegativeQueue& queue() const noexcept { return queue_; }
  std::size_t steps_taken() const noexcept { return steps_; }
  std::size_t batch_rows() const noexcept { return batch_; }

 private:
  const synth::PointSet& data_;
  synth::AugmentationSpec aug_;
  ContrastiveConfig cfg_;
  numkit::Rng rng_;
  Mlp online_;
  Mlp key_;
  nn::Sgd opt_;
  NegativeQueue queue_;
  std::size_t batch_;
  std::size_t steps_ = 0;
};

struct EncoderTrainResult {
  Mlp params;
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
};

using EpochLogger = std::function<void(std::size_t epoch, double loss)>;

EncoderTrainResult train_encoder(const synth::PointSet& data, const synth::AugmentationSpec& aug,
                                 const ContrastiveConfig& cfg, const EpochLogger& log = {});

// Initial online parameters train_encoder starts from for this config.
Mlp initial_encoder(std::size_t input_dim, const ContrastiveConfig& cfg);

// {layer_dims, activation, weights: [{W, b}...], config, final_loss}
io::Json encoder_checkpoint(const EncoderTrainResult& result, const ContrastiveConfig& cfg);
Mlp encoder_from_checkpoint(const io::Json& j);

}  // namespace scdm::ssl
