#pragma once

#include "scdm/io.hpp"
#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace scdm::nn {

using numkit::ConstMatrixRef;
using numkit::Matrix;

// SiLU (x·sigmoid(x)) on every hidden layer; the output layer is affine.
enum class Activation { silu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Eigen's vectorized reductions peel differently depending on the start
// address, so buffers that Eigen maps need a fixed alignment for results to be
// reproducible across allocations.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Weight/bias stack of a feed-forward network. Parameters live in one flat
// buffer (per layer: row-major out×in weight, then out biases) so optimizers
// and EMA updates act on a single contiguous span.
class Mlp {
 public:
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;
  using BiasMap = Eigen::Map<Eigen::RowVectorXd>;
  using ConstBiasMap = Eigen::Map<const Eigen::RowVectorXd>;

  Mlp() = default;
  // All-zero parameters.
  explicit Mlp(std::vector<std::size_t> layer_dims, Activation act = Activation::silu);

  // LeCun-normal weights (std 1/√fan_in), zero biases. With zero_last the
  // output layer starts at exactly zero.
  static Mlp init(std::vector<std::size_t> layer_dims, numkit::Rng& rng, bool zero_last = false,
                  Activation act = Activation::silu);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t layer_count() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  Activation activation() const noexcept { return act_; }
  std::size_t parameter_count() const noexcept { return values_.size(); }

  WeightMap weight(std::size_t layer);
  ConstWeightMap weight(std::size_t layer) const;
  BiasMap bias(std::size_t layer);
  ConstBiasMap bias(std::size_t layer) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  bool all_finite() const;
  bool operator==(const Mlp&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  // Fixed base alignment keeps Eigen's vectorized reductions in the same
  // order on every allocation, so results are bitwise reproducible.
  AlignedBuffer values_;
  Activation act_ = Activation::silu;
};

// Per-layer activations saved by forward() for backward().
struct MlpTape {
  std::vector<Matrix> inputs;  // input to layer l (post-activation of l-1)
  std::vector<Matrix> pre;     // pre-activation of layer l
};

// Y = f(X) for a batch of rows. When tape is non-null it is filled for
// backward(). Throws DimensionMismatch if X has the wrong width.
Matrix forward(const Mlp& net, const ConstMatrixRef& x, MlpTape* tape = nullptr);

// Back-propagates dL/dY. Adds dL/dθ into grad (same layout as net.values())
// and returns dL/dX.
Matrix backward(const Mlp& net, const MlpTape& tape, const ConstMatrixRef& grad_out,
                std::span<double> grad);

// {layer_dims, activation, weights: [{W, b}, ...]}
io::Json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const io::Json& j);

}  // namespace scdm::nn
