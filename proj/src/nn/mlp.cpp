#include "scdm/nn/mlp.hpp"

#include "scdm/errors.hpp"

#include <algorithm>
#include <cmath>

namespace scdm::nn {
namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::silu:
      return "silu";
  }
  return "silu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::silu;
  throw Error("unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation act) : dims_(std::move(layer_dims)), act_(act) {
  if (dims_.size() < 2) throw DimensionMismatch("Mlp: need at least input and output dims");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  values_.assign(total, 0.0);
}

Mlp Mlp::init(std::vector<std::size_t> layer_dims, numkit::Rng& rng, bool zero_last, Activation act) {
  Mlp net(std::move(layer_dims), act);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    if (zero_last && l + 1 == net.layer_count()) break;
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
    auto w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.normal();
  }
  return net;
}

Mlp::WeightMap Mlp::weight(std::size_t layer) {
  return WeightMap(values_.data() + offsets_[layer], static_cast<Eigen::Index>(dims_[layer + 1]),
                   static_cast<Eigen::Index>(dims_[layer]));
}

Mlp::ConstWeightMap Mlp::weight(std::size_t layer) const {
  return ConstWeightMap(values_.data() + offsets_[layer], static_cast<Eigen::Index>(dims_[layer + 1]),
                        static_cast<Eigen::Index>(dims_[layer]));
}

Mlp::BiasMap Mlp::bias(std::size_t layer) {
  return BiasMap(values_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1],
                 static_cast<Eigen::Index>(dims_[layer + 1]));
}

Mlp::ConstBiasMap Mlp::bias(std::size_t layer) const {
  return ConstBiasMap(values_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1],
                      static_cast<Eigen::Index>(dims_[layer + 1]));
}

bool Mlp::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Matrix forward(const Mlp& net, const ConstMatrixRef& x, MlpTape* tape) {
  if (static_cast<std::size_t>(x.cols()) != net.in_dim()) {
    throw DimensionMismatch("mlp forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                            std::to_string(net.in_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = x;
  const std::size_t layers = net.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = h * net.weight(l).transpose();
    z.rowwise() += net.bias(l);
    if (tape) tape->inputs.push_back(std::move(h));
    if (l + 1 == layers) {
      if (tape) tape->pre.push_back(z);
      return z;
    }
    h = z.unaryExpr([](double v) { return v * sigmoid(v); });
    if (tape) tape->pre.push_back(std::move(z));
  }
  return h;
}

Matrix backward(const Mlp& net, const MlpTape& tape, const ConstMatrixRef& grad_out, std::span<double> grad) {
  if (grad.size() != net.parameter_count()) throw DimensionMismatch("mlp backward: grad buffer size");
  const std::size_t layers = net.layer_count();
  Matrix delta = grad_out;
  for (std::size_t li = layers; li-- > 0;) {
    if (li + 1 < layers) {
      const Matrix& z = tape.pre[li];
      delta = delta.cwiseProduct(z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      }));
    }
    const std::size_t out = net.layer_dims()[li + 1];
    const std::size_t in = net.layer_dims()[li];
    Eigen::Map<Matrix> gw(grad.data() + net.weight_offset(li), static_cast<Eigen::Index>(out),
                          static_cast<Eigen::Index>(in));
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + net.weight_offset(li) + in * out,
                                      static_cast<Eigen::Index>(out));
    gw.noalias() += delta.transpose() * tape.inputs[li];
    gb += delta.colwise().sum();
    delta = delta * net.weight(li);
  }
  return delta;
}

}  // namespace scdm::nn
