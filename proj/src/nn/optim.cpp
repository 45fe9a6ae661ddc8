#include "scdm/nn/optim.hpp"

#include "scdm/errors.hpp"

#include <cmath>

namespace scdm::nn {

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionMismatch("Adam::step: buffer size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
}

Sgd::Sgd(std::size_t n, SgdConfig cfg) : cfg_(cfg), velocity_(n, 0.0) {}

void Sgd::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != velocity_.size() || grad.size() != velocity_.size()) {
    throw DimensionMismatch("Sgd::step: buffer size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = cfg_.momentum * velocity_[i] + grad[i] + cfg_.weight_decay * params[i];
    params[i] -= cfg_.lr * velocity_[i];
  }
}

void ema_update(std::span<double> target, std::span<const double> source, double momentum) {
  if (target.size() != source.size()) throw DimensionMismatch("ema_update: size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = momentum * target[i] + (1.0 - momentum) * source[i];
  }
}

}  // namespace scdm::nn
