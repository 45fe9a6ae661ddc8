#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scdm::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter buffer.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg);

  void step(std::span<double> params, std::span<const double> grad);

  std::size_t steps_taken() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

struct SgdConfig {
  double lr = 0.06;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Heavy-ball SGD with L2 weight decay folded into the gradient:
// v ← μ·v + (g + λ·θ), θ ← θ − lr·v.
class Sgd {
 public:
  Sgd() = default;
  Sgd(std::size_t n, SgdConfig cfg);

  void step(std::span<double> params, std::span<const double> grad);

 private:
  SgdConfig cfg_;
  std::vector<double> velocity_;
};

// target ← m·target + (1 − m)·source, elementwise.
void ema_update(std::span<double> target, std::span<const double> source, double momentum);

}  // namespace scdm::nn
