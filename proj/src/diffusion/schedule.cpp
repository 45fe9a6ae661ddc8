#include "scdm/diffusion.hpp"
#include "scdm/errors.hpp"

#include <cmath>

namespace scdm::diffusion {

void NoiseSchedule::validate() const {
  if (!(beta_min > 0.0)) throw ConfigError("diffusion.beta_min", "must be > 0");
  if (!(beta_max > beta_min)) throw ConfigError("diffusion.beta_max", "must exceed beta_min");
}

double alpha_bar(double t, const NoiseSchedule& sched) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error("alpha_bar: t must lie in [0, 1]");
  return std::exp(-sched.integral(t));
}

double half_log_snr(double t, const NoiseSchedule& sched) {
  // ½·log(ᾱ/(1−ᾱ)) = −½·log(expm1(∫β)), stable as t → 0.
  return -0.5 * std::log(std::expm1(sched.integral(t)));
}

double time_of_half_log_snr(double lambda, const NoiseSchedule& sched) {
  // ∫₀ᵗ β = log(1 + e^{−2λ}); solve ½Δβ·t² + β_min·t − L = 0.
  const double x = -2.0 * lambda;
  const double integral = x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double db = sched.beta_max - sched.beta_min;
  return 2.0 * integral / (sched.beta_min + std::sqrt(sched.beta_min * sched.beta_min + 2.0 * db * integral));
}

Vector perturb_with(const Vector& x0, const Vector& eps, double t, const NoiseSchedule& sched) {
  if (x0.size() != eps.size()) throw DimensionMismatch("perturb: x0/eps size");
  const double ab = alpha_bar(t, sched);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Perturbed perturb(Rng& rng, const Vector& x0, double t, const NoiseSchedule& sched) {
  if (!(t > 0.0 && t <= 1.0)) throw Error("perturb: t must lie in (0, 1]");
  Vector eps(x0.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
  Vector x_t = perturb_with(x0, eps, t, sched);
  return {std::move(x_t), std::move(eps)};
}

}  // namespace scdm::diffusion
