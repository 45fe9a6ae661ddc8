#include "scdm/numkit/rng.hpp"

#include "scdm/errors.hpp"

#include <cmath>
#include <numbers>

namespace scdm::numkit {
namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  return mix64(state);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw Error("uniform_index: empty range");
  // Lemire's nearly-divisionless rejection.
  const std::uint64_t range = n;
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t key) const {
  std::uint64_t sm = seed_ ^ mix64(key + 0x632be59bd9b4e019ULL);
  return Rng(splitmix64(sm));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::string_view axis_value) {
  char le[8];
  for (int i = 0; i < 8; ++i) le[i] = static_cast<char>((master >> (8 * i)) & 0xff);
  std::uint64_t h = fnv1a64(std::string_view(le, 8));
  h = fnv1a64(stage, h);
  const char sep = '\0';
  h = fnv1a64(std::string_view(&sep, 1), h);
  h = fnv1a64(axis_value, h);
  return mix64(h);
}

Matrix gauss_sample(Rng& rng, const Vector& mean, const ConstMatrixRef& chol_cov, std::size_t n) {
  const Eigen::Index d = mean.size();
  if (chol_cov.rows() != d || chol_cov.cols() != d) {
    throw DimensionMismatch("gauss_sample: chol_cov must be d×d");
  }
  Matrix out(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    out.row(i) = (mean + chol_cov.triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

}  // namespace scdm::numkit
