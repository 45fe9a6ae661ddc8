#pragma once

#include "scdm/numkit/matrix.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace scdm::numkit {

// SplitMix64 finalizer; also used to expand seeds into generator state.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix64(std::uint64_t x);

// xoshiro256** (Blackman & Vigna) seeded through SplitMix64. The integer
// stream is fully specified, so a seed reproduces on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n > 0.
  std::size_t uniform_index(std::size_t n);
  // Standard normal (Box–Muller, second variate cached).
  double normal();

  // Child stream keyed by `key`; does not advance this generator.
  Rng split(std::uint64_t key) const;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Child seed = mix64(FNV-1a(master as 8 little-endian bytes, stage, 0x00, axis)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::string_view axis_value = {});

// n rows of mean + chol_cov·z, z ~ N(0, I).
Matrix gauss_sample(Rng& rng, const Vector& mean, const ConstMatrixRef& chol_cov, std::size_t n);

}  // namespace scdm::numkit
