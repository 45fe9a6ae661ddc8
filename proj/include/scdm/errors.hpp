#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scdm {

// Base for every failure raised by the library. Subclasses name the
// failure kinds that callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SCDM_DEFINE_ERROR(Name)              \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

SCDM_DEFINE_ERROR(DimensionMismatch);
SCDM_DEFINE_ERROR(NotPositiveDefinite);
SCDM_DEFINE_ERROR(NotPSD);
SCDM_DEFINE_ERROR(NoConvergence);
SCDM_DEFINE_ERROR(BadWeights);
SCDM_DEFINE_ERROR(KTooLarge);
SCDM_DEFINE_ERROR(BadCondition);
SCDM_DEFINE_ERROR(TooFewSamples);
SCDM_DEFINE_ERROR(SupportViolation);
SCDM_DEFINE_ERROR(NonFiniteLogDensity);
SCDM_DEFINE_ERROR(UnsupportedDim);
SCDM_DEFINE_ERROR(IoError);

#undef SCDM_DEFINE_ERROR

// Training produced a NaN/Inf loss; `step` is the offending step index.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Invalid or unknown configuration; `key` is the offending JSON key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error("config error at '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace scdm
