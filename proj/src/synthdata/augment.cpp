#include "scdm/synthdata.hpp"

#include "scdm/errors.hpp"

#include <cmath>

namespace scdm::synth {

void AugmentationSpec::validate(const PointSet& set) const {
  if (!std::isfinite(jitter_sigma) || jitter_sigma < 0.0) throw Error("augmentation: jitter_sigma must be ≥ 0");
  if (!std::isfinite(rotation_max_radians) || rotation_max_radians < 0.0) {
    throw Error("augmentation: rotation_max_radians must be ≥ 0");
  }
  if (rotation_max_radians > 0.0 && set.d_informative != 2) {
    throw UnsupportedDim("augmentation: rotation requires d_informative = 2");
  }
}

Vector augment(Rng& rng, const Vector& row, const PointSet& meta, const AugmentationSpec& spec) {
  if (static_cast<std::size_t>(row.size()) != meta.dim()) throw DimensionMismatch("augment: row width");
  Vector out = row;
  const auto d_i = static_cast<Eigen::Index>(meta.d_informative);
  if (spec.rotation_max_radians > 0.0) {
    if (d_i != 2) throw UnsupportedDim("augment: rotation requires d_informative = 2");
    const double angle = spec.rotation_max_radians * (2.0 * rng.uniform() - 1.0);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x0 = out(0);
    const double x1 = out(1);
    out(0) = c * x0 - s * x1;
    out(1) = s * x0 + c * x1;
  }
  if (spec.jitter_sigma > 0.0) {
    for (Eigen::Index j = 0; j < d_i; ++j) out(j) += spec.jitter_sigma * rng.normal();
  }
  if (spec.nuisance_resample) {
    for (Eigen::Index j = d_i; j < out.size(); ++j) out(j) = meta.nuisance_sigma * rng.normal();
  }
  return out;
}

Matrix augment_rows(Rng& rng, const PointSet& set, const std::vector<std::size_t>& index,
                    const AugmentationSpec& spec) {
  Matrix out(static_cast<Eigen::Index>(index.size()), set.x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Vector row = set.x.row(static_cast<Eigen::Index>(index[i])).transpose();
    out.row(static_cast<Eigen::Index>(i)) = augment(rng, row, set, spec).transpose();
  }
  return out;
}

}  // namespace scdm::synth
