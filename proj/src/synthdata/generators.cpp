#include "scdm/synthdata.hpp"

#include "scdm/errors.hpp"
#include "scdm/numkit/linalg.hpp"

#include <cmath>
#include <numbers>

namespace scdm::synth {
namespace {

void check_weights(const Vector& w) {
  if (w.size() == 0) throw BadWeights("mixture weights are empty");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < 0.0) throw BadWeights("mixture weight " + std::to_string(i) + " invalid");
  }
  if (std::abs(w.sum() - 1.0) > 1e-12) throw BadWeights("mixture weights do not sum to 1");
}

struct CompiledMog {
  std::vector<Matrix> chol;
  std::vector<double> cumulative;
};

CompiledMog compile(const MogParams& p) {
  check_weights(p.weights);
  const auto k = static_cast<std::size_t>(p.weights.size());
  if (static_cast<std::size_t>(p.means.rows()) != k || p.covs.size() != k) {
    throw DimensionMismatch("MoG: means/covs/weights component counts differ");
  }
  CompiledMog c;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (p.covs[i].rows() != p.means.cols()) throw DimensionMismatch("MoG: covariance dim");
    c.chol.push_back(numkit::cholesky(p.covs[i]));
    acc += p.weights(static_cast<Eigen::Index>(i));
    c.cumulative.push_back(acc);
  }
  c.cumulative.back() = 1.0;
  return c;
}

int draw_component(Rng& rng, const std::vector<double>& cumulative) {
  const double u = rng.uniform();
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    if (u < cumulative[i]) return static_cast<int>(i);
  }
  return static_cast<int>(cumulative.size() - 1);
}

// Shared body of make_mog / make_nuisance_mog; draws per row in the order
// component, informative dims, nuisance dims.
PointSet sample_mog(Rng& rng, const MogParams& p, std::size_t d_nuisance, double nuisance_sigma, std::size_t n) {
  const CompiledMog c = compile(p);
  const auto d_i = static_cast<Eigen::Index>(p.means.cols());
  const auto d = d_i + static_cast<Eigen::Index>(d_nuisance);
  PointSet out;
  out.x = Matrix(static_cast<Eigen::Index>(n), d);
  out.labels = std::vector<int>(n);
  out.seed = rng.seed();
  out.d_informative = static_cast<std::size_t>(d_i);
  out.k_true = static_cast<std::size_t>(p.weights.size());
  out.nuisance_sigma = d_nuisance > 0 ? nuisance_sigma : 0.0;
  Vector z(d_i);
  for (std::size_t r = 0; r < n; ++r) {
    const int comp = draw_component(rng, c.cumulative);
    (*out.labels)[r] = comp;
    for (Eigen::Index j = 0; j < d_i; ++j) z(j) = rng.normal();
    const auto row = static_cast<Eigen::Index>(r);
    out.x.row(row).head(d_i) =
        (p.means.row(comp).transpose() + c.chol[static_cast<std::size_t>(comp)].triangularView<Eigen::Lower>() * z)
            .transpose();
    for (Eigen::Index j = d_i; j < d; ++j) out.x(row, j) = nuisance_sigma * rng.normal();
  }
  return out;
}

}  // namespace

void PointSet::validate() const {
  if (labels && labels->size() != size()) throw DimensionMismatch("PointSet: labels length != N");
  if (labels) {
    for (int l : *labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= k_true) throw Error("PointSet: label out of range");
    }
  }
  if (d_informative > dim()) throw DimensionMismatch("PointSet: d_informative > d");
  if (!x.allFinite()) throw Error("PointSet: non-finite coordinate");
}

PointSet make_mog(Rng& rng, const MogParams& params, std::size_t n) {
  PointSet out = sample_mog(rng, params, 0, 0.0, n);
  out.name = "mog";
  return out;
}

PointSet make_nuisance_mog(Rng& rng, const MogParams& informative, std::size_t d_nuisance, double nuisance_sigma,
                           std::size_t n) {
  if (!(nuisance_sigma > 0.0)) throw Error("make_nuisance_mog: nuisance_sigma must be > 0");
  PointSet out = sample_mog(rng, informative, d_nuisance, nuisance_sigma, n);
  out.name = "nuisance_mog";
  return out;
}

PointSet make_pinwheel(Rng& rng, std::size_t n_arms, std::size_t n, double spiral_rate, const PinwheelShape& shape) {
  if (n_arms < 2) throw Error("make_pinwheel: need at least 2 arms");
  PointSet out;
  out.name = "pinwheel";
  out.seed = rng.seed();
  out.d_informative = 2;
  out.k_true = n_arms;
  out.x = Matrix(static_cast<Eigen::Index>(n), 2);
  out.labels = std::vector<int>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto arm = rng.uniform_index(n_arms);
    const double radial = 1.0 + shape.radial_std * rng.normal();
    const double tangential = shape.tangential_std * rng.normal();
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(arm) / static_cast<double>(n_arms) +
                         spiral_rate * std::exp(radial);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const auto row = static_cast<Eigen::Index>(r);
    out.x(row, 0) = shape.scale * (c * radial - s * tangential);
    out.x(row, 1) = shape.scale * (s * radial + c * tangential);
    (*out.labels)[r] = static_cast<int>(arm);
  }
  return out;
}

MogParams mog8_params() {
  MogParams p;
  p.means = Matrix(8, 2);
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 8.0;
    p.means(k, 0) = 5.0 * std::cos(a);
    p.means(k, 1) = 5.0 * std::sin(a);
  }
  p.covs.assign(8, Matrix::Identity(2, 2) * (0.3 * 0.3));
  p.weights = Vector::Constant(8, 1.0 / 8.0);
  return p;
}

MogParams nuisance_informative_params() {
  MogParams p;
  p.means = numkit::from_rows({{2.0, 0.0}, {-2.0, 0.0}});
  p.covs.assign(2, Matrix::Identity(2, 2));
  p.weights = Vector::Constant(2, 0.5);
  return p;
}

std::vector<std::string> dataset_names() { return {"mog8", "pinwheel5", "nuisance_mog"}; }

PointSet make_dataset(const std::string& name, std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  PointSet out;
  if (name == "mog8") {
    out = make_mog(rng, mog8_params(), n);
  } else if (name == "pinwheel5") {
    out = make_pinwheel(rng, 5, n, 0.25);
  } else if (name == "nuisance_mog") {
    out = make_nuisance_mog(rng, nuisance_informative_params(), kNuisanceDims, kNuisanceSigma, n);
  } else {
    throw ConfigError("dataset.name", "unknown dataset '" + name + "'");
  }
  out.name = name;
  out.seed = seed;
  return out;
}

AugmentationSpec default_augmentation(const std::string& name) {
  if (name == "mog8") return {0.3, false, 0.05};
  if (name == "pinwheel5") return {0.25, false, 0.05};
  if (name == "nuisance_mog") return {0.3, true, 0.0};
  throw ConfigError("dataset.name", "unknown dataset '" + name + "'");
}

}  // namespace scdm::synth
