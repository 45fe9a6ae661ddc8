#pragma once

#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scdm::synth {

using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;

struct PointSet {
  Matrix x;                                // N×d
  std::optional<std::vector<int>> labels;  // ground-truth component per row
  std::string name;
  std::uint64_t seed = 0;
  std::size_t d_informative = 0;  // dims [0, d_informative) carry structure
  std::size_t k_true = 0;         // number of ground-truth components
  double nuisance_sigma = 0.0;    // std of dims [d_informative, d)

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  // Throws DimensionMismatch / Error if an invariant is broken.
  void validate() const;
};

struct MogParams {
  Matrix means;               // K×d
  std::vector<Matrix> covs;   // K entries, each d×d PD
  Vector weights;             // K-simplex
};

// Mixture of Gaussians. Throws BadWeights for an invalid simplex.
PointSet make_mog(Rng& rng, const MogParams& params, std::size_t n);

struct PinwheelShape {
  double radial_std = 0.3;
  double tangential_std = 0.05;
  double scale = 4.0;
};

// Spiral-arm dataset: arm k centered on angle 2πk/n_arms, twisted by
// spiral_rate·exp(radial offset). spiral_rate = 0 gives straight wedges.
PointSet make_pinwheel(Rng& rng, std::size_t n_arms, std::size_t n, double spiral_rate,
                       const PinwheelShape& shape = {});

// MoG over the first d_i dims and i.i.d. N(0, nuisance_sigma²) over the next
// d_nuisance dims, independent of the label.
PointSet make_nuisance_mog(Rng& rng, const MogParams& informative, std::size_t d_nuisance,
                           double nuisance_sigma, std::size_t n);

struct AugmentationSpec {
  double jitter_sigma = 0.0;
  bool nuisance_resample = false;
  double rotation_max_radians = 0.0;

  void validate(const PointSet& set) const;
};

// Positive-pair view of one row: optional rotation by U(−r, r) and Gaussian
// jitter on the informative dims; fresh nuisance dims when requested.
Vector augment(Rng& rng, const Vector& row, const PointSet& meta, const AugmentationSpec& spec);

// Batched form used by the encoder trainer; row i of the result augments row
// index[i] of set.x.
Matrix augment_rows(Rng& rng, const PointSet& set, const std::vector<std::size_t>& index,
                    const AugmentationSpec& spec);

// Benchmark presets.
MogParams mog8_params();         // 8 comps on a radius-5 ring, σ = 0.3
MogParams nuisance_informative_params();  // means ±(2, 0), identity covariance
constexpr std::size_t kNuisanceDims = 8;
constexpr double kNuisanceSigma = 4.0;

// Known names: "mog8", "pinwheel5", "nuisance_mog". Throws ConfigError
// (key "dataset.name") otherwise.
PointSet make_dataset(const std::string& name, std::uint64_t seed, std::size_t n);
std::vector<std::string> dataset_names();
AugmentationSpec default_augmentation(const std::string& name);

// CSV with header dim_0,...,dim_{d-1},label (label −1 when absent) plus a
// sidecar <stem>.meta.json {name, seed, d_informative, k_true, nuisance_sigma}.
void write_pointset(const std::filesystem::path& csv_path, const PointSet& set);
PointSet read_pointset(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace scdm::synth
