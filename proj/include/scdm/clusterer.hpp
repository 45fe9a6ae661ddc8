#pragma once

#include "scdm/io.hpp"
#include "scdm/numkit/matrix.hpp"
#include "scdm/numkit/rng.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace scdm::cluster {

using numkit::ConstMatrixRef;
using numkit::Matrix;
using numkit::Vector;

struct ClusterModel {
  Matrix centroids;  // k×f
  double inertia = 0.0;
  Vector prior;      // empirical q̂(c), frozen at fit time
  std::size_t k = 0;
  std::string feature_source = "raw";  // "encoder" | "raw"
  std::vector<double> inertia_trace;   // inertia after each Lloyd iteration
  std::size_t iterations = 0;
};

// D² seeding. Throws KTooLarge when k > N (or k = 0).
Matrix kmeans_pp_init(numkit::Rng& rng, const ConstMatrixRef& x, std::size_t k);

// Lloyd iterations from the given centroids. Stops when the relative inertia
// drop falls below tol or after max_iters. An empty cluster is re-seeded at the
// point farthest from its assigned centroid.
ClusterModel lloyd(const ConstMatrixRef& x, const ConstMatrixRef& init_centroids, std::size_t max_iters = 300,
                   double tol = 1e-6);

// Nearest centroid per row; ties go to the lower index.
std::vector<int> assign(const ClusterModel& model, const ConstMatrixRef& x);
std::vector<int> assign(const ConstMatrixRef& centroids, const ConstMatrixRef& x);

// count_j / N with the last entry set to 1 − Σ_{j<k−1} so the sum is exactly 1.
Vector empirical_prior(const std::vector<int>& assignments, std::size_t k);

// Best-of-n_init k-means++ + Lloyd, by final inertia.
ClusterModel fit_kmeans(numkit::Rng& rng, const ConstMatrixRef& x, std::size_t k, std::size_t n_init = 4,
                        std::size_t max_iters = 300, double tol = 1e-6);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Σ_i min_j ‖x_i − c_j‖².
double inertia_of(const ConstMatrixRef& centroids, const ConstMatrixRef& x);

io::Json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const io::Json& j);

}  // namespace scdm::cluster
