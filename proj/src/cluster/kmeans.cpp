#include "scdm/clusterer.hpp"
#include "scdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace scdm::cluster {
namespace {

struct Nearest {
  int index = 0;
  double dist2 = 0.0;
};

Nearest nearest(const ConstMatrixRef& centroids, const ConstMatrixRef& x, Eigen::Index row) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double d2 = (x.row(row) - centroids.row(j)).squaredNorm();
    if (d2 < best.dist2) best = {static_cast<int>(j), d2};
  }
  return best;
}

}  // namespace

double inertia_of(const ConstMatrixRef& centroids, const ConstMatrixRef& x) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += nearest(centroids, x, i).dist2;
  return total;
}

Matrix kmeans_pp_init(numkit::Rng& rng, const ConstMatrixRef& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k == 0 || k > n) {
    throw KTooLarge("kmeans_pp_init: k = " + std::to_string(k) + " with N = " + std::to_string(n));
  }
  Matrix centers(static_cast<Eigen::Index>(k), x.cols());
  std::vector<bool> taken(n, false);
  std::size_t first = rng.uniform_index(n);
  centers.row(0) = x.row(static_cast<Eigen::Index>(first));
  taken[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x.row(static_cast<Eigen::Index>(i)) - centers.row(0)).squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += taken[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    if (pick == n) {
      // Remaining untaken rows all coincide with a chosen centroid (or
      // rounding left u at the end): pick uniformly among untaken rows.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) free.push_back(i);
      pick = free[rng.uniform_index(free.size())];
    }
    taken[pick] = true;
    centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c)))
                                  .squaredNorm());
    }
  }
  return centers;
}

std::vector<int> assign(const ConstMatrixRef& centroids, const ConstMatrixRef& x) {
  if (x.rows() > 0 && x.cols() != centroids.cols()) throw DimensionMismatch("assign: feature width");
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = nearest(centroids, x, i).index;
  return out;
}

std::vector<int> assign(const ClusterModel& model, const ConstMatrixRef& x) { return assign(model.centroids, x); }

Vector empirical_prior(const std::vector<int>& assignments, std::size_t k) {
  if (k == 0) throw Error("empirical_prior: k must be > 0");
  if (assignments.empty()) throw Error("empirical_prior: no assignments");
  std::vector<std::size_t> counts(k, 0);
  for (int a : assignments) {
    if (a < 0 || static_cast<std::size_t>(a) >= k) throw Error("empirical_prior: index out of range");
    ++counts[static_cast<std::size_t>(a)];
  }
  Vector prior(static_cast<Eigen::Index>(k));
  double acc = 0.0;
  const double n = static_cast<double>(assignments.size());
  for (std::size_t j = 0; j + 1 < k; ++j) {
    prior(static_cast<Eigen::Index>(j)) = static_cast<double>(counts[j]) / n;
    acc += prior(static_cast<Eigen::Index>(j));
  }
  prior(static_cast<Eigen::Index>(k - 1)) = 1.0 - acc;
  return prior;
}

ClusterModel lloyd(const ConstMatrixRef& x, const ConstMatrixRef& init_centroids, std::size_t max_iters, double tol) {
  if (max_iters < 1) throw Error("lloyd: max_iters must be ≥ 1");
  if (x.rows() == 0) throw Error("lloyd: empty input");
  if (x.cols() != init_centroids.cols()) throw DimensionMismatch("lloyd: centroid width");
  const Eigen::Index n = x.rows();
  const Eigen::Index k = init_centroids.rows();
  ClusterModel model;
  model.k = static_cast<std::size_t>(k);
  model.centroids = init_centroids;
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<double> d2(static_cast<std::size_t>(n));
  std::vector<int> previous_labels;
  double previous = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step; sums accumulate in row order so results are stable.
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Nearest nb = nearest(model.centroids, x, i);
      labels[static_cast<std::size_t>(i)] = nb.index;
      d2[static_cast<std::size_t>(i)] = nb.dist2;
      sums.row(nb.index) += x.row(i);
      ++counts[static_cast<std::size_t>(nb.index)];
    }
    // Unchanged assignments: the previous update is a fixed point.
    if (labels == previous_labels) break;
    // Update step with empty-cluster repair.
    for (Eigen::Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        model.centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      const auto far = static_cast<Eigen::Index>(std::max_element(d2.begin(), d2.end()) - d2.begin());
      model.centroids.row(j) = x.row(far);
      d2[static_cast<std::size_t>(far)] = 0.0;
    }
    const double current = inertia_of(model.centroids, x);
    model.inertia_trace.push_back(current);
    model.inertia = current;
    model.iterations = iter + 1;
    if (std::isfinite(previous) && previous - current <= tol * previous) break;
    if (current == 0.0) break;
    previous = current;
    previous_labels = labels;
  }
  model.prior = empirical_prior(assign(model.centroids, x), model.k);
  return model;
}

ClusterModel fit_kmeans(numkit::Rng& rng, const ConstMatrixRef& x, std::size_t k, std::size_t n_init,
                        std::size_t max_iters, double tol) {
  ClusterModel best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(n_init, 1); ++r) {
    ClusterModel m = lloyd(x, kmeans_pp_init(rng, x, k), max_iters, tol);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("adjusted_rand_index: lengths differ");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [_, c] : table) index += choose2(c);
  double sum_a = 0.0;
  for (const auto& [_, c] : rows) sum_a += choose2(c);
  double sum_b = 0.0;
  for (const auto& [_, c] : cols) sum_b += choose2(c);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  // Both partitions trivial (all-one-cluster or all-singletons) and equal.
  if (denom == 0.0) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / denom;
}

io::Json to_json(const ClusterModel& model) {
  return {{"k", model.k},
          {"centroids", io::matrix_to_json(model.centroids)},
          {"prior", io::vector_to_json(model.prior)},
          {"inertia", model.inertia},
          {"feature_source", model.feature_source}};
}

ClusterModel cluster_model_from_json(const io::Json& j) {
  ClusterModel m;
  m.k = j.at("k").get<std::size_t>();
  m.centroids = io::matrix_from_json(j.at("centroids"));
  m.prior = io::vector_from_json(j.at("prior"));
  m.inertia = j.at("inertia").get<double>();
  m.feature_source = j.at("feature_source").get<std::string>();
  if (m.feature_source != "encoder" && m.feature_source != "raw") {
    throw IoError("cluster model: feature_source must be 'encoder' or 'raw'");
  }
  if (static_cast<std::size_t>(m.centroids.rows()) != m.k || static_cast<std::size_t>(m.prior.size()) != m.k) {
    throw IoError("cluster model: k does not match centroid/prior sizes");
  }
  return m;
}

}  // namespace scdm::cluster
