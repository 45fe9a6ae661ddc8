#include "scdm/errors.hpp"
#include "scdm/io.hpp"
#include "scdm/nn/mlp.hpp"
#include "scdm/nn/optim.hpp"
#include "scdm/numkit/rng.hpp"

#include "finite_diff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace scdm;
using numkit::Matrix;
using numkit::Rng;

namespace fs = std::filesystem;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scdm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_index(40)) - 20.0);
    EXPECT_EQ(io::parse_double(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_EQ(io::format_double(3.0), "3");
}

TEST(Csv, ReadsHeaderAndRows) {
  const fs::path dir = temp_dir("csv");
  io::write_text(dir / "t.csv", "a,b\n1,2\n3,4\n");
  const io::CsvTable t = io::read_csv(dir / "t.csv");
  ASSERT_EQ(t.header.size(), 2u);
  EXPECT_EQ(t.header[1], "b");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][0], "3");
  EXPECT_THROW(io::read_csv(dir / "missing.csv"), IoError);
  EXPECT_THROW(io::parse_double("1.5x"), IoError);
  EXPECT_THROW(io::parse_int("7.5"), IoError);
}

TEST(Json, MatrixRoundTrip) {
  Rng rng(2);
  const Matrix m = random_matrix(rng, 3, 4);
  const fs::path dir = temp_dir("json");
  io::write_json(dir / "m.json", io::matrix_to_json(m));
  EXPECT_EQ(io::matrix_from_json(io::read_json(dir / "m.json")), m);
  const numkit::Vector v = m.row(0).transpose();
  EXPECT_EQ(io::vector_from_json(io::vector_to_json(v)), v);
}

TEST(Mlp, ForwardMatchesHandComputation) {
  Rng rng(3);
  nn::Mlp net = nn::Mlp::init({3, 4, 2}, rng);
  net.bias(0).setConstant(0.1);
  net.bias(1).setConstant(-0.2);
  const Matrix x = random_matrix(rng, 5, 3);
  const Matrix y = nn::forward(net, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::VectorXd h(4);
    for (int j = 0; j < 4; ++j) {
      double a = net.bias(0)(j);
      for (int k = 0; k < 3; ++k) a += net.weight(0)(j, k) * x(i, k);
      h(j) = silu(a);
    }
    for (int j = 0; j < 2; ++j) {
      double a = net.bias(1)(j);
      for (int k = 0; k < 4; ++k) a += net.weight(1)(j, k) * h(k);
      EXPECT_NEAR(y(i, j), a, 1e-12);
    }
  }
  EXPECT_THROW(nn::forward(net, random_matrix(rng, 2, 4)), DimensionMismatch);
}

TEST(Mlp, InitShapesAndZeroLast) {
  Rng rng(4);
  const nn::Mlp net = nn::Mlp::init({2, 8, 8, 3}, rng, true);
  EXPECT_EQ(net.parameter_count(), 2u * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
  EXPECT_TRUE(net.weight(2).isZero(0.0));
  EXPECT_TRUE(nn::forward(net, random_matrix(rng, 4, 2)).isZero(0.0));
  EXPECT_THROW(nn::Mlp(std::vector<std::size_t>{3}), Error);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(5);
    const std::size_t h = 2 + rng.uniform_index(6);
    const std::size_t o = 1 + rng.uniform_index(4);
    nn::Mlp net = nn::Mlp::init({d, h, h, o}, rng);
    for (auto& v : net.values()) v += 0.1 * rng.normal();
    Matrix x = random_matrix(rng, 6, static_cast<Eigen::Index>(d));
    const Matrix w = random_matrix(rng, 6, static_cast<Eigen::Index>(o));
    auto loss = [&]() { return (nn::forward(net, x).array() * w.array()).sum(); };
    nn::MlpTape tape;
    nn::forward(net, x, &tape);
    std::vector<double> grad(net.parameter_count(), 0.0);
    const Matrix dx = nn::backward(net, tape, w, grad);
    const auto num = fd::central_diff(net.values(), loss);
    EXPECT_LE(fd::relative_error(grad, num), 1e-6) << "trial " << trial;
    const auto num_x = fd::central_diff(std::span<double>(x.data(), x.size()), loss);
    EXPECT_LE(fd::relative_error(std::span<const double>(dx.data(), dx.size()), num_x), 1e-6);
  }
}

TEST(Mlp, JsonRoundTrip) {
  Rng rng(6);
  const nn::Mlp net = nn::Mlp::init({3, 5, 2}, rng);
  EXPECT_EQ(nn::mlp_from_json(nn::mlp_to_json(net)), net);
  io::Json j = nn::mlp_to_json(net);
  j["layer_dims"] = {3, 6, 2};
  EXPECT_THROW(nn::mlp_from_json(j), Error);
}

TEST(Adam, FirstStepsMatchReferenceFormula) {
  nn::AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  nn::Adam adam(2, cfg);
  std::vector<double> p{1.0, -2.0};
  double m[2] = {0, 0}, v[2] = {0, 0};
  double ref[2] = {1.0, -2.0};
  const double grads[3][2] = {{0.5, -1.0}, {0.1, 0.3}, {-0.2, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    adam.step(p, grads[t - 1]);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p[i], ref[i], 1e-15);
    }
  }
  EXPECT_EQ(adam.steps_taken(), 3u);
}

TEST(Sgd, MomentumAndWeightDecay) {
  nn::Sgd sgd(1, nn::SgdConfig{0.1, 0.9, 0.01});
  std::vector<double> p{2.0};
  const std::vector<double> g{1.0};
  sgd.step(p, g);
  // v = 1 + 0.02 = 1.02; θ = 2 − 0.102.
  EXPECT_NEAR(p[0], 1.898, 1e-15);
  sgd.step(p, g);
  const double v2 = 0.9 * 1.02 + 1.0 + 0.01 * 1.898;
  EXPECT_NEAR(p[0], 1.898 - 0.1 * v2, 1e-15);
}

TEST(Ema, ExactContract) {
  std::vector<double> target{1.0, 2.0};
  const std::vector<double> source{3.0, -1.0};
  nn::ema_update(target, source, 0.75);
  EXPECT_DOUBLE_EQ(target[0], 0.75 * 1.0 + 0.25 * 3.0);
  EXPECT_DOUBLE_EQ(target[1], 0.75 * 2.0 + 0.25 * -1.0);
}
