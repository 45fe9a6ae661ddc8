#include "scdm/clusterer.hpp"
#include "scdm/errors.hpp"
#include "scdm/ssl_encoder.hpp"
#include "scdm/synthdata.hpp"

#include "finite_diff.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace scdm;
using numkit::Matrix;
using numkit::Rng;

namespace {

Matrix random_unit_rows(Rng& rng, Eigen::Index n, Eigen::Index f) {
  Matrix m(n, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) m.row(i).normalize();
  return m;
}

std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> as_span(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

ssl::ContrastiveConfig small_config(ssl::ContrastiveMode mode) {
  ssl::ContrastiveConfig cfg;
  cfg.mode = mode;
  cfg.feature_dim = 4;
  cfg.hidden = {8};
  cfg.batch_size = 16;
  cfg.queue_size = 32;
  cfg.encoder_momentum = 0.9;
  cfg.epochs = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(InfoNce, ClosedFormExample) {
  const Matrix q = numkit::from_rows({{1.0, 0.0}});
  const Matrix neg = numkit::from_rows({{-1.0, 0.0}});
  const ssl::InfoNceResult r = ssl::info_nce(q, q, neg, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(r.loss, -std::log(e / (e + 1.0 / e)), 1e-14);
  EXPECT_NEAR(r.loss, 0.1269, 1e-4);
}

TEST(InfoNce, NoNegativesGivesZero) {
  Rng rng(1);
  const Matrix q = random_unit_rows(rng, 3, 4);
  const ssl::InfoNceResult r = ssl::info_nce(q, q, Matrix(0, 4), 0.2);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  EXPECT_LE(r.grad_q.norm(), 1e-15);
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix q = random_unit_rows(rng, 4, 5);
    const Matrix k = random_unit_rows(rng, 4, 5);
    const Matrix neg = random_unit_rows(rng, 8, 5);
    const ssl::InfoNceResult r = ssl::info_nce(q, k, neg, 0.5);
    EXPECT_GE(r.loss, 0.0);
    const auto num = fd::central_diff(as_span(q), [&] { return ssl::info_nce(q, k, neg, 0.5).loss; });
    EXPECT_LE(fd::relative_error(as_span(r.grad_q), num), 1e-4);
  }
}

TEST(InfoNce, InitialLossNearLogOnePlusM) {
  Rng rng(3);
  const Eigen::Index m = 64;
  const Matrix q = random_unit_rows(rng, 256, 32);
  const Matrix k = random_unit_rows(rng, 256, 32);
  const Matrix neg = random_unit_rows(rng, m, 32);
  const double loss = ssl::info_nce(q, k, neg, 1.0).loss;
  const double expected = std::log(1.0 + static_cast<double>(m));
  EXPECT_NEAR(loss, expected, 0.2 * expected);
}

TEST(InfoNceInBatch, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  Matrix q = random_unit_rows(rng, 5, 3);
  Matrix k = random_unit_rows(rng, 5, 3);
  const ssl::InBatchResult r = ssl::info_nce_in_batch(q, k, 0.3);
  auto loss = [&] { return ssl::info_nce_in_batch(q, k, 0.3).loss; };
  EXPECT_LE(fd::relative_error(as_span(r.grad_q), fd::central_diff(as_span(q), loss)), 1e-4);
  EXPECT_LE(fd::relative_error(as_span(r.grad_k), fd::central_diff(as_span(k), loss)), 1e-4);
}

TEST(InfoNceInBatch, SymmetricAndReducesToSingleDirection) {
  Rng rng(5);
  const Matrix q = random_unit_rows(rng, 6, 4);
  const Matrix k = random_unit_rows(rng, 6, 4);
  EXPECT_NEAR(ssl::info_nce_in_batch(q, k, 0.2).loss, ssl::info_nce_in_batch(k, q, 0.2).loss, 1e-12);

  // One direction equals info_nce with the off-diagonal keys as negatives.
  double one_way = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    Matrix neg(5, 4);
    for (Eigen::Index j = 0, r = 0; j < 6; ++j) {
      if (j != i) neg.row(r++) = k.row(j);
    }
    one_way += ssl::info_nce(q.row(i), k.row(i), neg, 0.2).loss;
  }
  double other_way = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    Matrix neg(5, 4);
    for (Eigen::Index j = 0, r = 0; j < 6; ++j) {
      if (j != i) neg.row(r++) = q.row(j);
    }
    other_way += ssl::info_nce(k.row(i), q.row(i), neg, 0.2).loss;
  }
  EXPECT_NEAR(ssl::info_nce_in_batch(q, k, 0.2).loss, (one_way + other_way) / 12.0, 1e-12);
}

TEST(NegativeQueue, FifoReplacement) {
  ssl::NegativeQueue queue(4, 2);
  EXPECT_EQ(queue.size(), 0u);
  Matrix batch(3, 2);
  for (int i = 0; i < 3; ++i) batch.row(i) << i, -i;
  queue.push(batch);
  EXPECT_EQ(queue.size(), 3u);
  EXPECT_EQ(queue.contents(), batch);
  Matrix next(3, 2);
  for (int i = 0; i < 3; ++i) next.row(i) << 10 + i, -10 - i;
  queue.push(next);
  const Matrix c = queue.contents();
  ASSERT_EQ(c.rows(), 4);
  EXPECT_EQ(c.row(0), batch.row(2));
  EXPECT_EQ(c.row(1), next.row(0));
  EXPECT_EQ(c.row(3), next.row(2));
}

TEST(Encode, UnitNormAndZeroConvention) {
  Rng rng(6);
  const nn::Mlp net = nn::Mlp::init({3, 8, 4}, rng);
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const Matrix y = ssl::encode(net, x);
  for (Eigen::Index i = 0; i < y.rows(); ++i) EXPECT_NEAR(y.row(i).norm(), 1.0, 1e-9);
  EXPECT_EQ(ssl::encode(net, x), y);
  const Matrix one = ssl::encode(net, x.topRows(1));
  EXPECT_NEAR(one.norm(), 1.0, 1e-9);

  const nn::Mlp zero = nn::Mlp::init({3, 8, 4}, rng, true);
  const Matrix z = ssl::encode(zero, x);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    EXPECT_EQ(z(i, 0), 1.0);
    EXPECT_EQ(z.row(i).tail(3).norm(), 0.0);
  }
  EXPECT_THROW(ssl::encode(net, Matrix::Zero(2, 4)), DimensionMismatch);
}

TEST(EncoderLoss, FullGradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (auto mode : {ssl::ContrastiveMode::in_batch, ssl::ContrastiveMode::momentum_queue}) {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t d = 2 + rng.uniform_index(5);
      const std::size_t f = 2 + rng.uniform_index(7);
      ssl::ContrastiveConfig cfg = small_config(mode);
      cfg.feature_dim = f;
      cfg.temperature = 0.5;
      nn::Mlp online = nn::Mlp::init({d, 6, 5, f}, rng);
      const nn::Mlp key = nn::Mlp::init({d, 6, 5, f}, rng);
      Matrix vq(4, static_cast<Eigen::Index>(d));
      Matrix vk(4, static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < vq.size(); ++i) vq.data()[i] = rng.normal();
      for (Eigen::Index i = 0; i < vk.size(); ++i) vk.data()[i] = vq.data()[i] + 0.1 * rng.normal();
      const Matrix neg = random_unit_rows(rng, 6, static_cast<Eigen::Index>(f));
      const ssl::EncoderLoss l = ssl::encoder_loss(online, key, vq, vk, neg, cfg);
      const auto num = fd::central_diff(online.values(),
                                        [&] { return ssl::encoder_loss(online, key, vq, vk, neg, cfg).loss; });
      EXPECT_LE(fd::relative_error(l.grad, num), 1e-4) << ssl::to_string(mode) << " trial " << trial;
    }
  }
}

TEST(ContrastiveTrainer, EmaAndQueueContracts) {
  const synth::PointSet data = synth::make_dataset("mog8", 8, 100);
  const ssl::ContrastiveConfig cfg = small_config(ssl::ContrastiveMode::momentum_queue);
  ssl::ContrastiveTrainer trainer(data, synth::default_augmentation("mog8"), cfg);
  std::vector<std::size_t> rows(16);
  for (std::size_t t = 1; t <= 4; ++t) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (t * 16 + i) % data.size();
    const std::vector<double> key_prev(trainer.key().values().begin(), trainer.key().values().end());
    const Matrix queue_prev = trainer.queue().contents();
    trainer.step(rows);
    const auto online = trainer.online().values();
    const auto key = trainer.key().values();
    for (std::size_t i = 0; i < key.size(); ++i) {
      ASSERT_EQ(key[i], cfg.encoder_momentum * key_prev[i] + (1.0 - cfg.encoder_momentum) * online[i]);
    }
    const Matrix q = trainer.queue().contents();
    ASSERT_EQ(static_cast<std::size_t>(q.rows()), std::min<std::size_t>(t * 16, 32));
    for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(q.row(i).norm(), 1.0, 1e-6);
    // Older entries shift forward by one batch once the ring is full.
    const Eigen::Index kept = q.rows() - 16;
    EXPECT_EQ(q.topRows(kept), queue_prev.bottomRows(kept));
  }
  EXPECT_EQ(trainer.steps_taken(), 4u);
}

TEST(TrainEncoder, ZeroEpochsReturnsInitialization) {
  const synth::PointSet data = synth::make_dataset("mog8", 9, 64);
  ssl::ContrastiveConfig cfg = small_config(ssl::ContrastiveMode::in_batch);
  cfg.epochs = 0;
  const ssl::EncoderTrainResult r = ssl::train_encoder(data, synth::default_augmentation("mog8"), cfg);
  EXPECT_EQ(r.params, ssl::initial_encoder(2, cfg));
  EXPECT_TRUE(r.epoch_loss.empty());
}

TEST(TrainEncoder, SeedDeterministic) {
  const synth::PointSet data = synth::make_dataset("mog8", 10, 128);
  for (auto mode : {ssl::ContrastiveMode::in_batch, ssl::ContrastiveMode::momentum_queue}) {
    const ssl::ContrastiveConfig cfg = small_config(mode);
    const auto a = ssl::train_encoder(data, synth::default_augmentation("mog8"), cfg);
    const auto b = ssl::train_encoder(data, synth::default_augmentation("mog8"), cfg);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    ssl::ContrastiveConfig other = cfg;
    other.seed = 6;
    EXPECT_NE(ssl::train_encoder(data, synth::default_augmentation("mog8"), other).params, a.params);
  }
}

TEST(TrainEncoder, LossDecreasesAndClustersSeparate) {
  const synth::PointSet data = synth::make_dataset("mog8", 11, 2048);
  ssl::ContrastiveConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 3;
  const auto r = ssl::train_encoder(data, synth::default_augmentation("mog8"), cfg);
  // The queue is only full from the second epoch on.
  EXPECT_LT(r.final_loss, r.epoch_loss[1]);
  Rng krng(12);
  const Matrix feats = ssl::encode(r.params, data.x);
  const auto model = cluster::fit_kmeans(krng, feats, 8);
  EXPECT_GE(cluster::adjusted_rand_index(cluster::assign(model, feats), *data.labels), 0.9);
}

TEST(ContrastiveConfig, Validation) {
  ssl::ContrastiveConfig cfg;
  cfg.queue_size = 1000;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.queue_size = 1024;
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.temperature = 0.2;
  cfg.encoder_momentum = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(ssl::contrastive_mode_from_string("simclr"), ConfigError);
}

TEST(EncoderCheckpoint, RoundTrip) {
  const synth::PointSet data = synth::make_dataset("mog8", 13, 64);
  const ssl::ContrastiveConfig cfg = small_config(ssl::ContrastiveMode::momentum_queue);
  const auto r = ssl::train_encoder(data, synth::default_augmentation("mog8"), cfg);
  const io::Json j = ssl::encoder_checkpoint(r, cfg);
  EXPECT_EQ(ssl::encoder_from_checkpoint(j), r.params);
  EXPECT_EQ(j.at("final_loss").get<double>(), r.final_loss);
  const ssl::ContrastiveConfig back = ssl::contrastive_config_from_json(j.at("config"));
  EXPECT_EQ(ssl::to_json(back), ssl::to_json(cfg));
}
