#include "scdm/errors.hpp"
#include "scdm/ssl_encoder.hpp"

#include <algorithm>
#include <cmath>

namespace scdm::ssl {

Matrix normalize_rows(const ConstMatrixRef& z) {
  Matrix y(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (norm > 0.0) {
      y.row(i) = z.row(i) / norm;
    } else {
      y.row(i).setZero();
      if (z.cols() > 0) y(i, 0) = 1.0;
    }
  }
  return y;
}

Matrix normalize_rows_backward(const ConstMatrixRef& z, const ConstMatrixRef& grad_y) {
  Matrix dz(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (norm > 0.0) {
      const Eigen::RowVectorXd y = z.row(i) / norm;
      dz.row(i) = (grad_y.row(i) - y * y.dot(grad_y.row(i))) / norm;
    } else {
      dz.row(i).setZero();
    }
  }
  return dz;
}

Matrix encode(const Mlp& params, const ConstMatrixRef& x) { return normalize_rows(nn::forward(params, x)); }

InfoNceResult info_nce(const ConstMatrixRef& q, const ConstMatrixRef& k, const ConstMatrixRef& negatives,
                       double temperature) {
  if (q.rows() != k.rows() || q.cols() != k.cols()) throw DimensionMismatch("info_nce: q/k shape");
  if (negatives.rows() > 0 && negatives.cols() != q.cols()) throw DimensionMismatch("info_nce: negatives width");
  if (!(temperature > 0.0)) throw Error("info_nce: temperature must be > 0");
  const Eigen::Index b = q.rows();
  InfoNceResult out{0.0, Matrix::Zero(q.rows(), q.cols())};
  if (b == 0) return out;
  const Eigen::VectorXd pos = (q.cwiseProduct(k)).rowwise().sum() / temperature;
  Matrix neg = negatives.rows() > 0 ? Matrix(q * negatives.transpose() / temperature) : Matrix(b, 0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double mx = pos(i);
    if (neg.cols() > 0) mx = std::max(mx, neg.row(i).maxCoeff());
    double sum = std::exp(pos(i) - mx);
    for (Eigen::Index m = 0; m < neg.cols(); ++m) {
      neg(i, m) = std::exp(neg(i, m) - mx);
      sum += neg(i, m);
    }
    const double p_pos = std::exp(pos(i) - mx) / sum;
    total += -(pos(i) - mx) + std::log(sum);
    // d loss_i / d q_i = ((p_pos − 1)·k_i + Σ_m p_m·n_m) / τ
    Eigen::RowVectorXd g = (p_pos - 1.0) * k.row(i);
    if (neg.cols() > 0) g += (neg.row(i) / sum) * negatives;
    out.grad_q.row(i) = g / (temperature * static_cast<double>(b));
  }
  out.loss = total / static_cast<double>(b);
  return out;
}

namespace {

// Row-softmax cross-entropy with targets on the diagonal; returns summed loss
// and writes (P − I) into `delta`.
double diagonal_cross_entropy(const Matrix& logits, Matrix& delta) {
  delta.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double sum = e.sum();
    total += -(logits(i, i) - mx) + std::log(sum);
    delta.row(i) = e / sum;
    delta(i, i) -= 1.0;
  }
  return total;
}

}  // namespace

InBatchResult info_nce_in_batch(const ConstMatrixRef& q, const ConstMatrixRef& k, double temperature) {
  if (q.rows() != k.rows() || q.cols() != k.cols()) throw DimensionMismatch("info_nce_in_batch: q/k shape");
  if (!(temperature > 0.0)) throw Error("info_nce_in_batch: temperature must be > 0");
  const Eigen::Index b = q.rows();
  InBatchResult out{0.0, Matrix::Zero(q.rows(), q.cols()), Matrix::Zero(k.rows(), k.cols())};
  if (b == 0) return out;
  const Matrix logits = q * k.transpose() / temperature;
  Matrix d_qk;
  Matrix d_kq;
  const double l_qk = diagonal_cross_entropy(logits, d_qk);
  const double l_kq = diagonal_cross_entropy(logits.transpose(), d_kq);
  const double scale = 1.0 / (2.0 * static_cast<double>(b) * temperature);
  out.loss = (l_qk + l_kq) / (2.0 * static_cast<double>(b));
  out.grad_q = scale * (d_qk * k + d_kq.transpose() * k);
  out.grad_k = scale * (d_qk.transpose() * q + d_kq * q);
  return out;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), buffer_(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim)) {}

void NegativeQueue::push(const ConstMatrixRef& keys) {
  if (capacity_ == 0) return;
  if (keys.cols() != buffer_.cols()) throw DimensionMismatch("NegativeQueue::push: feature width");
  for (Eigen::Index i = 0; i < keys.rows(); ++i) {
    buffer_.row(static_cast<Eigen::Index>(cursor_)) = keys.row(i);
    cursor_ = (cursor_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
  }
}

Matrix NegativeQueue::contents() const {
  Matrix out(static_cast<Eigen::Index>(count_), buffer_.cols());
  const std::size_t start = count_ < capacity_ ? 0 : cursor_;
  for (std::size_t i = 0; i < count_; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = buffer_.row(static_cast<Eigen::Index>((start + i) % capacity_));
  }
  return out;
}

EncoderLoss encoder_loss(const Mlp& online, const Mlp& key, const ConstMatrixRef& view_q,
                         const ConstMatrixRef& view_k, const ConstMatrixRef& negatives,
                         const ContrastiveConfig& cfg) {
  EncoderLoss out;
  out.grad.assign(online.parameter_count(), 0.0);
  nn::MlpTape tape_q;
  const Matrix zq = nn::forward(online, view_q, &tape_q);
  const Matrix q = normalize_rows(zq);
  if (cfg.mode == ContrastiveMode::momentum_queue) {
    out.keys = encode(key, view_k);
    const InfoNceResult r = info_nce(q, out.keys, negatives, cfg.temperature);
    out.loss = r.loss;
    nn::backward(online, tape_q, normalize_rows_backward(zq, r.grad_q), out.grad);
  } else {
    nn::MlpTape tape_k;
    const Matrix zk = nn::forward(online, view_k, &tape_k);
    out.keys = normalize_rows(zk);
    const InBatchResult r = info_nce_in_batch(q, out.keys, cfg.temperature);
    out.loss = r.loss;
    nn::backward(online, tape_q, normalize_rows_backward(zq, r.grad_q), out.grad);
    nn::backward(online, tape_k, normalize_rows_backward(zk, r.grad_k), out.grad);
  }
  return out;
}

}  // namespace scdm::ssl
