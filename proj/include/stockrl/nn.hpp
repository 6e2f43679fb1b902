#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stockrl/rng.hpp"

namespace stockrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;

enum class Activation { relu, tanh };

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

/// Fully connected stack over a slice of a flat parameter vector. Weights of
/// layer l are a column-major (sizes[l+1] x sizes[l]) block followed by the bias.
/// Samples are columns.
class Dense {
 public:
  Dense() = default;
  Dense(std::vector<int> sizes, Activation act, bool activate_last, std::size_t offset)
      : sizes_(std::move(sizes)), act_(act), activate_last_(activate_last), offset_(offset) {
    if (sizes_.size() < 2) throw std::invalid_argument("Dense: need at least two layer sizes");
    std::size_t o = offset_;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(o);
      o += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l]);
      b_off_.push_back(o);
      o += static_cast<std::size_t>(sizes_[l + 1]);
    }
    end_ = o;
  }

  struct Cache {
    std::vector<Matrix> pre;   // pre-activations per layer
    std::vector<Matrix> post;  // post[0] is the input
  };

  std::size_t begin() const { return offset_; }
  std::size_t end() const { return end_; }
  std::size_t layers() const { return sizes_.size() - 1; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }

  Matrix forward(const Vector& theta, const Matrix& x, Cache* cache = nullptr) const {
    Matrix h = x;
    if (cache) {
      cache->pre.clear();
      cache->post.clear();
      cache->post.push_back(x);
    }
    for (std::size_t l = 0; l < layers(); ++l) {
      Matrix z = weight(theta, l) * h;
      z.colwise() += bias(theta, l);
      const bool act = l + 1 < layers() || activate_last_;
      if (cache) cache->pre.push_back(z);
      h = act ? activate(z) : z;
      if (cache) cache->post.push_back(h);
    }
    return h;
  }

  /// Accumulates dLoss/dtheta into `grad` and returns dLoss/dinput.
  Matrix backward(const Vector& theta, const Cache& cache, const Matrix& d_out, Vector& grad) const {
    Matrix delta = d_out;
    for (std::size_t l = layers(); l-- > 0;) {
      const bool act = l + 1 < layers() || activate_last_;
      if (act) delta = delta.cwiseProduct(activate_grad(cache.pre[l], cache.post[l + 1]));
      const auto rows = sizes_[l + 1];
      const auto cols = sizes_[l];
      MatrixMap(grad.data() + w_off_[l], rows, cols).noalias() += delta * cache.post[l].transpose();
      grad.segment(static_cast<Eigen::Index>(b_off_[l]), rows) += delta.rowwise().sum();
      delta = weight(theta, l).transpose() * delta;
    }
    return delta;
  }

  /// Orthogonal initialization (QR of a Gaussian matrix) with per-layer gains;
  /// biases start at zero.
  void init(Vector& theta, RngStream& rng, double hidden_gain, double last_gain) const {
    for (std::size_t l = 0; l < layers(); ++l) {
      const int rows = sizes_[l + 1];
      const int cols = sizes_[l];
      const double gain = l + 1 < layers() ? hidden_gain : last_gain;
      MatrixMap(theta.data() + w_off_[l], rows, cols) = gain * orthogonal(rows, cols, rng);
      theta.segment(static_cast<Eigen::Index>(b_off_[l]), rows).setZero();
    }
  }

 private:
  ConstMatrixMap weight(const Vector& theta, std::size_t l) const {
    return ConstMatrixMap(theta.data() + w_off_[l], sizes_[l + 1], sizes_[l]);
  }
  Eigen::Map<const Vector> bias(const Vector& theta, std::size_t l) const {
    return Eigen::Map<const Vector>(theta.data() + b_off_[l], sizes_[l + 1]);
  }

  Matrix activate(const Matrix& z) const {
    return act_ == Activation::relu ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh().matrix());
  }
  Matrix activate_grad(const Matrix& z, const Matrix& h) const {
    if (act_ == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
    return (1.0 - h.array().square()).matrix();
  }

  static Matrix orthogonal(int rows, int cols, RngStream& rng) {
    const int n = std::max(rows, cols);
    const int m = std::min(rows, cols);
    Matrix g(n, m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, m);
    // Sign fix so the draw is uniform over the orthogonal group.
    const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    for (int j = 0; j < m; ++j)
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return rows >= cols ? q : Matrix(q.transpose());
  }

  std::vector<int> sizes_;
  Activation act_ = Activation::relu;
  bool activate_last_ = false;
  std::size_t offset_ = 0;
  std::size_t end_ = 0;
  std::vector<std::size_t> w_off_, b_off_;
};

}  // namespace stockrl::nn
