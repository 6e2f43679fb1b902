#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stockrl/nn.hpp"
#include "stockrl/rng.hpp"

namespace stockrl {

enum class HeadKind { discrete, gaussian };

inline HeadKind head_from_string(const std::string& s) {
  if (s == "discrete") return HeadKind::discrete;
  if (s == "gaussian" || s == "continuous") return HeadKind::gaussian;
  throw std::invalid_argument("unknown policy head '" + s + "'");
}
inline std::string to_string(HeadKind h) { return h == HeadKind::discrete ? "discrete" : "gaussian"; }

/// Shape of an actor-critic network.
struct Architecture {
  int input_dim = 4;
  std::vector<int> hidden{64, 64};
  HeadKind head = HeadKind::gaussian;
  /// Number of discrete actions (ignored by the Gaussian head).
  int num_actions = 2;
  /// One trunk feeding both heads instead of separate actor and critic stacks.
  bool share_layers = false;
  nn::Activation activation = nn::Activation::relu;

  int policy_outputs() const { return head == HeadKind::discrete ? num_actions : 2; }
  bool operator==(const Architecture&) const = default;
};

inline constexpr double kMinStd = 1e-3;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double gaussian_log_prob(double a, double mean, double std) {
  const double z = (a - mean) / std;
  return -0.5 * z * z - std::log(std) - kLogSqrt2Pi;
}
inline double gaussian_entropy(double std) { return 0.5 + kLogSqrt2Pi + std::log(std); }
/// KL(old || new) between univariate normals.
inline double gaussian_kl(double m_old, double s_old, double m_new, double s_new) {
  const double dm = m_old - m_new;
  return std::log(s_new / s_old) + (s_old * s_old + dm * dm) / (2.0 * s_new * s_new) - 0.5;
}

/// Numerically stable log-softmax of one logit column.
inline nn::Vector log_softmax(const nn::Vector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Parameter layout of an actor-critic network over one flat vector.
class ActorCritic {
 public:
  ActorCritic() = default;
  explicit ActorCritic(Architecture arch) : arch_(std::move(arch)) {
    if (arch_.input_dim <= 0) throw std::invalid_argument("network input dimension must be positive");
    if (arch_.hidden.empty()) throw std::invalid_argument("network needs at least one hidden layer");
    if (arch_.head == HeadKind::discrete && arch_.num_actions < 2)
      throw std::invalid_argument("discrete head needs at least two actions");
    std::vector<int> trunk{arch_.input_dim};
    trunk.insert(trunk.end(), arch_.hidden.begin(), arch_.hidden.end());
    const int h = arch_.hidden.back();
    std::size_t off = 0;
    pi_trunk_ = nn::Dense(trunk, arch_.activation, true, off);
    off = pi_trunk_.end();
    pi_head_ = nn::Dense({h, arch_.policy_outputs()}, arch_.activation, false, off);
    off = pi_head_.end();
    if (!arch_.share_layers) {
      vf_trunk_ = nn::Dense(trunk, arch_.activation, true, off);
      off = vf_trunk_.end();
    }
    vf_head_ = nn::Dense({h, 1}, arch_.activation, false, off);
    size_ = vf_head_.end();
  }

  const Architecture& architecture() const { return arch_; }
  std::size_t param_count() const { return size_; }

  struct Cache {
    nn::Dense::Cache pi_trunk, pi_head, vf_trunk, vf_head;
  };

  struct Output {
    /// Logits (discrete) or (mean, raw scale) rows (Gaussian); one column per sample.
    nn::Matrix policy;
    nn::Matrix value;  // 1 x batch
  };

  Output forward(const nn::Vector& theta, const nn::Matrix& obs, Cache* cache = nullptr) const {
    if (obs.rows() != arch_.input_dim)
      throw std::invalid_argument("observation dimension does not match network input");
    if (!obs.allFinite()) throw std::invalid_argument("non-finite observation");
    Output out;
    const nn::Matrix h = pi_trunk_.forward(theta, obs, cache ? &cache->pi_trunk : nullptr);
    out.policy = pi_head_.forward(theta, h, cache ? &cache->pi_head : nullptr);
    if (arch_.share_layers) {
      out.value = vf_head_.forward(theta, h, cache ? &cache->vf_head : nullptr);
    } else {
      const nn::Matrix hv = vf_trunk_.forward(theta, obs, cache ? &cache->vf_trunk : nullptr);
      out.value = vf_head_.forward(theta, hv, cache ? &cache->vf_head : nullptr);
    }
    return out;
  }

  /// Accumulates into `grad` given dLoss/dpolicy-outputs and dLoss/dvalue.
  void backward(const nn::Vector& theta, const Cache& cache, const nn::Matrix& d_policy,
                const nn::Matrix& d_value, nn::Vector& grad) const {
    nn::Matrix dh = pi_head_.backward(theta, cache.pi_head, d_policy, grad);
    if (arch_.share_layers) {
      dh += vf_head_.backward(theta, cache.vf_head, d_value, grad);
    } else {
      const nn::Matrix dhv = vf_head_.backward(theta, cache.vf_head, d_value, grad);
      vf_trunk_.backward(theta, cache.vf_trunk, dhv, grad);
    }
    pi_trunk_.backward(theta, cache.pi_trunk, dh, grad);
  }

  /// Hidden layers orthogonal with gain sqrt(2); policy head gain 0.01; value head gain 1.
  nn::Vector init(RngStream& rng) const {
    nn::Vector theta = nn::Vector::Zero(static_cast<Eigen::Index>(size_));
    const double g = std::numbers::sqrt2;
    pi_trunk_.init(theta, rng, g, g);
    pi_head_.init(theta, rng, 0.01, 0.01);
    if (!arch_.share_layers) vf_trunk_.init(theta, rng, g, g);
    vf_head_.init(theta, rng, 1.0, 1.0);
    return theta;
  }

 private:
  Architecture arch_;
  nn::Dense pi_trunk_, pi_head_, vf_trunk_, vf_head_;
  std::size_t size_ = 0;
};

/// Architecture plus flat parameter vector.
struct NetworkParams {
  Architecture arch;
  nn::Vector theta;

  static NetworkParams initialized(const Architecture& arch, RngStream& rng) {
    return NetworkParams{arch, ActorCritic(arch).init(rng)};
  }
  bool finite() const { return theta.allFinite(); }
};

inline nn::Matrix as_column(const std::vector<double>& obs) {
  return Eigen::Map<const nn::Matrix>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
}

/// Gibbs policy: action probabilities for one observation.
inline nn::Vector policy_forward_discrete(const NetworkParams& params, const std::vector<double>& obs) {
  if (params.arch.head != HeadKind::discrete) throw std::invalid_argument("network has no discrete head");
  const auto out = ActorCritic(params.arch).forward(params.theta, as_column(obs));
  return log_softmax(out.policy.col(0)).array().exp().matrix();
}

/// Gaussian policy: (mean, std) for one observation.
inline std::pair<double, double> policy_forward_gaussian(const NetworkParams& params,
                                                         const std::vector<double>& obs) {
  if (params.arch.head != HeadKind::gaussian) throw std::invalid_argument("network has no Gaussian head");
  const auto out = ActorCritic(params.arch).forward(params.theta, as_column(obs));
  return {out.policy(0, 0), softplus(out.policy(1, 0)) + kMinStd};
}

/// Maps discrete indices and normalized continuous samples to order quantities.
struct ActionMap {
  std::int64_t bound = 1;
  std::int64_t stride = 1;

  /// Stride 1 up to 256 buckets, otherwise ceil(bound/256).
  static std::int64_t auto_stride(std::int64_t bound) { return bound <= 256 ? 1 : (bound + 255) / 256; }

  int num_buckets() const { return static_cast<int>((bound + stride - 1) / stride + 1); }

  std::int64_t from_index(std::int64_t k) const { return std::min(k * stride, bound); }

  /// Normalized action in [-1,1] (clipped) to an order in [0, bound].
  std::int64_t from_normalized(double u) const {
    const double frac = (std::clamp(u, -1.0, 1.0) + 1.0) * 0.5;
    return std::llround(frac * static_cast<double>(bound));
  }
};

}  // namespace stockrl
