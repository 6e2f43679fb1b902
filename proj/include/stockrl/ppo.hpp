#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stockrl/nn.hpp"
#include "stockrl/policy.hpp"

namespace stockrl {

/// PPO hyper-parameters. Defaults are the shared training settings; the
/// per-agent presets live in presets.hpp.
struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 1.0;
  bool use_gae = true;
  double clip_eps = 0.3;
  double vf_clip = 1e3;
  double vf_loss_coeff = 1.0;
  double kl_coeff = 0.2;
  double kl_target = 0.01;
  bool adaptive_kl = true;
  double entropy_coeff = 0.01;
  double lr = 1e-4;
  int horizon = 200;
  int rollout_fragment_length = 200;
  int train_batch_size = 8000;
  int minibatch_size = 250;
  int num_sgd_iter = 20;
  double grad_clip = 40.0;
  std::vector<int> hidden{64, 64};
  bool share_layers = false;
  nn::Activation activation = nn::Activation::relu;
  HeadKind head = HeadKind::gaussian;
  bool normalize_advantages = true;
  /// Multiplier applied to environment rewards before learning; <= 0 lets the
  /// environment pick one.
  double reward_scale = 0.0;
  /// Discrete bucket stride; 0 selects ActionMap::auto_stride.
  std::int64_t action_stride = 0;
  std::int64_t total_timesteps = 1'000'000;
  /// Rollout worker threads.
  int workers = 1;
  /// Append the cluster's free-capacity fraction to each observation
  /// (-1 = only for clusters of more than one item).
  int observe_space = -1;
  /// One set of weights for every agent of a cluster.
  bool share_policy = false;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must lie in [0,1]");
    if (!(clip_eps > 0.0)) throw std::invalid_argument("clip_eps must be positive");
    if (!(vf_clip > 0.0)) throw std::invalid_argument("vf_clip must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (horizon <= 0 || train_batch_size <= 0 || minibatch_size <= 0 || num_sgd_iter <= 0)
      throw std::invalid_argument("horizon, batch sizes and epochs must be positive");
    if (hidden.empty()) throw std::invalid_argument("at least one hidden layer is required");
    if (workers <= 0) throw std::invalid_argument("workers must be positive");
  }
};

/// Rollout of one agent. Step t ends an episode when episode_end[t] is set;
/// cut_value[t] then holds the bootstrap value of the truncated state (0 for a
/// terminal one).
struct Trajectory {
  std::vector<std::vector<double>> obs;
  /// Discrete bucket index, or the normalized pre-clip Gaussian sample.
  std::vector<double> actions;
  std::vector<double> logp;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<bool> episode_end;
  std::vector<double> cut_value;
  /// Behaviour-policy head outputs, for the KL term.
  std::vector<std::vector<double>> dist_inputs;

  std::size_t size() const { return rewards.size(); }
};

struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

/// Generalized advantage estimation. Without GAE the advantage is the
/// bootstrapped discounted return minus the value baseline.
inline AdvantageResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                                   const std::vector<bool>& episode_end,
                                   std::span<const double> cut_value, double gamma, double lambda,
                                   bool use_gae) {
  const std::size_t n = rewards.size();
  if (values.size() != n || episode_end.size() != n || cut_value.size() != n)
    throw std::invalid_argument("compute_gae: misaligned trajectory");
  if (n > 0 && !episode_end[n - 1])
    throw std::invalid_argument("compute_gae: trajectory must end on an episode boundary");
  AdvantageResult r;
  r.advantages.resize(n);
  r.value_targets.resize(n);
  double carry = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const bool end = episode_end[k];
    if (use_gae) {
      const double next_v = end ? cut_value[k] : values[k + 1];
      const double delta = rewards[k] + gamma * next_v - values[k];
      carry = delta + gamma * lambda * (end ? 0.0 : carry);
      r.advantages[k] = carry;
      r.value_targets[k] = carry + values[k];
    } else {
      carry = rewards[k] + gamma * (end ? cut_value[k] : carry);
      r.advantages[k] = carry - values[k];
      r.value_targets[k] = carry;
    }
  }
  return r;
}

inline AdvantageResult compute_gae(const Trajectory& traj, double gamma, double lambda, bool use_gae) {
  return compute_gae(traj.rewards, traj.values, traj.episode_end, traj.cut_value, gamma, lambda,
                     use_gae);
}

/// Column-major training batch for one agent.
struct SampleBatch {
  nn::Matrix obs;         // obs_dim x n
  nn::Matrix dist_old;    // head outputs x n
  nn::Vector actions;
  nn::Vector logp_old;
  nn::Vector value_old;
  nn::Vector advantages;
  nn::Vector value_targets;

  Eigen::Index size() const { return actions.size(); }

  static SampleBatch from(const Trajectory& traj, const AdvantageResult& adv) {
    const auto n = static_cast<Eigen::Index>(traj.size());
    SampleBatch b;
    if (n == 0) return b;
    const auto d = static_cast<Eigen::Index>(traj.obs.front().size());
    const auto k = static_cast<Eigen::Index>(traj.dist_inputs.front().size());
    b.obs.resize(d, n);
    b.dist_old.resize(k, n);
    b.actions.resize(n);
    b.logp_old.resize(n);
    b.value_old.resize(n);
    b.advantages.resize(n);
    b.value_targets.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto u = static_cast<std::size_t>(j);
      for (Eigen::Index i = 0; i < d; ++i) b.obs(i, j) = traj.obs[u][static_cast<std::size_t>(i)];
      for (Eigen::Index i = 0; i < k; ++i) b.dist_old(i, j) = traj.dist_inputs[u][static_cast<std::size_t>(i)];
      b.actions[j] = traj.actions[u];
      b.logp_old[j] = traj.logp[u];
      b.value_old[j] = traj.values[u];
      b.advantages[j] = adv.advantages[u];
      b.value_targets[j] = adv.value_targets[u];
    }
    return b;
  }

  SampleBatch select(std::span<const Eigen::Index> idx) const {
    SampleBatch b;
    const auto m = static_cast<Eigen::Index>(idx.size());
    b.obs.resize(obs.rows(), m);
    b.dist_old.resize(dist_old.rows(), m);
    b.actions.resize(m);
    b.logp_old.resize(m);
    b.value_old.resize(m);
    b.advantages.resize(m);
    b.value_targets.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto s = idx[static_cast<std::size_t>(j)];
      b.obs.col(j) = obs.col(s);
      b.dist_old.col(j) = dist_old.col(s);
      b.actions[j] = actions[s];
      b.logp_old[j] = logp_old[s];
      b.value_old[j] = value_old[s];
      b.advantages[j] = advantages[s];
      b.value_targets[j] = value_targets[s];
    }
    return b;
  }

  /// Zero mean, unit standard deviation advantages.
  void normalize_advantages() {
    if (advantages.size() < 2) return;
    const double mean = advantages.mean();
    const double var = (advantages.array() - mean).square().mean();
    advantages = ((advantages.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
  }
};

/// Weights of the four objective terms. The minimized loss is
/// -actor * L_actor + critic * L_critic + kl * KL - entropy * H.
struct LossCoefficients {
  double actor = 1.0;
  double critic = 1.0;
  double kl = 0.2;
  double entropy = 0.01;
};

struct LossResult {
  double loss = 0.0;
  double actor = 0.0;    // clipped surrogate, to be maximized
  double surrogate = 0.0;  // unclipped surrogate
  double critic = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // before clipping
  nn::Vector grad;
};

/// Clipped PPO objective and its exact gradient with respect to theta.
/// Old-policy quantities come from the batch (recorded at rollout time).
/// The returned gradient is that of the minimized loss; its global norm is
/// clipped to `grad_clip` (pass infinity to disable).
inline LossResult ppo_loss(const SampleBatch& batch, const nn::Vector& theta, const ActorCritic& net,
                           double clip_eps, double vf_clip, const LossCoefficients& coeff,
                           double grad_clip = std::numeric_limits<double>::infinity()) {
  const Eigen::Index m = batch.size();
  if (m == 0) throw std::invalid_argument("ppo_loss: empty minibatch");
  const auto& arch = net.architecture();
  ActorCritic::Cache cache;
  const auto out = net.forward(theta, batch.obs, &cache);
  const double inv_m = 1.0 / static_cast<double>(m);

  nn::Matrix d_pol = nn::Matrix::Zero(out.policy.rows(), m);
  nn::Matrix d_val = nn::Matrix::Zero(1, m);
  LossResult r;

  for (Eigen::Index j = 0; j < m; ++j) {
    double logp = 0.0;
    // d(logp)/d(head), d(entropy)/d(head), d(kl)/d(head) for this column.
    nn::Vector g_logp = nn::Vector::Zero(out.policy.rows());
    nn::Vector g_ent = nn::Vector::Zero(out.policy.rows());
    nn::Vector g_kl = nn::Vector::Zero(out.policy.rows());
    double ent = 0.0, kl = 0.0;

    if (arch.head == HeadKind::discrete) {
      const nn::Vector lp = log_softmax(out.policy.col(j));
      const nn::Vector p = lp.array().exp().matrix();
      const nn::Vector lp_old = log_softmax(batch.dist_old.col(j));
      const nn::Vector p_old = lp_old.array().exp().matrix();
      const auto a = static_cast<Eigen::Index>(batch.actions[j]);
      if (a < 0 || a >= lp.size()) throw std::out_of_range("ppo_loss: discrete action out of range");
      logp = lp[a];
      g_logp = -p;
      g_logp[a] += 1.0;
      ent = -(p.array() * lp.array()).sum();
      g_ent = (-p.array() * (lp.array() + ent)).matrix();
      kl = (p_old.array() * (lp_old.array() - lp.array())).sum();
      g_kl = p - p_old;
    } else {
      const double mean = out.policy(0, j);
      const double raw = out.policy(1, j);
      const double sd = softplus(raw) + kMinStd;
      const double dsd = sigmoid(raw);
      const double u = batch.actions[j];
      logp = gaussian_log_prob(u, mean, sd);
      const double diff = u - mean;
      g_logp[0] = diff / (sd * sd);
      g_logp[1] = (diff * diff / (sd * sd * sd) - 1.0 / sd) * dsd;
      ent = gaussian_entropy(sd);
      g_ent[1] = dsd / sd;
      const double m_old = batch.dist_old(0, j);
      const double sd_old = softplus(batch.dist_old(1, j)) + kMinStd;
      kl = gaussian_kl(m_old, sd_old, mean, sd);
      const double dm = mean - m_old;
      g_kl[0] = dm / (sd * sd);
      g_kl[1] = (1.0 / sd - (sd_old * sd_old + dm * dm) / (sd * sd * sd)) * dsd;
    }

    const double adv = batch.advantages[j];
    const double ratio = std::exp(logp - batch.logp_old[j]);
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_term = ratio * adv;
    const double clipped_term = clipped * adv;
    r.surrogate += unclipped_term * inv_m;
    r.actor += std::min(unclipped_term, clipped_term) * inv_m;
    // The min selects the unclipped branch unless the clipped one is strictly smaller.
    const double d_actor_d_logp = clipped_term < unclipped_term ? 0.0 : unclipped_term;

    const double v = out.value(0, j);
    const double v_old = batch.value_old[j];
    const double target = batch.value_targets[j];
    const double dv = v - v_old;
    const double v_clip = v_old + std::clamp(dv, -vf_clip, vf_clip);
    const double err_u = (v - target) * (v - target);
    const double err_c = (v_clip - target) * (v_clip - target);
    r.critic += std::max(err_u, err_c) * inv_m;
    double d_critic;
    if (err_u >= err_c)
      d_critic = 2.0 * (v - target);
    else
      d_critic = std::fabs(dv) < vf_clip ? 2.0 * (v_clip - target) : 0.0;

    r.kl += kl * inv_m;
    r.entropy += ent * inv_m;

    d_pol.col(j) = inv_m * (-coeff.actor * d_actor_d_logp * g_logp + coeff.kl * g_kl -
                            coeff.entropy * g_ent);
    d_val(0, j) = inv_m * coeff.critic * d_critic;
  }

  r.loss = -coeff.actor * r.actor + coeff.critic * r.critic + coeff.kl * r.kl -
           coeff.entropy * r.entropy;
  if (!std::isfinite(r.loss)) throw std::runtime_error("ppo_loss: non-finite loss");
  r.grad = nn::Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
  net.backward(theta, cache, d_pol, d_val, r.grad);
  r.grad_norm = r.grad.norm();
  if (r.grad_norm > grad_clip) r.grad *= grad_clip / r.grad_norm;
  return r;
}

/// Bias-corrected Adam moments.
struct AdamState {
  nn::Vector m;
  nn::Vector v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n = 0) : m(nn::Vector::Zero(n)), v(nn::Vector::Zero(n)) {}
};

/// One descent step on `params` (the gradient is that of a minimized loss).
inline void adam_step(nn::Vector& params, const nn::Vector& grad, AdamState& state, double lr) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

/// Adaptive KL penalty: double above 2x target, halve below half the target.
inline double adapt_kl_coeff(double coeff, double measured_kl, double target) {
  if (measured_kl > 2.0 * target) return coeff * 2.0;
  if (measured_kl < 0.5 * target) return coeff * 0.5;
  return coeff;
}

}  // namespace stockrl
