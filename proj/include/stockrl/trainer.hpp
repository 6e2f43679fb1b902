#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "stockrl/policy.hpp"
#include "stockrl/ppo.hpp"
#include "stockrl/rng.hpp"

namespace stockrl {

/// Environment contract shared by the single-agent and independent
/// multi-agent loops. Every agent observes its own vector and orders an
/// integer in [0, action_bound(i)].
template <class E>
concept MultiAgentEnv = requires(E& env, const E& cenv, std::span<const std::int64_t> actions,
                                 std::uint64_t seed, std::size_t i) {
  { cenv.num_agents() } -> std::convertible_to<std::size_t>;
  { cenv.obs_dim() } -> std::convertible_to<std::size_t>;
  { cenv.action_bound(i) } -> std::convertible_to<std::int64_t>;
  env.reset(seed);
  { cenv.observe(i) } -> std::convertible_to<std::vector<double>>;
  { env.step(actions).rewards } -> std::convertible_to<std::vector<double>>;
};

template <class E>
double reward_scale_for(const E& env, const PpoConfig& cfg) {
  if (cfg.reward_scale > 0.0) return cfg.reward_scale;
  if constexpr (requires { { env.reward_scale_hint() } -> std::convertible_to<double>; })
    return env.reward_scale_hint();
  return 1.0;
}

/// One learner: network, optimizer state, KL coefficient and action mapping.
struct Agent {
  NetworkParams params;
  AdamState adam;
  double kl_coeff = 0.2;
  ActionMap map;
};

/// Agents of one environment. With a shared policy every agent index maps to
/// learner 0.
struct AgentSet {
  std::vector<Agent> learners;
  std::size_t num_agents = 0;
  bool shared = false;

  Agent& learner_for(std::size_t agent) { return learners[shared ? 0 : agent]; }
  const Agent& learner_for(std::size_t agent) const { return learners[shared ? 0 : agent]; }

  static AgentSet create(std::size_t obs_dim, std::span<const std::int64_t> bounds,
                         const PpoConfig& cfg, std::uint64_t seed) {
    AgentSet set;
    set.num_agents = bounds.size();
    set.shared = cfg.share_policy && bounds.size() > 1;
    const std::size_t count = set.shared ? 1 : bounds.size();
    const std::int64_t max_bound = *std::max_element(bounds.begin(), bounds.end());
    for (std::size_t k = 0; k < count; ++k) {
      const std::int64_t bound = set.shared ? max_bound : bounds[k];
      Agent a;
      a.map.bound = bound;
      a.map.stride = cfg.action_stride > 0 ? cfg.action_stride : ActionMap::auto_stride(bound);
      Architecture arch;
      arch.input_dim = static_cast<int>(obs_dim);
      arch.hidden = cfg.hidden;
      arch.head = cfg.head;
      arch.num_actions = a.map.num_buckets();
      arch.share_layers = cfg.share_layers;
      arch.activation = cfg.activation;
      RngStream init_rng = RngStream(seed).split(Channel::init, k);
      a.params = NetworkParams::initialized(arch, init_rng);
      a.adam = AdamState(a.params.theta.size());
      a.kl_coeff = cfg.kl_coeff;
      set.learners.push_back(std::move(a));
    }
    return set;
  }
};

/// Per-agent trajectories from the same episodes plus the shared reward.
struct JointTrajectory {
  std::vector<Trajectory> agents;
  /// Unscaled cluster-average reward per step.
  std::vector<double> shared_reward;
};

/// Sampled actions for a block of observations of one learner.
struct ActionDraw {
  std::vector<double> action;  // bucket index or normalized sample
  std::vector<std::int64_t> order;
  std::vector<double> logp;
  std::vector<double> value;
  nn::Matrix dist;
};

inline ActionDraw draw_actions(const Agent& agent, const nn::Matrix& obs, std::span<RngStream*> rngs) {
  const ActorCritic net(agent.params.arch);
  const auto out = net.forward(agent.params.theta, obs);
  const auto m = static_cast<std::size_t>(obs.cols());
  ActionDraw d;
  d.action.resize(m);
  d.order.resize(m);
  d.logp.resize(m);
  d.value.resize(m);
  d.dist = out.policy;
  for (std::size_t j = 0; j < m; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    d.value[j] = out.value(0, c);
    RngStream& rng = *rngs[j];
    if (agent.params.arch.head == HeadKind::discrete) {
      const nn::Vector lp = log_softmax(out.policy.col(c));
      const double u = rng.uniform();
      double acc = 0.0;
      Eigen::Index k = 0;
      for (; k + 1 < lp.size(); ++k) {
        acc += std::exp(lp[k]);
        if (u < acc) break;
      }
      d.action[j] = static_cast<double>(k);
      d.logp[j] = lp[k];
      d.order[j] = agent.map.from_index(k);
    } else {
      const double mean = out.policy(0, c);
      const double sd = softplus(out.policy(1, c)) + kMinStd;
      const double u = mean + sd * rng.normal();
      d.action[j] = u;
      d.logp[j] = gaussian_log_prob(u, mean, sd);
      d.order[j] = agent.map.from_normalized(u);
    }
  }
  return d;
}

/// Greedy order for evaluation: the Gaussian mean or the most likely bucket.
inline std::int64_t greedy_order(const Agent& agent, const std::vector<double>& obs) {
  const auto out = ActorCritic(agent.params.arch).forward(agent.params.theta, as_column(obs));
  if (agent.params.arch.head == HeadKind::discrete) {
    Eigen::Index k = 0;
    out.policy.col(0).maxCoeff(&k);
    return agent.map.from_index(k);
  }
  return agent.map.from_normalized(out.policy(0, 0));
}

/// Runs one episode of `horizon` steps in every env of `envs` in lockstep.
/// Episode e is reset with env_seeds[e] and samples actions from its own
/// per-agent policy streams.
template <MultiAgentEnv Env>
std::vector<JointTrajectory> rollout_lockstep(std::span<Env> envs, const AgentSet& agents,
                                              std::span<const std::uint64_t> env_seeds,
                                              std::span<const std::uint64_t> policy_seeds,
                                              int horizon, double reward_scale) {
  const std::size_t n_env = envs.size();
  const std::size_t n_agents = agents.num_agents;
  std::vector<JointTrajectory> out(n_env);
  std::vector<std::vector<RngStream>> rngs(n_env);
  for (std::size_t e = 0; e < n_env; ++e) {
    if (envs[e].num_agents() != n_agents)
      throw std::invalid_argument("rollout: environment agent count does not match agent set");
    envs[e].reset(env_seeds[e]);
    out[e].agents.resize(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i)
      rngs[e].push_back(RngStream(policy_seeds[e]).split(Channel::policy, i));
  }
  const auto obs_dim = static_cast<Eigen::Index>(envs.empty() ? 0 : envs[0].obs_dim());
  std::vector<std::vector<std::int64_t>> joint(n_env, std::vector<std::int64_t>(n_agents));
  std::vector<RngStream*> column_rngs(n_env);

  for (int t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      nn::Matrix obs(obs_dim, static_cast<Eigen::Index>(n_env));
      std::vector<std::vector<double>> raw_obs(n_env);
      for (std::size_t e = 0; e < n_env; ++e) {
        raw_obs[e] = envs[e].observe(i);
        for (Eigen::Index r = 0; r < obs_dim; ++r)
          obs(r, static_cast<Eigen::Index>(e)) = raw_obs[e][static_cast<std::size_t>(r)];
        column_rngs[e] = &rngs[e][i];
      }
      const ActionDraw d = draw_actions(agents.learner_for(i), obs, column_rngs);
      for (std::size_t e = 0; e < n_env; ++e) {
        Trajectory& tr = out[e].agents[i];
        tr.obs.push_back(std::move(raw_obs[e]));
        tr.actions.push_back(d.action[e]);
        tr.logp.push_back(d.logp[e]);
        tr.values.push_back(d.value[e]);
        const auto col = d.dist.col(static_cast<Eigen::Index>(e));
        tr.dist_inputs.emplace_back(col.data(), col.data() + col.size());
        joint[e][i] = d.order[e];
      }
    }
    for (std::size_t e = 0; e < n_env; ++e) {
      const auto& res = envs[e].step(std::span<const std::int64_t>(joint[e]));
      const std::vector<double>& rewards = res.rewards;
      const double shared = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                            static_cast<double>(rewards.size());
      out[e].shared_reward.push_back(shared);
      const bool last = t + 1 == horizon;
      for (std::size_t i = 0; i < n_agents; ++i) {
        Trajectory& tr = out[e].agents[i];
        tr.rewards.push_back(shared * reward_scale);
        tr.episode_end.push_back(last);
        tr.cut_value.push_back(0.0);
      }
    }
  }
  // Truncated episodes bootstrap from the value of the final state.
  for (std::size_t i = 0; i < n_agents; ++i) {
    nn::Matrix obs(obs_dim, static_cast<Eigen::Index>(n_env));
    for (std::size_t e = 0; e < n_env; ++e) {
      const auto o = envs[e].observe(i);
      for (Eigen::Index r = 0; r < obs_dim; ++r)
        obs(r, static_cast<Eigen::Index>(e)) = o[static_cast<std::size_t>(r)];
    }
    const auto& learner = agents.learner_for(i);
    const auto v = ActorCritic(learner.params.arch).forward(learner.params.theta, obs).value;
    for (std::size_t e = 0; e < n_env; ++e)
      if (horizon > 0) out[e].agents[i].cut_value.back() = v(0, static_cast<Eigen::Index>(e));
  }
  return out;
}

/// Joint rollout of one episode of `steps` periods on `env`.
template <MultiAgentEnv Env>
JointTrajectory joint_rollout(Env& env, const AgentSet& agents, int steps, std::uint64_t seed,
                              double reward_scale = 1.0) {
  const std::uint64_t env_seed = derive_seed(seed, {static_cast<std::uint64_t>(Channel::env)});
  const std::uint64_t policy_seed = derive_seed(seed, {static_cast<std::uint64_t>(Channel::policy)});
  auto result = rollout_lockstep(std::span<Env>(&env, 1), agents, std::span(&env_seed, 1),
                                 std::span(&policy_seed, 1), steps, reward_scale);
  return std::move(result.front());
}

struct CurvePoint {
  int iteration = 0;
  std::int64_t timesteps = 0;
  /// Mean over episodes of the per-step cluster-average reward (unscaled).
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  AgentSet agents;
  std::vector<CurvePoint> curve;
  double reward_scale = 1.0;
};

/// Parameters went non-finite; carries the last finite parameters.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t agent, AgentSet last_good)
      : std::runtime_error(what), agent_(agent), last_good_(std::move(last_good)) {}
  std::size_t agent() const { return agent_; }
  const AgentSet& last_good() const { return last_good_; }

 private:
  std::size_t agent_;
  AgentSet last_good_;
};

struct UpdateStats {
  double kl = 0.0;
  double entropy = 0.0;
};

/// Mean KL(old || current) and entropy over a whole batch.
inline UpdateStats batch_kl_entropy(const Agent& agent, const SampleBatch& batch) {
  const ActorCritic net(agent.params.arch);
  const LossCoefficients none{0.0, 0.0, 0.0, 0.0};
  const auto r = ppo_loss(batch, agent.params.theta, net, 1.0, 1.0, none);
  return {r.kl, r.entropy};
}

/// Epochs of shuffled minibatch SGD for one learner.
inline UpdateStats ppo_update(Agent& agent, SampleBatch batch, const PpoConfig& cfg, RngStream& rng) {
  if (cfg.normalize_advantages) batch.normalize_advantages();
  const ActorCritic net(agent.params.arch);
  const Eigen::Index n = batch.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const LossCoefficients coeff{1.0, cfg.vf_loss_coeff, agent.kl_coeff, cfg.entropy_coeff};
  for (int epoch = 0; epoch < cfg.num_sgd_iter; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) {
      const auto j = static_cast<std::size_t>(rng.next() % k);
      std::swap(order[k - 1], order[j]);
    }
    for (Eigen::Index start = 0; start < n; start += cfg.minibatch_size) {
      const auto len = std::min<Eigen::Index>(cfg.minibatch_size, n - start);
      const SampleBatch mb =
          batch.select(std::span(order).subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len)));
      const auto res = ppo_loss(mb, agent.params.theta, net, cfg.clip_eps, cfg.vf_clip, coeff, cfg.grad_clip);
      adam_step(agent.params.theta, res.grad, agent.adam, cfg.lr);
    }
  }
  const UpdateStats stats = batch_kl_entropy(agent, batch);
  if (cfg.adaptive_kl) agent.kl_coeff = adapt_kl_coeff(agent.kl_coeff, stats.kl, cfg.kl_target);
  return stats;
}

/// Concatenates the trajectories of `agent` over episodes and builds its batch.
inline SampleBatch agent_batch(const std::vector<JointTrajectory>& episodes,
                               std::span<const std::size_t> agent_ids, const PpoConfig& cfg) {
  Trajectory all;
  for (const auto& ep : episodes)
    for (auto id : agent_ids) {
      const Trajectory& tr = ep.agents[id];
      all.obs.insert(all.obs.end(), tr.obs.begin(), tr.obs.end());
      all.actions.insert(all.actions.end(), tr.actions.begin(), tr.actions.end());
      all.logp.insert(all.logp.end(), tr.logp.begin(), tr.logp.end());
      all.values.insert(all.values.end(), tr.values.begin(), tr.values.end());
      all.rewards.insert(all.rewards.end(), tr.rewards.begin(), tr.rewards.end());
      all.episode_end.insert(all.episode_end.end(), tr.episode_end.begin(), tr.episode_end.end());
      all.cut_value.insert(all.cut_value.end(), tr.cut_value.begin(), tr.cut_value.end());
      all.dist_inputs.insert(all.dist_inputs.end(), tr.dist_inputs.begin(), tr.dist_inputs.end());
    }
  const auto adv = compute_gae(all, cfg.gamma, cfg.gae_lambda, cfg.use_gae);
  return SampleBatch::from(all, adv);
}

struct TrainHooks {
  /// Called after every iteration; returning false stops training early.
  std::function<bool(const CurvePoint&, const AgentSet&)> on_iteration;
};

/// Independent PPO over every agent of the environments produced by
/// `make_env`. Episodes are whole (`horizon` steps); each iteration collects
/// ceil(train_batch_size / horizon) of them. Results depend only on `seed`:
/// episode e of iteration k uses streams derived from (seed, k, e) no matter
/// how many workers run the rollouts.
template <class Factory>
  requires MultiAgentEnv<std::invoke_result_t<Factory&>>
TrainResult train_agents(Factory make_env, const PpoConfig& cfg, std::uint64_t seed,
                         const TrainHooks& hooks = {}) {
  using Env = std::invoke_result_t<Factory&>;
  cfg.validate();
  Env probe = make_env();
  const std::size_t n_agents = probe.num_agents();
  std::vector<std::int64_t> bounds(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) bounds[i] = probe.action_bound(i);

  TrainResult result;
  result.reward_scale = reward_scale_for(probe, cfg);
  result.agents = AgentSet::create(probe.obs_dim(), bounds, cfg, seed);
  AgentSet& agents = result.agents;

  const int episodes = (cfg.train_batch_size + cfg.horizon - 1) / cfg.horizon;
  std::vector<Env> envs;
  for (int e = 0; e < episodes; ++e) envs.push_back(make_env());

  std::int64_t timesteps = 0;
  for (int iter = 0; timesteps < cfg.total_timesteps; ++iter) {
    std::vector<std::uint64_t> env_seeds(static_cast<std::size_t>(episodes)),
        policy_seeds(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
      const auto k = static_cast<std::uint64_t>(iter), ee = static_cast<std::uint64_t>(e);
      env_seeds[static_cast<std::size_t>(e)] =
          derive_seed(seed, {static_cast<std::uint64_t>(Channel::env), k, ee});
      policy_seeds[static_cast<std::size_t>(e)] =
          derive_seed(seed, {static_cast<std::uint64_t>(Channel::policy), k, ee});
    }

    std::vector<JointTrajectory> batch(static_cast<std::size_t>(episodes));
    const int workers = std::min(cfg.workers, episodes);
    auto run_chunk = [&](int w) {
      const int lo = episodes * w / workers, hi = episodes * (w + 1) / workers;
      const auto off = static_cast<std::size_t>(lo), len = static_cast<std::size_t>(hi - lo);
      auto part = rollout_lockstep(std::span<Env>(envs).subspan(off, len), agents,
                                   std::span<const std::uint64_t>(env_seeds).subspan(off, len),
                                   std::span<const std::uint64_t>(policy_seeds).subspan(off, len),
                                   cfg.horizon, result.reward_scale);
      for (std::size_t k = 0; k < len; ++k) batch[off + k] = std::move(part[k]);
    };
    if (workers <= 1) {
      run_chunk(0);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(run_chunk, w);
    }
    timesteps += static_cast<std::int64_t>(episodes) * cfg.horizon;

    CurvePoint pt;
    pt.iteration = iter;
    pt.timesteps = timesteps;
    std::vector<double> per_episode;
    for (const auto& ep : batch)
      per_episode.push_back(std::accumulate(ep.shared_reward.begin(), ep.shared_reward.end(), 0.0) /
                            static_cast<double>(ep.shared_reward.size()));
    pt.mean_reward = std::accumulate(per_episode.begin(), per_episode.end(), 0.0) /
                     static_cast<double>(per_episode.size());
    double var = 0.0;
    for (double r : per_episode) var += (r - pt.mean_reward) * (r - pt.mean_reward);
    pt.std_reward = std::sqrt(var / static_cast<double>(per_episode.size()));

    const AgentSet last_good = agents;
    for (std::size_t k = 0; k < agents.learners.size(); ++k) {
      std::vector<std::size_t> ids;
      if (agents.shared) {
        ids.resize(n_agents);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
      } else {
        ids.push_back(k);
      }
      RngStream sgd_rng = RngStream(seed).split(Channel::policy, static_cast<std::uint64_t>(iter) + 1,
                                                1000 + k);
      UpdateStats s;
      try {
        s = ppo_update(agents.learners[k], agent_batch(batch, ids, cfg), cfg, sgd_rng);
      } catch (const std::runtime_error& err) {
        throw TrainingDiverged("agent " + std::to_string(k) + " diverged at iteration " +
                                   std::to_string(iter) + ": " + err.what(),
                               k, last_good);
      }
      if (!agents.learners[k].params.finite())
        throw TrainingDiverged("agent " + std::to_string(k) + " produced non-finite parameters at iteration " +
                                   std::to_string(iter),
                               k, last_good);
      pt.kl += s.kl / static_cast<double>(agents.learners.size());
      pt.entropy += s.entropy / static_cast<double>(agents.learners.size());
    }
    result.curve.push_back(pt);
    if (hooks.on_iteration && !hooks.on_iteration(pt, agents)) break;
  }
  return result;
}

/// Single-agent PPO: the environment must expose exactly one agent.
template <class Factory>
  requires MultiAgentEnv<std::invoke_result_t<Factory&>>
TrainResult train_single(Factory make_env, const PpoConfig& cfg, std::uint64_t seed,
                         const TrainHooks& hooks = {}) {
  if (make_env().num_agents() != 1)
    throw std::invalid_argument("train_single: environment must have exactly one agent");
  return train_agents(std::move(make_env), cfg, seed, hooks);
}

}  // namespace stockrl
