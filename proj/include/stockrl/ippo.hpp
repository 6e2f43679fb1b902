#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "stockrl/evaluate.hpp"
#include "stockrl/inventory_env.hpp"
#include "stockrl/trainer.hpp"

namespace stockrl {

/// Whether agents of `cluster` see the free-capacity feature under `cfg`.
inline bool observes_space(const ClusterSpec& cluster, const PpoConfig& cfg) {
  return cfg.observe_space < 0 ? cluster.size() > 1 : cfg.observe_space > 0;
}

/// Independent PPO on one cluster: one learner per item, each trained on its
/// own trajectory with the shared cluster-average reward.
inline TrainResult ippo_train(const ClusterSpec& cluster, const PpoConfig& cfg, std::uint64_t seed,
                              const TrainHooks& hooks = {}) {
  cluster.validate();
  const bool space = observes_space(cluster, cfg);
  return train_agents([&cluster, space] { return InventoryEnv(cluster, space); }, cfg, seed, hooks);
}

/// Single-agent PPO on a one-item cluster.
inline TrainResult ppo_train_item(const ClusterSpec& cluster, const PpoConfig& cfg, std::uint64_t seed,
                                  const TrainHooks& hooks = {}) {
  cluster.validate();
  const bool space = observes_space(cluster, cfg);
  return train_single([&cluster, space] { return InventoryEnv(cluster, space); }, cfg, seed, hooks);
}

struct BaselineLine {
  std::string policy;
  /// Mean over episodes of the per-step cluster-average reward.
  double mean_reward = 0.0;
  double normalized = 0.0;
};

struct BaselineLines {
  std::vector<BaselineLine> lines;
  /// Divisor applied to every reward curve of the cluster.
  double normalizer = 1.0;

  double normalize(double reward) const { return reward / normalizer; }
};

/// Mean per-step cluster-average reward of `policy` over `replications`
/// episodes of `horizon` periods.
inline double mean_step_reward(const ClusterSpec& cluster, const PolicySet& policy, int replications,
                               int horizon, std::uint64_t seed) {
  EvalOptions opt;
  opt.replications = replications;
  opt.horizon = horizon;
  opt.root_seed = seed;
  const auto rep = evaluate(cluster, policy, opt);
  // Per-item weighted costs summed over the episode; the reward is their negated mean.
  double total = 0.0;
  for (const auto& s : rep.items) total += s.mean_weighted_cost;
  return -total / static_cast<double>(cluster.size()) / static_cast<double>(horizon);
}

/// Horizontal reference lines for learning curves. The normalizer is the
/// absolute MinMax reward, so the MinMax line sits at -1; clusters whose
/// MinMax reward is zero are left unnormalized.
inline BaselineLines baseline_reward_lines(const ClusterSpec& cluster, std::span<const PolicySet> policies,
                                           int replications, std::uint64_t seed, int horizon = 200) {
  BaselineLines out;
  for (const auto& p : policies)
    out.lines.push_back({p.name, mean_step_reward(cluster, p, replications, horizon, seed), 0.0});
  const PolicySet minmax = minmax_policy(cluster);
  double ref = 0.0;
  bool found = false;
  for (const auto& l : out.lines)
    if (l.policy == "minmax") {
      ref = l.mean_reward;
      found = true;
    }
  if (!found) ref = mean_step_reward(cluster, minmax, replications, horizon, seed);
  out.normalizer = std::fabs(ref) > 0.0 ? std::fabs(ref) : 1.0;
  for (auto& l : out.lines) l.normalized = out.normalize(l.mean_reward);
  return out;
}

inline BaselineLines baseline_reward_lines(const ClusterSpec& cluster, int replications, std::uint64_t seed,
                                           int horizon = 200) {
  const std::vector<PolicySet> policies{minmax_policy(cluster), oracle_policy(cluster)};
  return baseline_reward_lines(cluster, policies, replications, seed, horizon);
}

}  // namespace stockrl
