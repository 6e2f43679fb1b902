#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "stockrl/baselines.hpp"
#include "stockrl/inventory_env.hpp"
#include "stockrl/rng.hpp"
#include "stockrl/trainer.hpp"

namespace stockrl {

/// A controller for every item of one cluster. `act` receives the
/// environment (read-only) and one policy stream per item.
struct PolicySet {
  std::string name;
  std::size_t arity = 0;
  std::function<std::vector<std::int64_t>(const InventoryEnv&, std::span<RngStream>)> act;
};

inline PolicySet zero_order_policy(const ClusterSpec& cluster) {
  return {"zero", cluster.size(),
          [n = cluster.size()](const InventoryEnv&, std::span<RngStream>) {
            return std::vector<std::int64_t>(n, 0);
          }};
}

inline PolicySet minmax_policy(const ClusterSpec& cluster, double service_level = 0.90) {
  std::vector<MinMaxPolicy> per_item;
  for (std::size_t i = 0; i < cluster.size(); ++i)
    per_item.push_back(MinMaxPolicy::for_item(cluster.items[i], cluster.item_capacity[i], service_level));
  return {"minmax", cluster.size(),
          [per_item](const InventoryEnv& env, std::span<RngStream>) {
            std::vector<std::int64_t> a(per_item.size());
            for (std::size_t i = 0; i < a.size(); ++i)
              a[i] = per_item[i].act(static_cast<double>(env.state().levels[i]));
            return a;
          }};
}

inline PolicySet oracle_policy(const ClusterSpec& cluster) {
  std::vector<OraclePolicy> per_item;
  for (std::size_t i = 0; i < cluster.size(); ++i)
    per_item.push_back(OraclePolicy::for_item(cluster.items[i], cluster.item_capacity[i]));
  return {"oracle", cluster.size(),
          [per_item](const InventoryEnv&, std::span<RngStream> rngs) {
            std::vector<std::int64_t> a(per_item.size());
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = per_item[i].act(rngs[i]);
            return a;
          }};
}

/// Greedy actions of trained agents. The environment must produce the
/// observation layout the agents were trained on.
inline PolicySet learned_policy(AgentSet agents, std::string name = "ppo") {
  const std::size_t n = agents.num_agents;
  return {std::move(name), n,
          [agents = std::move(agents)](const InventoryEnv& env, std::span<RngStream>) {
            std::vector<std::int64_t> a(agents.num_agents);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = greedy_order(agents.learner_for(i), env.observe(i));
            return a;
          }};
}

struct EvalOptions {
  int horizon = 240;
  int replications = 100;
  std::uint64_t root_seed = 0;
  int threads = 1;
  /// Count backlogged units instead of shortage periods.
  bool shortage_units = false;
  /// Observation layout handed to learned policies.
  bool observe_space = false;
};

struct ItemStats {
  std::int64_t id = 0;
  double mean_cost = 0.0;
  double std_cost = 0.0;
  double mean_shortages = 0.0;
  double std_shortages = 0.0;
  /// Training-objective (weighted) cost, for diagnostics.
  double mean_weighted_cost = 0.0;
  double mean_order_cost = 0.0;
  double mean_hold_cost = 0.0;
  double mean_short_cost = 0.0;
};

/// Per-replication totals, one entry per item.
struct ReplicationLog {
  std::uint64_t seed = 0;
  std::vector<double> cost;
  std::vector<double> weighted_cost;
  std::vector<double> shortages;
  std::vector<RawCost> parts;
};

struct EvalReport {
  std::string policy;
  std::string cluster = "0";
  std::vector<ItemStats> items;
  ItemStats cluster_stats;
  int replications = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<ReplicationLog> logs;
};

inline std::uint64_t item_set_hash(const ClusterSpec& cluster) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& it : cluster.items) h = splitmix64(h ^ static_cast<std::uint64_t>(it.id));
  return h;
}

inline std::uint64_t replication_seed(std::uint64_t root, int replication, const ClusterSpec& cluster) {
  return derive_seed(root, {static_cast<std::uint64_t>(replication), item_set_hash(cluster)});
}

/// One episode of `horizon` periods from reset(seed).
inline ReplicationLog run_replication(const ClusterSpec& cluster, const PolicySet& policy, int horizon,
                                      std::uint64_t seed, const EvalOptions& opt) {
  InventoryEnv env(cluster, opt.observe_space);
  env.reset(seed);
  std::vector<RngStream> rngs;
  for (std::size_t i = 0; i < cluster.size(); ++i) rngs.push_back(RngStream(seed).split(Channel::policy, i));
  ReplicationLog log;
  log.seed = seed;
  const auto n = cluster.size();
  log.cost.assign(n, 0.0);
  log.weighted_cost.assign(n, 0.0);
  log.shortages.assign(n, 0.0);
  log.parts.assign(n, RawCost{});
  for (int t = 0; t < horizon; ++t) {
    const auto before = env.state().backlogs;
    const auto actions = policy.act(env, rngs);
    const auto& out = env.step(actions);
    for (std::size_t i = 0; i < n; ++i) {
      log.cost[i] += out.raw_costs[i].total();
      log.parts[i].order += out.raw_costs[i].order;
      log.parts[i].hold += out.raw_costs[i].hold;
      log.parts[i].shortage += out.raw_costs[i].shortage;
      log.weighted_cost[i] += out.costs[i];
      if (opt.shortage_units)
        log.shortages[i] += static_cast<double>(env.state().backlogs[i] - before[i]);
      else
        log.shortages[i] += out.shortage_flags[i] ? 1.0 : 0.0;
    }
  }
  return log;
}

namespace detail {

inline std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

}  // namespace detail

/// Replications over an explicit list of seeds, reduced in list order.
inline EvalReport evaluate_seeds(const ClusterSpec& cluster, const PolicySet& policy,
                                 std::span<const std::uint64_t> seeds, const EvalOptions& opt) {
  if (policy.arity != cluster.size())
    throw ConfigError("policy '" + policy.name + "' controls " + std::to_string(policy.arity) +
                      " items but the cluster has " + std::to_string(cluster.size()));
  if (opt.horizon <= 0) throw ConfigError("horizon must be positive");
  if (seeds.empty()) throw ConfigError("replications must be positive");
  const std::size_t reps = seeds.size();
  std::vector<ReplicationLog> logs(reps);
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(reps)));
  auto work = [&](int w) {
    for (std::size_t r = static_cast<std::size_t>(w); r < reps; r += static_cast<std::size_t>(threads))
      logs[r] = run_replication(cluster, policy, opt.horizon, seeds[r], opt);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }

  EvalReport rep;
  rep.policy = policy.name;
  rep.replications = static_cast<int>(reps);
  rep.horizon = opt.horizon;
  rep.seed = opt.root_seed;
  const auto n = cluster.size();
  std::vector<double> cluster_cost(reps, 0.0), cluster_short(reps, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> c(reps), s(reps), w(reps), po(reps), ph(reps), ps(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      c[r] = logs[r].cost[i];
      s[r] = logs[r].shortages[i];
      w[r] = logs[r].weighted_cost[i];
      po[r] = logs[r].parts[i].order;
      ph[r] = logs[r].parts[i].hold;
      ps[r] = logs[r].parts[i].shortage;
      cluster_cost[r] += c[r] / static_cast<double>(n);
      cluster_short[r] += s[r] / static_cast<double>(n);
    }
    ItemStats st;
    st.id = cluster.items[i].id;
    std::tie(st.mean_cost, st.std_cost) = detail::mean_std(c);
    std::tie(st.mean_shortages, st.std_shortages) = detail::mean_std(s);
    st.mean_weighted_cost = detail::mean_std(w).first;
    st.mean_order_cost = detail::mean_std(po).first;
    st.mean_hold_cost = detail::mean_std(ph).first;
    st.mean_short_cost = detail::mean_std(ps).first;
    rep.items.push_back(st);
  }
  ItemStats& cs = rep.cluster_stats;
  for (const auto& st : rep.items) {
    cs.mean_cost += st.mean_cost / static_cast<double>(n);
    cs.mean_shortages += st.mean_shortages / static_cast<double>(n);
    cs.mean_weighted_cost += st.mean_weighted_cost / static_cast<double>(n);
    cs.mean_order_cost += st.mean_order_cost / static_cast<double>(n);
    cs.mean_hold_cost += st.mean_hold_cost / static_cast<double>(n);
    cs.mean_short_cost += st.mean_short_cost / static_cast<double>(n);
  }
  cs.std_cost = detail::mean_std(cluster_cost).second;
  cs.std_shortages = detail::mean_std(cluster_short).second;
  rep.logs = std::move(logs);
  return rep;
}

/// Evaluation protocol: `replications` fresh episodes of `horizon` periods,
/// replication r seeded from (root seed, r, item set).
inline EvalReport evaluate(const ClusterSpec& cluster, const PolicySet& policy, const EvalOptions& opt) {
  if (opt.replications <= 0) throw ConfigError("replications must be positive");
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < opt.replications; ++r) seeds.push_back(replication_seed(opt.root_seed, r, cluster));
  return evaluate_seeds(cluster, policy, seeds, opt);
}

inline constexpr const char* kReportHeader =
    "scope,id,policy,mean_cost,std_cost,mean_shortages,std_shortages,reps,horizon,seed";

inline void write_report_rows(std::ostream& os, const EvalReport& r) {
  if (r.items.empty()) return;
  auto row = [&](const char* scope, const std::string& id, const ItemStats& s) {
    os << scope << ',' << id << ',' << r.policy << ',' << s.mean_cost << ',' << s.std_cost << ','
       << s.mean_shortages << ',' << s.std_shortages << ',' << r.replications << ',' << r.horizon << ','
       << r.seed << '\n';
  };
  for (const auto& s : r.items) row("item", std::to_string(s.id), s);
  row("cluster", r.cluster, r.cluster_stats);
}

/// CSV report: one row per item and one cluster-average row per report.
inline void export_report(std::span<const EvalReport> reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report '" + path + "'");
  out << std::setprecision(12);
  out << kReportHeader << '\n';
  for (const auto& r : reports) write_report_rows(out, r);
  if (!out) throw std::runtime_error("error writing report '" + path + "'");
}

inline void export_report(const EvalReport& report, const std::string& path) {
  export_report(std::span<const EvalReport>(&report, 1), path);
}

}  // namespace stockrl
