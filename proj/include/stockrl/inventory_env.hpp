#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stockrl/rng.hpp"
#include "stockrl/stochastic.hpp"

namespace stockrl {

/// Raised for invalid cluster or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CostWeights {
  double order = 1.0 / 3.0;
  double hold = 1.0 / 3.0;
  double shortage = 1.0 / 3.0;

  void validate() const {
    for (double w : {order, hold, shortage})
      if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("cost weights must lie in [0,1]");
    if (std::fabs(order + hold + shortage - 1.0) > 1e-12)
      throw ConfigError("cost weights must sum to 1");
  }
};

struct ItemSpec {
  std::int64_t id = 0;
  DemandModel demand;
  LeadTimeModel lead;
  double cost_order = 0.0;
  double cost_hold = 0.0;
  double cost_short = 0.0;
  double volume = 1.0;

  void validate() const {
    demand.validate();
    lead.validate();
    if (!(cost_order >= 0.0 && cost_hold >= 0.0 && cost_short >= 0.0))
      throw ConfigError("item " + std::to_string(id) + ": costs must be non-negative");
    if (!(volume > 0.0)) throw ConfigError("item " + std::to_string(id) + ": volume must be > 0");
  }
};

/// Four mean lead-time demands of headroom, at least one unit.
inline std::int64_t default_item_capacity(const ItemSpec& item) {
  const double cap = std::ceil(4.0 * item.demand.mean() / item.lead.p - 1e-9);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(cap));
}

/// A group of items sharing one storage capacity.
struct ClusterSpec {
  std::vector<ItemSpec> items;
  /// Shared storage capacity, in volume units.
  std::int64_t capacity = 0;
  /// Per-item capacity; bounds what the baseline and learned controllers order.
  std::vector<std::int64_t> item_capacity;
  CostWeights cost_weights;
  std::optional<std::vector<std::int64_t>> initial_levels;

  std::size_t size() const { return items.size(); }

  void validate() const {
    if (items.empty()) throw ConfigError("cluster has no items");
    if (capacity <= 0) throw ConfigError("cluster capacity must be positive");
    if (item_capacity.size() != items.size())
      throw ConfigError("item capacity list does not match item count");
    for (std::size_t i = 0; i < items.size(); ++i) {
      items[i].validate();
      if (item_capacity[i] <= 0 || item_capacity[i] > capacity)
        throw ConfigError("item capacity must lie in [1, cluster capacity]");
      for (std::size_t j = 0; j < i; ++j)
        if (items[j].id == items[i].id)
          throw ConfigError("duplicate item id " + std::to_string(items[i].id) + " in cluster");
    }
    cost_weights.validate();
    if (initial_levels && initial_levels->size() != items.size())
      throw ConfigError("initial level list does not match item count");
  }

  /// Builds a cluster with default capacities: each item gets
  /// default_item_capacity and the cluster capacity is their sum, unless overridden.
  static ClusterSpec make(std::vector<ItemSpec> items, std::optional<std::int64_t> capacity = {},
                          CostWeights weights = {}) {
    ClusterSpec c;
    c.items = std::move(items);
    c.cost_weights = weights;
    std::int64_t total = 0;
    for (const auto& it : c.items) {
      const auto cap = default_item_capacity(it);
      c.item_capacity.push_back(cap);
      total += cap;
    }
    if (capacity) {
      c.capacity = *capacity;
      if (c.items.size() == 1) c.item_capacity[0] = *capacity;
      for (auto& cap : c.item_capacity) cap = std::min(cap, *capacity);
    } else {
      c.capacity = total;
    }
    c.validate();
    return c;
  }
};

struct PendingOrder {
  std::size_t item_index = 0;
  std::int64_t quantity = 0;
  std::int64_t arrival_period = 0;
};

struct InventoryState {
  std::int64_t t = 0;
  std::vector<std::int64_t> levels;
  std::vector<std::int64_t> backlogs;
  std::vector<PendingOrder> pending;
  std::vector<std::int64_t> last_arrival;
  std::vector<std::int64_t> last_lead;
};

struct RawCost {
  double order = 0.0;
  double hold = 0.0;
  double shortage = 0.0;
  double total() const { return order + hold + shortage; }
};

struct StepCost {
  double weighted = 0.0;
  RawCost raw;
};

struct StepOutcome {
  std::vector<std::int64_t> arrivals;
  std::vector<double> weights;
  std::vector<std::int64_t> received;
  std::vector<std::int64_t> demands;
  bool overflow = false;
  /// Free space before the arrivals were stored.
  double available = 0.0;
  std::vector<double> costs;
  std::vector<RawCost> raw_costs;
  std::vector<double> rewards;
  double cluster_reward = 0.0;
  std::vector<bool> shortage_flags;
};

/// Per-item demand and lead-time substreams for one environment instance.
struct EnvRng {
  std::vector<RngStream> demand;
  std::vector<RngStream> lead;

  static EnvRng from_seed(std::uint64_t seed, std::size_t n_items) {
    EnvRng r;
    const RngStream root(seed);
    for (std::size_t i = 0; i < n_items; ++i) {
      r.demand.push_back(root.split(Channel::demand, i));
      r.lead.push_back(root.split(Channel::lead_time, i));
    }
    return r;
  }
};

inline std::vector<std::int64_t> default_initial_levels(const ClusterSpec& cluster) {
  const auto n = static_cast<std::int64_t>(cluster.size());
  return std::vector<std::int64_t>(cluster.size(), cluster.capacity / (2 * n));
}

/// Initial state. The seed is accepted for interface symmetry; the default
/// initialization is deterministic.
inline InventoryState reset(const ClusterSpec& cluster, [[maybe_unused]] std::uint64_t seed = 0) {
  cluster.validate();
  const auto n = cluster.size();
  InventoryState s;
  s.levels = cluster.initial_levels ? *cluster.initial_levels : default_initial_levels(cluster);
  double used = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.levels[i] < 0) throw ConfigError("initial levels must be non-negative");
    used += static_cast<double>(s.levels[i]) * cluster.items[i].volume;
  }
  if (used > static_cast<double>(cluster.capacity))
    throw ConfigError("initial levels exceed cluster capacity");
  s.backlogs.assign(n, 0);
  s.last_arrival.assign(n, 0);
  s.last_lead.assign(n, 0);
  return s;
}

inline double available_space(const InventoryState& state, const ClusterSpec& cluster) {
  double used = 0.0;
  for (std::size_t i = 0; i < cluster.size(); ++i)
    used += static_cast<double>(state.levels[i]) * cluster.items[i].volume;
  return std::max(0.0, static_cast<double>(cluster.capacity) - used);
}

/// Removes the orders due at state.t and returns the per-item quantities.
inline std::vector<std::int64_t> collect_arrivals(InventoryState& state) {
  std::vector<std::int64_t> rho(state.levels.size(), 0);
  std::erase_if(state.pending, [&](const PendingOrder& o) {
    if (o.arrival_period != state.t) return false;
    rho[o.item_index] += o.quantity;
    return true;
  });
  return rho;
}

/// Overflow weights. Without overflow every weight is 1. On overflow the
/// weights are proportional to the shortage cost and satisfy
/// sum_i w_i * rho_i * v_i == delta. If no arriving item carries a shortage
/// cost, all arrivals are scaled by the same factor.
inline std::vector<double> overflow_weights(double delta, std::span<const std::int64_t> arrivals,
                                            std::span<const double> shortage_costs,
                                            std::span<const double> volumes = {}) {
  const auto n = arrivals.size();
  auto vol = [&](std::size_t i) { return volumes.empty() ? 1.0 : volumes[i]; };
  double incoming = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double load = static_cast<double>(arrivals[i]) * vol(i);
    incoming += load;
    weighted += shortage_costs[i] * load;
  }
  std::vector<double> w(n, 1.0);
  if (incoming <= delta) return w;
  delta = std::max(delta, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = weighted > 0.0 ? delta * shortage_costs[i] / weighted : delta / incoming;
  return w;
}

inline StepCost step_cost(std::int64_t action, std::int64_t level_after,
                          std::int64_t backlog_after, const ItemSpec& spec,
                          const CostWeights& weights) {
  StepCost c;
  c.raw.order = static_cast<double>(action) * spec.cost_order;
  c.raw.hold = static_cast<double>(level_after) * spec.cost_hold;
  c.raw.shortage = static_cast<double>(backlog_after) * spec.cost_short;
  c.weighted = weights.order * c.raw.order + weights.hold * c.raw.hold +
               weights.shortage * c.raw.shortage;
  return c;
}

inline double cluster_reward(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("cluster_reward: no rewards");
  return std::accumulate(rewards.begin(), rewards.end(), 0.0) /
         static_cast<double>(rewards.size());
}

/// One period of the inventory game. Returns the successor state; `state` is
/// left untouched so a rejected action leaves no trace.
inline std::pair<InventoryState, StepOutcome> step(const InventoryState& state,
                                                   const ClusterSpec& cluster,
                                                   std::span<const std::int64_t> actions,
                                                   EnvRng& rng) {
  const auto n = cluster.size();
  if (actions.size() != n) throw std::out_of_range("step: action count does not match cluster");
  for (auto a : actions)
    if (a < 0 || a > cluster.capacity)
      throw std::out_of_range("step: order quantity " + std::to_string(a) + " outside [0, " +
                              std::to_string(cluster.capacity) + "]");

  InventoryState next = state;
  StepOutcome out;

  for (std::size_t i = 0; i < n; ++i) {
    if (actions[i] <= 0) continue;
    const auto tau = sample_lead_time(cluster.items[i].lead, rng.lead[i]);
    next.last_lead[i] = tau;
    next.pending.push_back({i, actions[i], state.t + tau});
  }

  out.arrivals = collect_arrivals(next);
  next.last_arrival = out.arrivals;

  std::vector<double> cs(n), vol(n);
  for (std::size_t i = 0; i < n; ++i) {
    cs[i] = cluster.items[i].cost_short;
    vol[i] = cluster.items[i].volume;
  }
  out.available = available_space(state, cluster);
  out.weights = overflow_weights(out.available, out.arrivals, cs, vol);
  double incoming = 0.0;
  for (std::size_t i = 0; i < n; ++i) incoming += static_cast<double>(out.arrivals[i]) * vol[i];
  out.overflow = incoming > out.available;

  out.received.resize(n);
  double stored = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = out.weights[i] * static_cast<double>(out.arrivals[i]);
    // A weight above 1 never creates stock that did not arrive.
    out.received[i] =
        std::min(out.arrivals[i], static_cast<std::int64_t>(std::floor(share + 1e-9)));
    stored += static_cast<double>(out.received[i]) * vol[i];
  }
  // Rounding slack can only overshoot by a fraction of a unit; trim the largest.
  while (stored > out.available + 1e-9) {
    auto it = std::max_element(out.received.begin(), out.received.end());
    --*it;
    stored -= vol[static_cast<std::size_t>(it - out.received.begin())];
  }

  out.demands.resize(n);
  out.costs.resize(n);
  out.raw_costs.resize(n);
  out.rewards.resize(n);
  out.shortage_flags.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.demands[i] = sample_demand(cluster.items[i].demand, rng.demand[i]);
    const std::int64_t net = state.levels[i] + out.received[i] - out.demands[i];
    next.levels[i] = std::max<std::int64_t>(net, 0);
    next.backlogs[i] = state.backlogs[i] + std::max<std::int64_t>(-net, 0);
    out.shortage_flags[i] = next.backlogs[i] > state.backlogs[i];
    const auto c = step_cost(actions[i], next.levels[i], next.backlogs[i], cluster.items[i],
                             cluster.cost_weights);
    out.costs[i] = c.weighted;
    out.raw_costs[i] = c.raw;
    out.rewards[i] = -c.weighted;
  }
  out.cluster_reward = cluster_reward(out.rewards);
  next.t = state.t + 1;
  return {std::move(next), std::move(out)};
}

/// Normalized per-item observation (x/L, rho/L, tau*p, beta/L) with L the
/// cluster capacity; the third entry is clamped to [0,4] and the fourth capped
/// at 4. With `with_space`, the free-capacity fraction is appended.
inline std::vector<double> observation(const InventoryState& state, const ClusterSpec& cluster,
                                       std::size_t item, bool with_space = false) {
  if (item >= cluster.size()) throw std::out_of_range("observation: item index out of range");
  const double cap = static_cast<double>(cluster.capacity);
  std::vector<double> obs{
      static_cast<double>(state.levels[item]) / cap,
      static_cast<double>(state.last_arrival[item]) / cap,
      std::clamp(static_cast<double>(state.last_lead[item]) * cluster.items[item].lead.p, 0.0,
                 4.0),
      std::min(static_cast<double>(state.backlogs[item]) / cap, 4.0)};
  if (with_space) obs.push_back(available_space(state, cluster) / cap);
  return obs;
}

/// Stateful wrapper used by the controllers and the training loops.
class InventoryEnv {
 public:
  explicit InventoryEnv(ClusterSpec cluster, bool observe_space = false)
      : cluster_(std::move(cluster)), observe_space_(observe_space) {
    cluster_.validate();
    reset(0);
  }

  void reset(std::uint64_t seed) {
    state_ = stockrl::reset(cluster_, seed);
    rng_ = EnvRng::from_seed(seed, cluster_.size());
  }

  const StepOutcome& step(std::span<const std::int64_t> actions) {
    auto [next, out] = stockrl::step(state_, cluster_, actions, rng_);
    state_ = std::move(next);
    last_ = std::move(out);
    return last_;
  }

  std::vector<double> observe(std::size_t agent) const {
    return observation(state_, cluster_, agent, observe_space_);
  }

  std::size_t num_agents() const { return cluster_.size(); }
  std::size_t obs_dim() const { return observe_space_ ? 5 : 4; }
  std::int64_t action_bound(std::size_t agent) const { return cluster_.item_capacity[agent]; }

  /// Reward multiplier that brings the cost of one period of average demand,
  /// priced at every unit cost, to order one.
  double reward_scale_hint() const {
    const auto& w = cluster_.cost_weights;
    double sum = 0.0;
    for (const auto& it : cluster_.items) {
      const double unit = w.order * it.cost_order + w.hold * it.cost_hold + w.shortage * it.cost_short;
      sum += unit * std::max(it.demand.mean(), 1.0);
    }
    const double mean = sum / static_cast<double>(cluster_.size());
    return mean > 0.0 ? 1.0 / mean : 1.0;
  }

  const InventoryState& state() const { return state_; }
  const ClusterSpec& cluster() const { return cluster_; }
  const StepOutcome& last_outcome() const { return last_; }

 private:
  ClusterSpec cluster_;
  bool observe_space_;
  InventoryState state_;
  EnvRng rng_;
  StepOutcome last_;
};

inline void write_trace_header(std::ostream& os) {
  os << "t,item_id,action,lead_time,arrival,weight,level,backlog,cost_order,cost_hold,cost_short\n";
}

/// One trace row per item for the step that moved `before` to `after`.
inline void write_trace_rows(std::ostream& os, const ClusterSpec& cluster,
                             const InventoryState& before, const InventoryState& after,
                             std::span<const std::int64_t> actions, const StepOutcome& out) {
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    os << before.t << ',' << cluster.items[i].id << ',' << actions[i] << ','
       << after.last_lead[i] << ',' << out.arrivals[i] << ',' << out.weights[i] << ','
       << after.levels[i] << ',' << after.backlogs[i] << ',' << out.raw_costs[i].order << ','
       << out.raw_costs[i].hold << ',' << out.raw_costs[i].shortage << '\n';
  }
}

}  // namespace stockrl
