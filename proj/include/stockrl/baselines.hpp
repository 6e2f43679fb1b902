#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stockrl/inventory_env.hpp"
#include "stockrl/rng.hpp"
#include "stockrl/stochastic.hpp"

namespace stockrl {

/// Safety stock kappa = Phi^-1(alpha) * sqrt(mu_t * sd_d^2 + (mu_d * sd_t)^2).
inline double safety_stock(double alpha, double mu_d, double sd_d, double mu_t, double sd_t) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("safety_stock: alpha must lie in (0,1)");
  if (mu_d < 0.0 || sd_d < 0.0 || mu_t < 0.0 || sd_t < 0.0)
    throw std::invalid_argument("safety_stock: moments must be non-negative");
  const double spread = mu_t * sd_d * sd_d + (mu_d * sd_t) * (mu_d * sd_t);
  return inverse_normal_cdf(alpha) * std::sqrt(spread);
}

/// Safety stock from the fitted demand and lead-time laws of an item.
inline double safety_stock(double alpha, const ItemSpec& item) {
  return safety_stock(alpha, item.demand.mean(), std::sqrt(item.demand.variance()),
                      item.lead.mean(), std::sqrt(item.lead.variance()));
}

/// (s,S) controller: order `order_up` whenever on-hand stock is strictly below kappa.
struct MinMaxPolicy {
  double kappa = 0.0;
  std::int64_t order_up = 0;

  std::int64_t act(double level) const { return level < kappa ? order_up : 0; }

  static MinMaxPolicy for_item(const ItemSpec& item, std::int64_t item_capacity,
                               double alpha = 0.90) {
    return MinMaxPolicy{safety_stock(alpha, item), item_capacity};
  }
};

inline std::int64_t minmax_act(const MinMaxPolicy& policy, double level) { return policy.act(level); }

/// Orders a clamped, rounded normal draw with the fitted demand moments.
struct OraclePolicy {
  double mean = 0.0;
  double std = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  std::int64_t act(RngStream& rng) const {
    const double x = std::clamp(mean + std * rng.normal(), lo, hi);
    return static_cast<std::int64_t>(std::llround(x));
  }

  static OraclePolicy for_item(const ItemSpec& item, std::int64_t item_capacity) {
    return OraclePolicy{item.demand.mean(), std::sqrt(item.demand.variance()), 0.0,
                        static_cast<double>(item_capacity)};
  }
};

inline std::int64_t oracle_act(const OraclePolicy& policy, RngStream& rng) { return policy.act(rng); }

}  // namespace stockrl
