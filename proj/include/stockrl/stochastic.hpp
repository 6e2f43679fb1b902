#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stockrl/rng.hpp"

namespace stockrl {

/// Zero-inflated Poisson demand: with probability b a period draws Poisson(mu), else 0.
struct DemandModel {
  double b = 0.0;
  double mu = 1.0;

  void validate() const {
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("demand model: b must lie in [0,1]");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("demand model: mu must be > 0");
  }
  double mean() const { return b * mu; }
  double variance() const { return b * mu * (1.0 + mu * (1.0 - b)); }
};

/// Geometric lead-time on {1, 2, ...}.
struct LeadTimeModel {
  double p = 1.0;

  void validate() const {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("lead-time model: p must lie in (0,1]");
  }
  double mean() const { return 1.0 / p; }
  double variance() const { return (1.0 - p) / (p * p); }
};

enum class HistoryKind { demand, lead_time };

struct HistorySeries {
  std::vector<std::int64_t> values;
  HistoryKind kind = HistoryKind::demand;
};

namespace detail {

inline double log_factorial(std::int64_t k) {
  static const std::array<double, 16> table = [] {
    std::array<double, 16> t{};
    double acc = 0.0;
    t[0] = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      acc += std::log(static_cast<double>(i));
      t[i] = acc;
    }
    return t;
  }();
  if (k < static_cast<std::int64_t>(table.size())) return table[static_cast<std::size_t>(k)];
  // Stirling series, accurate to ~1e-14 for k >= 16.
  const double n = static_cast<double>(k) + 1.0;
  const double inv = 1.0 / n;
  const double inv2 = inv * inv;
  return (n - 0.5) * std::log(n) - n + 0.91893853320467274178 +
         inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
}

// Sequential-search inversion.
inline std::int64_t poisson_inversion(double mu, RngStream& rng) {
  double u = rng.uniform();
  double p = std::exp(-mu);
  std::int64_t k = 0;
  double cdf = p;
  while (u > cdf) {
    ++k;
    p *= mu / static_cast<double>(k);
    cdf += p;
    if (p <= 0.0 && cdf < u) break;  // underflow guard for u within rounding of 1
  }
  return k;
}

// Transformed rejection with squeeze (PTRS).
inline std::int64_t poisson_ptrs(double mu, RngStream& rng) {
  const double slam = std::sqrt(mu);
  const double loglam = std::log(mu);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform_open();
    const double us = 0.5 - std::fabs(u);
    const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mu + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mu + static_cast<double>(k) * loglam - log_factorial(k))
      return k;
  }
}

}  // namespace detail

inline std::int64_t sample_poisson(double mu, RngStream& rng) {
  if (mu <= 0.0) return 0;
  return mu <= 10.0 ? detail::poisson_inversion(mu, rng) : detail::poisson_ptrs(mu, rng);
}

/// One period of demand. Draws the Bernoulli gate first; the Poisson draw only
/// happens on an open gate.
inline std::int64_t sample_demand(const DemandModel& model, RngStream& rng) {
  const double gate = rng.uniform();
  if (!(gate < model.b)) return 0;
  return sample_poisson(model.mu, rng);
}

inline std::int64_t sample_lead_time(const LeadTimeModel& model, RngStream& rng) {
  if (model.p >= 1.0) return 1;
  const double u = rng.uniform_open();
  const double k = std::ceil(std::log(u) / std::log1p(-model.p));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(k));
}

inline DemandModel fit_demand_mle(const HistorySeries& history) {
  if (history.kind != HistoryKind::demand)
    throw std::invalid_argument("fit_demand_mle: history is not a demand series");
  if (history.values.empty()) throw std::invalid_argument("fit_demand_mle: empty history");
  std::int64_t positive = 0;
  double total = 0.0;
  for (auto v : history.values) {
    if (v < 0) throw std::invalid_argument("invalid demand observation: " + std::to_string(v));
    if (v > 0) {
      ++positive;
      total += static_cast<double>(v);
    }
  }
  if (positive == 0) throw std::invalid_argument("no positive demand observations");
  return DemandModel{static_cast<double>(positive) / static_cast<double>(history.values.size()),
                     total / static_cast<double>(positive)};
}

inline LeadTimeModel fit_lead_time_mle(const HistorySeries& history) {
  if (history.kind != HistoryKind::lead_time)
    throw std::invalid_argument("fit_lead_time_mle: history is not a lead-time series");
  if (history.values.empty()) throw std::invalid_argument("fit_lead_time_mle: empty history");
  double total = 0.0;
  for (auto v : history.values) {
    if (v < 1) throw std::invalid_argument("invalid lead-time observation: " + std::to_string(v));
    total += static_cast<double>(v);
  }
  return LeadTimeModel{static_cast<double>(history.values.size()) / total};
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

inline double normal_pdf(double z) { return 0.39894228040143267794 * std::exp(-0.5 * z * z); }

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc, which brings it to ~1e-15 relative accuracy.
inline double inverse_normal_cdf(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("inverse_normal_cdf: alpha must lie in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;

  // Work on the smaller tail so 1 - alpha never loses digits.
  const bool upper = alpha > 0.5;
  const double q_tail = upper ? 1.0 - alpha : alpha;
  double z;
  if (q_tail < low) {
    const double q = std::sqrt(-2.0 * std::log(q_tail));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = q_tail - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // z is the lower-tail quantile of q_tail; refine against the lower tail CDF.
  const double e = 0.5 * std::erfc(-z * 0.70710678118654752440) - q_tail;
  const double u = e * 2.50662827463100050242 * std::exp(0.5 * z * z);
  z = z - u / (1.0 + 0.5 * z * u);
  return upper ? -z : z;
}

}  // namespace stockrl
