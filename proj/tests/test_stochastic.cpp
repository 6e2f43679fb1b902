#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "stockrl/catalog.hpp"
#include "stockrl/rng.hpp"
#include "stockrl/stochastic.hpp"

using namespace stockrl;

namespace {

// Independent quantile oracle: bisection on the erf-based CDF.
double bisect_quantile(double alpha) {
  double lo = -40.0, hi = 40.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * (1.0 + std::erf(mid / std::sqrt(2.0))) < alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <class F>
Moments sample_moments(F draw, int n) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(draw());
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  return {m, s2 / n - m * m};
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  RngStream a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitStreamsAreIndependentAndReproducible) {
  const RngStream root(7);
  auto d0 = root.split(Channel::demand, 0);
  auto d0b = root.split(Channel::demand, 0);
  auto d1 = root.split(Channel::demand, 1);
  auto l0 = root.split(Channel::lead_time, 0);
  EXPECT_EQ(d0.next(), d0b.next());
  EXPECT_NE(d0.seed(), d1.seed());
  EXPECT_NE(d0.seed(), l0.seed());
}

TEST(Rng, UniformMoments) {
  RngStream r(3);
  const auto m = sample_moments([&] { return r.uniform(); }, 200000);
  EXPECT_NEAR(m.mean, 0.5, 3 * std::sqrt(1.0 / 12 / 200000));
  RngStream g(4);
  const auto n = sample_moments([&] { return g.normal(); }, 200000);
  EXPECT_NEAR(n.mean, 0.0, 3 * std::sqrt(1.0 / 200000));
  EXPECT_NEAR(n.var, 1.0, 0.02);
}

TEST(SampleDemand, ZeroGateForcesZero) {
  RngStream r(1);
  for (int i = 0; i < 10000; ++i) EXPECT_EQ(sample_demand({0.0, 5.0}, r), 0);
}

TEST(SampleDemand, PurePoissonMean) {
  RngStream r(11);
  const int n = 100000;
  const auto m = sample_moments([&] { return sample_demand({1.0, 5.0}, r); }, n);
  EXPECT_NEAR(m.mean, 5.0, 3 * std::sqrt(5.0 / n));
}

TEST(SampleDemand, ItemZeroMean) {
  RngStream r(12);
  const int n = 100000;
  const DemandModel d{0.33, 6.23};
  const auto m = sample_moments([&] { return sample_demand(d, r); }, n);
  EXPECT_NEAR(m.mean, 0.33 * 6.23, 3 * std::sqrt(d.variance() / n));
}

TEST(SampleDemand, MomentsForEveryCatalogRow) {
  const int n = 100000;
  const auto catalog = builtin_catalog();
  for (const auto& rec : catalog.records()) {
    RngStream r(derive_seed(99, {static_cast<std::uint64_t>(rec.id)}));
    const DemandModel d{rec.b, rec.mu};
    const auto m = sample_moments([&] { return sample_demand(d, r); }, n);
    EXPECT_LE(std::fabs(m.mean - d.mean()), 3 * std::sqrt(d.variance() / n)) << "item " << rec.id;
    EXPECT_NEAR(m.var / d.variance(), 1.0, 0.05) << "item " << rec.id;
  }
}

TEST(SampleDemand, LargeMeanPoissonBranch) {
  // mu > 10 exercises the rejection sampler.
  for (double mu : {10.5, 24.0, 111.0, 217.0}) {
    RngStream r(static_cast<std::uint64_t>(mu * 10));
    const int n = 100000;
    const auto m = sample_moments([&] { return sample_poisson(mu, r); }, n);
    EXPECT_NEAR(m.mean, mu, 3 * std::sqrt(mu / n)) << mu;
    EXPECT_NEAR(m.var / mu, 1.0, 0.03) << mu;
  }
}

TEST(SampleDemand, NonNegative) {
  RngStream r(5);
  for (int i = 0; i < 50000; ++i) EXPECT_GE(sample_demand({0.5, 30.0}, r), 0);
}

TEST(SampleLeadTime, CertainSuccessIsOne) {
  RngStream r(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_lead_time({1.0}, r), 1);
}

TEST(SampleLeadTime, GeometricMeanAndSupport) {
  for (double p : {0.5, 0.12}) {
    RngStream r(static_cast<std::uint64_t>(p * 1000));
    const int n = 100000;
    int ones = 0;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto t = sample_lead_time({p}, r);
      ASSERT_GE(t, 1);
      ones += t == 1;
      s += static_cast<double>(t);
    }
    const double se = std::sqrt((1.0 - p) / (p * p) / n);
    EXPECT_NEAR(s / n, 1.0 / p, 3 * se) << p;
    EXPECT_NEAR(static_cast<double>(ones) / n, p, 3 * std::sqrt(p * (1 - p) / n)) << p;
  }
}

TEST(FitDemand, HandComputed) {
  const auto m = fit_demand_mle({{0, 3, 0, 5}, HistoryKind::demand});
  EXPECT_DOUBLE_EQ(m.b, 0.5);
  EXPECT_DOUBLE_EQ(m.mu, 4.0);
  const auto s = fit_demand_mle({{7}, HistoryKind::demand});
  EXPECT_DOUBLE_EQ(s.b, 1.0);
  EXPECT_DOUBLE_EQ(s.mu, 7.0);
}

TEST(FitDemand, Errors) {
  EXPECT_THROW(fit_demand_mle({{0, 0, 0}, HistoryKind::demand}), std::invalid_argument);
  EXPECT_THROW(fit_demand_mle({{}, HistoryKind::demand}), std::invalid_argument);
  EXPECT_THROW(fit_demand_mle({{1, -2}, HistoryKind::demand}), std::invalid_argument);
  EXPECT_THROW(fit_demand_mle({{1, 2}, HistoryKind::lead_time}), std::invalid_argument);
  try {
    fit_demand_mle({{0, 0}, HistoryKind::demand});
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "no positive demand observations");
  }
}

TEST(FitDemand, Consistency) {
  RngStream r(2024);
  const DemandModel truth{0.4, 8.25};
  HistorySeries h{{}, HistoryKind::demand};
  for (int i = 0; i < 10000; ++i) h.values.push_back(sample_demand(truth, r));
  const auto fit = fit_demand_mle(h);
  EXPECT_NEAR(fit.b, 0.4, 3 * std::sqrt(0.4 * 0.6 / 10000));
  EXPECT_NEAR(fit.mu, 8.25, 3 * std::sqrt(8.25 / (0.4 * 10000)) + 0.01);
}

TEST(FitLeadTime, HandComputed) {
  EXPECT_DOUBLE_EQ(fit_lead_time_mle({{2, 4, 6}, HistoryKind::lead_time}).p, 0.25);
  EXPECT_DOUBLE_EQ(fit_lead_time_mle({{1, 1, 1}, HistoryKind::lead_time}).p, 1.0);
}

TEST(FitLeadTime, Errors) {
  try {
    fit_lead_time_mle({{2, 0, 3}, HistoryKind::lead_time});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("invalid lead-time observation"), std::string::npos);
  }
  EXPECT_THROW(fit_lead_time_mle({{}, HistoryKind::lead_time}), std::invalid_argument);
}

TEST(FitLeadTime, Consistency) {
  RngStream r(77);
  HistorySeries h{{}, HistoryKind::lead_time};
  for (int i = 0; i < 10000; ++i) h.values.push_back(sample_lead_time({0.17}, r));
  EXPECT_NEAR(fit_lead_time_mle(h).p, 0.17, 0.01);
}

// Root-mean-square estimator error should halve when the sample size quadruples.
TEST(Mle, ErrorHalvesWhenSampleQuadruples) {
  const DemandModel d{0.3, 12.0};
  const LeadTimeModel l{0.15};
  auto rms = [&](int n, std::uint64_t seed) {
    double eb = 0.0, em = 0.0, ep = 0.0;
    const int reps = 400;
    for (int k = 0; k < reps; ++k) {
      RngStream r(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
      HistorySeries hd{{}, HistoryKind::demand}, hl{{}, HistoryKind::lead_time};
      for (int i = 0; i < n; ++i) {
        hd.values.push_back(sample_demand(d, r));
        hl.values.push_back(sample_lead_time(l, r));
      }
      const auto fd = fit_demand_mle(hd);
      const auto fl = fit_lead_time_mle(hl);
      eb += (fd.b - d.b) * (fd.b - d.b);
      em += (fd.mu - d.mu) * (fd.mu - d.mu);
      ep += (fl.p - l.p) * (fl.p - l.p);
    }
    return std::array<double, 3>{std::sqrt(eb / reps), std::sqrt(em / reps), std::sqrt(ep / reps)};
  };
  const auto small = rms(500, 1);
  const auto large = rms(2000, 2);
  for (int k = 0; k < 3; ++k) {
    EXPECT_GT(large[static_cast<std::size_t>(k)] / small[static_cast<std::size_t>(k)], 0.4) << k;
    EXPECT_LT(large[static_cast<std::size_t>(k)] / small[static_cast<std::size_t>(k)], 0.6) << k;
  }
}

TEST(InverseNormal, ReferenceValues) {
  EXPECT_NEAR(inverse_normal_cdf(0.5), 0.0, 1e-15);
  // Frozen from the bisection oracle below.
  EXPECT_NEAR(inverse_normal_cdf(0.90), 1.2815515655, 1e-9);
  EXPECT_NEAR(inverse_normal_cdf(0.99), 2.3263478740, 1e-9);
  EXPECT_NEAR(bisect_quantile(0.90), 1.2815515655, 1e-9);
  EXPECT_NEAR(bisect_quantile(0.99), 2.3263478740, 1e-9);
}

TEST(InverseNormal, MatchesBisectionOracle) {
  for (double a = 1e-6; a < 1.0; a += 0.0137) {
    const double z = inverse_normal_cdf(a);
    EXPECT_NEAR(z, bisect_quantile(a), 1e-9) << a;
    EXPECT_NEAR(normal_cdf(z), a, 1e-9) << a;
  }
}

TEST(InverseNormal, InvertsCdfOnSixSigma) {
  for (double z = -6.0; z <= 6.0; z += 0.01) EXPECT_NEAR(inverse_normal_cdf(normal_cdf(z)), z, 1e-8) << z;
}

TEST(InverseNormal, DomainErrors) {
  EXPECT_THROW(inverse_normal_cdf(0.0), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(1.0), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(-0.2), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(std::nan("")), std::domain_error);
}
