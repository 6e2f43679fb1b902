#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppo_fixtures.hpp"
#include "stockrl/policy.hpp"
#include "stockrl/ppo.hpp"

using namespace stockrl;
using stockrl::testing::gradient_check;
using stockrl::testing::random_batch;
using stockrl::testing::random_theta;
using stockrl::testing::random_tiny_arch;

namespace {

NetworkParams zero_head_discrete(int actions) {
  Architecture a;
  a.input_dim = 3;
  a.hidden = {4, 4};
  a.head = HeadKind::discrete;
  a.num_actions = actions;
  RngStream rng(1);
  auto p = NetworkParams::initialized(a, rng);
  p.theta.setZero();
  return p;
}

// Brute-force discounted return of each step, bootstrapped at episode ends.
std::vector<double> brute_returns(const std::vector<double>& r, const std::vector<bool>& end,
                                  const std::vector<double>& cut, double gamma) {
  std::vector<double> g(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    double acc = 0.0, disc = 1.0;
    std::size_t k = t;
    for (;; ++k) {
      acc += disc * r[k];
      disc *= gamma;
      if (end[k]) break;
    }
    g[t] = acc + disc * cut[k];
  }
  return g;
}

}  // namespace

TEST(Softmax, ZeroLogitsAreUniform) {
  const auto p = policy_forward_discrete(zero_head_discrete(5), {0.1, -0.3, 0.7});
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(p[k], 0.2, 1e-15);
}

TEST(Softmax, ClosedFormAndShiftInvariance) {
  nn::Vector z(2);
  z << std::log(2.0), 0.0;
  const nn::Vector p = log_softmax(z).array().exp().matrix();
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  RngStream rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    nn::Vector l(7);
    for (int k = 0; k < 7; ++k) l[k] = 10.0 * rng.normal();
    const nn::Vector a = log_softmax(l).array().exp().matrix();
    const nn::Vector b = log_softmax((l.array() + 123.456).matrix()).array().exp().matrix();
    EXPECT_NEAR(a.sum(), 1.0, 1e-9);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::Index ia, il;
    a.maxCoeff(&ia);
    l.maxCoeff(&il);
    EXPECT_EQ(ia, il);
  }
}

TEST(Gaussian, LogProbAndEntropyClosedForms) {
  EXPECT_NEAR(gaussian_log_prob(0.0, 0.0, 1.0), -0.918939, 1e-6);
  EXPECT_NEAR(std::exp(gaussian_log_prob(0.0, 0.0, 1.0)), 0.398942, 1e-6);
  EXPECT_NEAR(gaussian_log_prob(1.0, 0.0, 1.0), -1.418939, 1e-6);
  EXPECT_NEAR(gaussian_entropy(1.0), 0.5 * std::log(2.0 * M_PI * M_E), 1e-12);
  EXPECT_NEAR(gaussian_entropy(1.0), 1.418939, 1e-6);
}

TEST(Gaussian, StdIsPositiveAndLogProbExact) {
  Architecture a;
  a.input_dim = 2;
  a.hidden = {5, 5};
  a.head = HeadKind::gaussian;
  RngStream rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    auto p = NetworkParams::initialized(a, rng);
    p.theta *= 20.0;
    const auto [mean, sd] = policy_forward_gaussian(p, {rng.normal(), rng.normal()});
    EXPECT_GT(sd, 0.0);
    const double x = mean + sd * rng.normal();
    const double direct = std::log(std::exp(-(x - mean) * (x - mean) / (2 * sd * sd)) / (sd * std::sqrt(2 * M_PI)));
    EXPECT_NEAR(gaussian_log_prob(x, mean, sd), direct, 1e-10);
  }
}

TEST(Gae, SingleStep) {
  const auto r = compute_gae(std::vector<double>{1.0}, std::vector<double>{0.0}, {true},
                             std::vector<double>{0.0}, 0.99, 0.95, true);
  EXPECT_DOUBLE_EQ(r.advantages[0], 1.0);
  EXPECT_DOUBLE_EQ(r.value_targets[0], 1.0);
}

TEST(Gae, AllZeroIsZero) {
  std::vector<double> z(10, 0.0);
  std::vector<bool> end(10, false);
  end.back() = true;
  const auto r = compute_gae(z, z, end, z, 0.99, 0.9, true);
  for (double a : r.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Gae, LambdaOneEqualsBruteForceReturnsMinusBaseline) {
  RngStream rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng.next() % 80);
    std::vector<double> r(n), v(n), cut(n, 0.0);
    std::vector<bool> end(n, false);
    for (int t = 0; t < n; ++t) {
      r[t] = rng.normal() * 3.0;
      v[t] = rng.normal() * 5.0;
      end[t] = rng.uniform() < 0.1;
      if (end[t]) cut[t] = rng.normal();
    }
    end.back() = true;
    cut.back() = rng.normal();
    const double gamma = 0.9 + 0.099 * rng.uniform();
    const auto g = brute_returns(r, end, cut, gamma);
    const auto gae = compute_gae(r, v, end, cut, gamma, 1.0, true);
    const auto mc = compute_gae(r, v, end, cut, gamma, 0.3, false);
    for (int t = 0; t < n; ++t) {
      EXPECT_NEAR(gae.advantages[t], g[t] - v[t], 1e-10);
      EXPECT_NEAR(mc.advantages[t], g[t] - v[t], 1e-10);
      EXPECT_NEAR(gae.value_targets[t], g[t], 1e-10);
    }
  }
}

TEST(Gae, RejectsUnterminatedTrajectory) {
  std::vector<double> z(3, 0.0);
  EXPECT_THROW(compute_gae(z, z, {false, false, false}, z, 0.99, 1.0, true), std::invalid_argument);
}

TEST(Gae, EpisodeOrderDoesNotChangeTargets) {
  RngStream rng(6);
  std::vector<std::vector<double>> r(4), v(4);
  std::vector<double> cut(4);
  for (int e = 0; e < 4; ++e) {
    const int len = 5 + e * 3;
    for (int t = 0; t < len; ++t) {
      r[e].push_back(rng.normal());
      v[e].push_back(rng.normal());
    }
    cut[e] = rng.normal();
  }
  auto concat = [&](const std::vector<int>& order) {
    std::vector<double> rr, vv, cc;
    std::vector<bool> ee;
    for (int e : order)
      for (std::size_t t = 0; t < r[e].size(); ++t) {
        rr.push_back(r[e][t]);
        vv.push_back(v[e][t]);
        ee.push_back(t + 1 == r[e].size());
        cc.push_back(t + 1 == r[e].size() ? cut[e] : 0.0);
      }
    return compute_gae(rr, vv, ee, cc, 0.97, 0.9, true);
  };
  const auto a = concat({0, 1, 2, 3});
  const auto b = concat({2, 0, 3, 1});
  // Episode 2 comes first in b.
  const std::size_t off2 = r[0].size() + r[1].size();
  for (std::size_t t = 0; t < r[2].size(); ++t) {
    EXPECT_EQ(a.advantages[off2 + t], b.advantages[t]);
    EXPECT_EQ(a.value_targets[off2 + t], b.value_targets[t]);
  }
}

TEST(PpoLoss, ClipArithmetic) {
  Architecture a;
  a.input_dim = 1;
  a.hidden = {2};
  a.head = HeadKind::gaussian;
  const ActorCritic net(a);
  nn::Vector theta = nn::Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
  SampleBatch b;
  b.obs = nn::Matrix::Zero(1, 1);
  const auto out = net.forward(theta, b.obs);
  b.dist_old = out.policy;
  b.actions = nn::Vector::Constant(1, 0.0);
  const double logp = gaussian_log_prob(0.0, out.policy(0, 0), softplus(out.policy(1, 0)) + kMinStd);
  b.logp_old = nn::Vector::Constant(1, logp - std::log(1.5));
  b.value_old = nn::Vector::Zero(1);
  b.advantages = nn::Vector::Constant(1, 1.0);
  b.value_targets = nn::Vector::Zero(1);
  const auto r = ppo_loss(b, theta, net, 0.3, 10.0, {});
  EXPECT_NEAR(r.surrogate, 1.5, 1e-12);
  EXPECT_NEAR(r.actor, 1.3, 1e-12);
}

TEST(PpoLoss, IdentityPolicy) {
  RngStream rng(7);
  for (HeadKind head : {HeadKind::discrete, HeadKind::gaussian}) {
    const auto arch = random_tiny_arch(rng, head);
    const ActorCritic net(arch);
    const nn::Vector theta = net.init(rng);
    SampleBatch b = random_batch(net, theta, 16, rng);
    b.dist_old = net.forward(theta, b.obs).policy;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (head == HeadKind::discrete)
        b.logp_old[j] = log_softmax(b.dist_old.col(j))[static_cast<Eigen::Index>(b.actions[j])];
      else
        b.logp_old[j] = gaussian_log_prob(b.actions[j], b.dist_old(0, j), softplus(b.dist_old(1, j)) + kMinStd);
    }
    const auto r = ppo_loss(b, theta, net, 0.3, 1.0, {});
    EXPECT_NEAR(r.kl, 0.0, 1e-12);
    EXPECT_NEAR(r.actor, b.advantages.mean(), 1e-12);
    EXPECT_NEAR(r.surrogate, r.actor, 1e-12);
  }
}

TEST(PpoLoss, ClippedActorIsLowerBound) {
  RngStream rng(8);
  for (int rep = 0; rep < 40; ++rep) {
    const auto arch = random_tiny_arch(rng, rep % 2 ? HeadKind::discrete : HeadKind::gaussian);
    const ActorCritic net(arch);
    const nn::Vector theta = net.init(rng) * 5.0;
    const auto r = ppo_loss(random_batch(net, theta, 32, rng), theta, net, 0.2, 1.0, {});
    EXPECT_LE(r.actor, r.surrogate + 1e-12);
  }
}

TEST(PpoLoss, GradientNormIsClipped) {
  RngStream rng(9);
  const auto arch = random_tiny_arch(rng, HeadKind::gaussian);
  const ActorCritic net(arch);
  const nn::Vector theta = net.init(rng);
  const auto b = random_batch(net, theta, 16, rng);
  const auto full = ppo_loss(b, theta, net, 0.3, 1.0, {});
  const double cap = 0.5 * full.grad_norm;
  const auto clipped = ppo_loss(b, theta, net, 0.3, 1.0, {}, cap);
  EXPECT_NEAR(clipped.grad.norm(), cap, 1e-9);
  EXPECT_LT((clipped.grad - full.grad * 0.5).norm(), 1e-9 * full.grad_norm);
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<HeadKind, int>> {};

TEST_P(GradientCheck, EachComponentMatchesFiniteDifferences) {
  const auto [head, component] = GetParam();
  LossCoefficients c{0.0, 0.0, 0.0, 0.0};
  (component == 0 ? c.actor : component == 1 ? c.critic : component == 2 ? c.kl : c.entropy) = 1.0;
  RngStream rng(derive_seed(100, {static_cast<std::uint64_t>(head), static_cast<std::uint64_t>(component)}));
  for (int rep = 0; rep < 20; ++rep) {
    const auto arch = random_tiny_arch(rng, head);
    const ActorCritic net(arch);
    const nn::Vector theta = random_theta(net, rng);
    const auto batch = random_batch(net, theta, 16, rng);
    EXPECT_LT(gradient_check(batch, theta, net, 0.3, 0.5, c), 1e-4) << "network " << rep;
  }
}

INSTANTIATE_TEST_SUITE_P(AllHeadsAndTerms, GradientCheck,
                         ::testing::Combine(::testing::Values(HeadKind::discrete, HeadKind::gaussian),
                                            ::testing::Values(0, 1, 2, 3)));

TEST(Adam, ZeroGradientKeepsParams) {
  nn::Vector p = nn::Vector::LinSpaced(5, -1, 1);
  const nn::Vector before = p;
  AdamState s(5);
  for (int k = 0; k < 10; ++k) adam_step(p, nn::Vector::Zero(5), s, 1e-3);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Vector p = nn::Vector::Zero(3);
  AdamState s(3);
  adam_step(p, nn::Vector::Ones(3), s, 1e-3);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ConstantGradientGivesUnitSteps) {
  nn::Vector p = nn::Vector::Zero(2);
  AdamState s(2);
  nn::Vector g(2);
  g << 5.0, -0.01;
  nn::Vector last = p;
  for (int k = 0; k < 2000; ++k) {
    last = p;
    adam_step(p, g, s, 1e-2);
  }
  EXPECT_NEAR((p - last)[0], -1e-2, 1e-8);
  EXPECT_NEAR((p - last)[1], 1e-2, 1e-6);
}

TEST(Adam, ShapeMismatchThrows) {
  nn::Vector p = nn::Vector::Zero(2);
  AdamState s(2);
  EXPECT_THROW(adam_step(p, nn::Vector::Zero(3), s, 1e-3), std::invalid_argument);
}

TEST(AdaptiveKl, DoublesAndHalves) {
  EXPECT_DOUBLE_EQ(adapt_kl_coeff(0.2, 0.03, 0.01), 0.4);
  EXPECT_DOUBLE_EQ(adapt_kl_coeff(0.2, 0.001, 0.01), 0.1);
  EXPECT_DOUBLE_EQ(adapt_kl_coeff(0.2, 0.01, 0.01), 0.2);
}

TEST(ActionMap, BucketsAndNormalizedActions) {
  EXPECT_EQ(ActionMap::auto_stride(256), 1);
  EXPECT_EQ(ActionMap::auto_stride(257), 2);
  const ActionMap m{69, 1};
  EXPECT_EQ(m.num_buckets(), 70);
  EXPECT_EQ(m.from_normalized(-5.0), 0);
  EXPECT_EQ(m.from_normalized(1.0), 69);
  EXPECT_EQ(m.from_normalized(0.0), 35);
  const ActionMap coarse{1000, ActionMap::auto_stride(1000)};
  EXPECT_EQ(coarse.stride, 4);
  EXPECT_EQ(coarse.from_index(coarse.num_buckets() - 1), 1000);
  const ActionMap uneven{10, 3};
  EXPECT_EQ(uneven.from_index(uneven.num_buckets() - 1), 10);
}
