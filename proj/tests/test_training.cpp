#include <gtest/gtest.h>

#include "bandit_env.hpp"
#include "stockrl/trainer.hpp"

using namespace stockrl;
using stockrl::testing::BanditEnv;

namespace {

PpoConfig bandit_config(HeadKind head) {
  PpoConfig cfg;
  cfg.head = head;
  cfg.hidden = {16, 16};
  cfg.horizon = 10;
  cfg.train_batch_size = 200;
  cfg.minibatch_size = 50;
  cfg.num_sgd_iter = 10;
  cfg.lr = 3e-3;
  cfg.entropy_coeff = 0.0;
  cfg.total_timesteps = 50 * 200;
  cfg.reward_scale = 1.0;
  return cfg;
}

}  // namespace

TEST(BanditTraining, ContinuousMeanConvergesToTarget) {
  const auto cfg = bandit_config(HeadKind::gaussian);
  const auto res = train_single([] { return BanditEnv(); }, cfg, 1);
  ASSERT_EQ(res.curve.size(), 50u);
  const auto [mean, sd] = policy_forward_gaussian(res.agents.learners[0].params, {1.0, 0.5});
  const double order_mean = (std::clamp(mean, -1.0, 1.0) + 1.0) * 0.5 * 10.0;
  EXPECT_NEAR(order_mean, 5.0, 0.5);
  EXPECT_EQ(greedy_order(res.agents.learners[0], {1.0, 0.5}), 5);
  EXPECT_GT(res.curve.back().mean_reward, res.curve.front().mean_reward);
}

TEST(BanditTraining, DiscreteConcentratesOnTarget) {
  const auto cfg = bandit_config(HeadKind::discrete);
  const auto res = train_single([] { return BanditEnv(); }, cfg, 2);
  const auto p = policy_forward_discrete(res.agents.learners[0].params, {1.0, 0.5});
  ASSERT_EQ(p.size(), 11);
  EXPECT_GT(p[5], 0.9);
}

TEST(BanditTraining, SameSeedSameCurve) {
  auto cfg = bandit_config(HeadKind::gaussian);
  cfg.total_timesteps = 5 * 200;
  const auto a = train_single([] { return BanditEnv(); }, cfg, 9);
  const auto b = train_single([] { return BanditEnv(); }, cfg, 9);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    EXPECT_EQ(a.curve[k].mean_reward, b.curve[k].mean_reward);
    EXPECT_EQ(a.curve[k].kl, b.curve[k].kl);
  }
  EXPECT_EQ(a.agents.learners[0].params.theta, b.agents.learners[0].params.theta);
}

TEST(BanditTraining, WorkerCountDoesNotChangeResults) {
  auto cfg = bandit_config(HeadKind::discrete);
  cfg.total_timesteps = 4 * 200;
  const auto a = train_single([] { return BanditEnv(); }, cfg, 4);
  cfg.workers = 3;
  const auto b = train_single([] { return BanditEnv(); }, cfg, 4);
  EXPECT_EQ(a.agents.learners[0].params.theta, b.agents.learners[0].params.theta);
}

TEST(BanditTraining, CurveTimestepsStrictlyIncrease) {
  auto cfg = bandit_config(HeadKind::gaussian);
  cfg.total_timesteps = 6 * 200;
  const auto r = train_single([] { return BanditEnv(); }, cfg, 5);
  for (std::size_t k = 1; k < r.curve.size(); ++k) EXPECT_GT(r.curve[k].timesteps, r.curve[k - 1].timesteps);
}

TEST(BanditTraining, SingleRequiresOneAgent) {
  EXPECT_THROW(train_single([] { return BanditEnv(2); }, bandit_config(HeadKind::gaussian), 1),
               std::invalid_argument);
}

TEST(BanditTraining, HookCanStopEarly) {
  TrainHooks hooks;
  hooks.on_iteration = [](const CurvePoint& p, const AgentSet&) { return p.iteration < 2; };
  const auto r = train_single([] { return BanditEnv(); }, bandit_config(HeadKind::gaussian), 1, hooks);
  EXPECT_EQ(r.curve.size(), 3u);
}

TEST(BanditTraining, DivergenceCarriesLastGoodParameters) {
  auto cfg = bandit_config(HeadKind::gaussian);
  cfg.lr = 1e300;
  cfg.grad_clip = 1e300;
  cfg.total_timesteps = 20 * 200;
  try {
    train_single([] { return BanditEnv(); }, cfg, 1);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_TRUE(e.last_good().learners[0].params.finite());
  }
}
