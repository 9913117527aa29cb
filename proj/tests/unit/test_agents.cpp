#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dcmab/agents.hpp"
#include "oracles.hpp"
#include "random_tuples.hpp"

namespace dcmab {
namespace {

using oracle::random_tuple;

AgentConfig small_config(Algorithm algo) {
  AgentConfig c;
  c.algorithm = algo;
  c.actor_hidden = 8;
  c.critic_hidden = 8;
  c.minibatch_size = 4;
  return c;
}

TEST(BidAdjustment, Examples) {
  EXPECT_EQ(compute_bid_adjustment(0.0, 1.7, 2.0, 0.9), 2.0);
  EXPECT_NEAR(adjustment_ratio(0.5, 1.2, 0.9), 0.6, 1e-15);
  EXPECT_NEAR(compute_bid_adjustment(0.5, 1.2, 1.0, 0.9), 1.6, 1e-15);
  EXPECT_NEAR(adjustment_ratio(0.8, 2.0, 0.9), 0.9, 1e-15);
  EXPECT_NEAR(compute_bid_adjustment(0.8, 2.0, 3.0, 0.9), 1.9 * 3.0, 1e-12);
  EXPECT_NEAR(compute_bid_adjustment(-1.0, 5.0, 3.0, 0.9), 0.1 * 3.0, 1e-12);
}

TEST(BidAdjustment, AlwaysInsideFeasibleRegion) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-1.0, 1.0), br(0.0, 20.0), bid(0.01, 10.0);
  for (int k = 0; k < 10000; ++k) {
    const double b = bid(rng);
    const double alpha = adjustment_ratio(a(rng), br(rng), 0.9);
    EXPECT_LE(std::abs(alpha), 0.9);
    const double f = b * (1.0 + alpha);
    EXPECT_GE(f, 0.1 * b - 1e-12);
    EXPECT_LE(f, 1.9 * b + 1e-12);
  }
}

TEST(Targets, TdAndAdvantage) {
  EXPECT_EQ(td_target(5.0, 1.0, 123.0, true), 5.0);
  EXPECT_EQ(td_target(1.0, 1.0, 2.0, false), 3.0);
  EXPECT_EQ(td_target(1.0, 0.0, 2.0, false), 1.0);
  EXPECT_EQ(a2c_advantage(4.0, 0.9, 0.0, 0.0, false), 4.0);
  EXPECT_NEAR(a2c_advantage(1.0, 0.5, 2.0, 4.0, false), 1.0, 1e-15);
  EXPECT_EQ(a2c_advantage(1.0, 0.5, 2.0, 4.0, true), -1.0);
}

TEST(Noise, PerturbedActionsStayInRange) {
  for (auto mode : {NoiseMode::kGaussian, NoiseMode::kOrnsteinUhlenbeck}) {
    NoiseConfig cfg;
    cfg.mode = mode;
    cfg.sigma = 10.0;
    ExplorationNoise noise(cfg, 3, 5);
    for (int k = 0; k < 1000; ++k) {
      std::vector<double> a{0.0, 0.5, -0.5};
      noise.perturb(a);
      for (double v : a) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Noise, SigmaDecaysPerEpisode) {
  NoiseConfig cfg;
  cfg.sigma = 0.2;
  cfg.decay = 0.5;
  ExplorationNoise noise(cfg, 1, 1);
  noise.end_episode();
  noise.end_episode();
  EXPECT_NEAR(noise.sigma(), 0.05, 1e-15);
}

TEST(ReplayMemory, EvictsOldestAndSamplesDistinct) {
  const StateLayout l{1, 1};
  std::mt19937_64 rng(2);
  ReplayMemory m(3);
  for (std::size_t k = 0; k < 5; ++k) {
    auto t = random_tuple(l, rng);
    t.step = k;
    m.push(t);
  }
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.at(0).step, 2u);
  EXPECT_EQ(m.at(2).step, 4u);
  for (int k = 0; k < 100; ++k) {
    auto idx = m.sample_indices(3, rng);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2}));
  }
  EXPECT_THROW((void)m.sample_indices(4, rng), std::invalid_argument);
}

TEST(ReplayMemory, UniformSampling) {
  const StateLayout l{1, 1};
  std::mt19937_64 rng(3);
  ReplayMemory m(100);
  for (int k = 0; k < 100; ++k) m.push(random_tuple(l, rng));
  const int draws = 100000;
  std::vector<int> hits(100, 0);
  for (int k = 0; k < draws; ++k) ++hits[m.sample_indices(1, rng)[0]];
  const double p = 0.01;
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1.0 - p));
  double chi2 = 0.0;
  for (int h : hits) {
    EXPECT_LE(std::abs(h - mean), 3.0 * sd);
    chi2 += (h - mean) * (h - mean) / mean;
  }
  // 99.9th percentile of chi-square with 99 degrees of freedom.
  EXPECT_LT(chi2, 148.2);
}

TEST(Manual, ZeroActionsAndNoReplay) {
  const StateLayout l{2, 3};
  EXPECT_EQ(manual_policy(l), std::vector<double>(3, 0.0));
  AgentTeam team(l, std::vector<AgentConfig>(2, small_config(Algorithm::kManual)), 1);
  std::mt19937_64 rng(1);
  team.observe(random_tuple(l, rng));
  EXPECT_EQ(team.memory().size(), 0u);
  EXPECT_FALSE(team.any_learner());
  const auto a = team.act(std::vector<double>(l.state_dim(), 0.3), true);
  EXPECT_EQ(a, std::vector<double>(6, 0.0));
  for (auto m : team.reward_modes()) EXPECT_EQ(m, RewardMode::kNone);
}

TEST(DeterministicPolicy, ZeroActorActsZeroAndIsDeterministic) {
  const StateLayout l{2, 2};
  DeterministicPolicyAgent agent(0, l, small_config(Algorithm::kDcmab), 9);
  const std::vector<double> s(l.state_dim(), 0.4), joint(l.cells(), 0.0), d(l.cells(), 0.25);
  const PolicyContext ctx{s, joint, d};
  EXPECT_EQ(agent.act(ctx, false), agent.act(ctx, false));
  for (auto& layer : agent.actor().layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  EXPECT_EQ(agent.act(ctx, false), std::vector<double>(2, 0.0));
}

TEST(DeterministicPolicy, CriticSideLayout) {
  const StateLayout l{3, 2};
  DeterministicPolicyAgent dcmab(1, l, small_config(Algorithm::kDcmab), 1);
  DeterministicPolicyAgent ddpg(1, l, small_config(Algorithm::kDdpg), 1);
  Eigen::MatrixXd joint(6, 1), d(6, 1);
  joint << 1, 2, 3, 4, 5, 6;
  d << 10, 20, 30, 40, 50, 60;
  Eigen::VectorXd want_joint(12), want_own(8);
  want_joint << 1, 2, 3, 4, 5, 6, 10, 20, 30, 40, 50, 60;
  want_own << 3, 4, 10, 20, 30, 40, 50, 60;
  EXPECT_EQ(Eigen::VectorXd(dcmab.critic_side(joint, d).col(0)), want_joint);
  EXPECT_EQ(Eigen::VectorXd(ddpg.critic_side(joint, d).col(0)), want_own);
  EXPECT_EQ(dcmab.own_action_offset(), 2u);
  EXPECT_EQ(ddpg.own_action_offset(), 0u);
}

TEST(DeterministicPolicy, TerminalTargetIgnoresTargetCritic) {
  const StateLayout l{1, 1};
  AgentConfig cfg = small_config(Algorithm::kDcmab);
  cfg.gamma = 1.0;
  std::mt19937_64 rng(4);
  std::vector<TransitionTuple> tuples{random_tuple(l, rng, true), random_tuple(l, rng, true)};
  const Minibatch batch = make_minibatch(tuples, 0, 1.0);

  DeterministicPolicyAgent a(0, l, cfg, 3);
  DeterministicPolicyAgent b(0, l, cfg, 3);
  // Scramble b's target critic; with terminal tuples the loss must not change.
  for (auto& layer : b.target_critic().head().layers()) layer.bias.setConstant(1e6);
  const TargetPolicyFn fa = [&](std::size_t, const Eigen::MatrixXd& s) { return a.target_actions(s); };
  const TargetPolicyFn fb = [&](std::size_t, const Eigen::MatrixXd& s) { return b.target_actions(s); };
  const Eigen::RowVectorXd q = a.critic().forward(batch.states, a.critic_side(batch.actions, batch.distribution));
  const double expected = (q - batch.rewards.transpose()).squaredNorm() / 2.0;
  EXPECT_NEAR(a.critic_update(batch, fa), expected, 1e-12);
  EXPECT_NEAR(b.critic_update(batch, fb), expected, 1e-12);
}

TEST(DeterministicPolicy, BootstrapUsesTargetCritic) {
  const StateLayout l{1, 1};
  AgentConfig cfg = small_config(Algorithm::kDdpg);
  cfg.gamma = 1.0;
  DeterministicPolicyAgent a(0, l, cfg, 3);
  // Constant target critic = 2: zero weights, output bias 2.
  for (auto& layer : a.target_critic().encoder().layers()) layer.weight.setZero();
  for (auto& layer : a.target_critic().head().layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  a.target_critic().head().layers().back().bias(0) = 2.0;
  std::mt19937_64 rng(5);
  auto t = random_tuple(l, rng);
  t.rewards = {1.0};
  const std::vector<TransitionTuple> one{t};
  const Minibatch batch = make_minibatch(one, 0, 1.0);
  const double q = a.critic().forward(batch.states, a.critic_side(batch.actions, batch.distribution))(0);
  const TargetPolicyFn f = [&](std::size_t, const Eigen::MatrixXd& s) { return a.target_actions(s); };
  EXPECT_NEAR(a.critic_update(batch, f), (q - 3.0) * (q - 3.0), 1e-12);
}

TEST(DeterministicPolicy, LiteralLossFlag) {
  const StateLayout l{1, 1};
  AgentConfig cfg = small_config(Algorithm::kDdpg);
  cfg.gamma = 0.5;
  cfg.discounted_q_loss = true;
  DeterministicPolicyAgent a(0, l, cfg, 3);
  std::mt19937_64 rng(5);
  const std::vector<TransitionTuple> one{random_tuple(l, rng, true)};
  const Minibatch batch = make_minibatch(one, 0, 1.0);
  const double q = a.critic().forward(batch.states, a.critic_side(batch.actions, batch.distribution))(0);
  const TargetPolicyFn f = [&](std::size_t, const Eigen::MatrixXd& s) { return a.target_actions(s); };
  const double y = batch.rewards(0);
  EXPECT_NEAR(a.critic_update(batch, f), (y - 0.5 * q) * (y - 0.5 * q), 1e-12);
}

TEST(DeterministicPolicy, CriticFitsLinearReward) {
  const StateLayout l{2, 1};
  AgentConfig cfg = small_config(Algorithm::kDcmab);
  cfg.gamma = 0.0;
  cfg.critic_hidden = 32;
  cfg.critic_learning_rate = 3e-3;
  DeterministicPolicyAgent agent(0, l, cfg, 17);
  std::mt19937_64 rng(18);
  std::vector<TransitionTuple> data;
  for (int k = 0; k < 64; ++k) {
    auto t = random_tuple(l, rng);
    double r = 0.3;
    for (std::size_t i = 0; i < t.state.size(); ++i) r += 0.05 * static_cast<double>(i % 3) * t.state[i];
    r += 0.4 * t.actions[0] - 0.2 * t.actions[1];
    t.rewards = {r, 0.0};
    data.push_back(t);
  }
  const Minibatch batch = make_minibatch(data, 0, 1.0);
  const TargetPolicyFn f = [&](std::size_t, const Eigen::MatrixXd& s) { return agent.target_actions(s); };
  for (int step = 0; step < 2000; ++step) (void)agent.critic_update(batch, f);
  const Eigen::RowVectorXd q = agent.critic().forward(batch.states, agent.critic_side(batch.actions, batch.distribution));
  const double mse = (q - batch.rewards.transpose()).squaredNorm() / static_cast<double>(q.size());
  EXPECT_LT(mse, 1e-3);
}

/// -mean Q(s, a with own slice = mu(s), d) evaluated without the agent's gradient code.
double actor_objective(const DeterministicPolicyAgent& agent, const Minibatch& batch) {
  Eigen::MatrixXd joint = batch.actions;
  const Eigen::MatrixXd mu = agent.policy_actions(batch.states);
  const auto L = static_cast<Eigen::Index>(agent.layout().n_consumer_clusters);
  joint.middleRows(static_cast<Eigen::Index>(agent.index()) * L, L) = mu.reshaped(L, batch.states.cols());
  const Eigen::RowVectorXd q = agent.critic().forward(batch.states, agent.critic_side(joint, batch.distribution));
  return -q.mean();
}

TEST(DeterministicPolicy, ActorGradientMatchesFiniteDifferences) {
  for (Algorithm algo : {Algorithm::kDcmab, Algorithm::kDdpg}) {
    const StateLayout l{2, 2};
    AgentConfig cfg = small_config(algo);
    cfg.actor_hidden = 6;
    cfg.critic_hidden = 6;
    DeterministicPolicyAgent agent(1, l, cfg, 23);
    std::mt19937_64 rng(24);
    std::vector<TransitionTuple> tuples;
    for (int k = 0; k < 3; ++k) tuples.push_back(random_tuple(l, rng));
    const Minibatch batch = make_minibatch(tuples, 1, 1.0);

    const MlpGradients g = agent.actor_gradient(batch);
    std::vector<double> analytic;
    for (std::size_t k = 0; k < g.weight.size(); ++k) {
      for (Eigen::Index r = 0; r < g.weight[k].rows(); ++r) {
        for (Eigen::Index c = 0; c < g.weight[k].cols(); ++c) analytic.push_back(g.weight[k](r, c));
      }
      for (Eigen::Index r = 0; r < g.bias[k].size(); ++r) analytic.push_back(g.bias[k](r));
    }
    std::vector<double> theta = agent.actor().flat_parameters();
    ASSERT_EQ(theta.size(), analytic.size());
    double worst = 0.0;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      const double keep = theta[p];
      theta[p] = keep + 1e-6;
      agent.actor().set_flat_parameters(theta);
      const double up = actor_objective(agent, batch);
      theta[p] = keep - 1e-6;
      agent.actor().set_flat_parameters(theta);
      const double down = actor_objective(agent, batch);
      theta[p] = keep;
      agent.actor().set_flat_parameters(theta);
      worst = std::max(worst, oracle::relative_error(analytic[p], (up - down) / 2e-6));
    }
    EXPECT_LT(worst, 1e-3) << to_string(algo);
  }
}

TEST(DeterministicPolicy, ConstantCriticGivesZeroActorGradient) {
  const StateLayout l{2, 2};
  DeterministicPolicyAgent agent(0, l, small_config(Algorithm::kDcmab), 2);
  for (auto& layer : agent.critic().head().layers()) layer.weight.setZero();
  std::mt19937_64 rng(2);
  const std::vector<TransitionTuple> tuples{random_tuple(l, rng), random_tuple(l, rng)};
  const auto before = agent.actor().flat_parameters();
  EXPECT_EQ(agent.actor_update(make_minibatch(tuples, 0, 1.0)), 0.0);
  EXPECT_EQ(agent.actor().flat_parameters(), before);
}

TEST(Reduction, SingleAgentDcmabEqualsDdpg) {
  const StateLayout l{1, 2};
  AgentTeam dcmab(l, {small_config(Algorithm::kDcmab)}, 77);
  AgentTeam ddpg(l, {small_config(Algorithm::kDdpg)}, 77);
  std::mt19937_64 rng(78);
  for (int k = 0; k < 14; ++k) {
    const auto t = random_tuple(l, rng, k % 3 == 2);
    dcmab.observe(t);
    ddpg.observe(t);
    const auto sa = dcmab.update(t);
    const auto sb = ddpg.update(t);
    EXPECT_EQ(sa[0].critic_loss, sb[0].critic_loss);
    const auto& a = dynamic_cast<const DeterministicPolicyAgent&>(dcmab.agent(0));
    const auto& b = dynamic_cast<const DeterministicPolicyAgent&>(ddpg.agent(0));
    EXPECT_EQ(a.actor().flat_parameters(), b.actor().flat_parameters());
    EXPECT_EQ(a.critic().encoder().flat_parameters(), b.critic().encoder().flat_parameters());
    EXPECT_EQ(a.critic().head().flat_parameters(), b.critic().head().flat_parameters());
    EXPECT_EQ(a.target_actor().flat_parameters(), b.target_actor().flat_parameters());
  }
}

TEST(Bandit, RegressesOnImmediateReward) {
  const StateLayout l{2, 1};
  for (double gamma : {0.0, 0.99}) {
    AgentConfig cfg = small_config(Algorithm::kBandit);
    cfg.gamma = gamma;
    BanditAgent agent(0, l, cfg, 5);
    std::mt19937_64 rng(6);
    const std::vector<TransitionTuple> tuples{random_tuple(l, rng), random_tuple(l, rng)};
    const Minibatch batch = make_minibatch(tuples, 0, 1.0);
    Eigen::MatrixXd side(2 * l.cells(), 2);
    side.topRows(l.cells()) = batch.actions;
    side.bottomRows(l.cells()) = batch.distribution;
    const Eigen::RowVectorXd q = agent.estimator().forward(batch.states, side);
    const double expected = (q - batch.rewards.transpose()).squaredNorm() / 2.0;
    EXPECT_NEAR(agent.estimator_update(batch), expected, 1e-12);
  }
}

TEST(Bandit, ActionsInRange) {
  const StateLayout l{2, 3};
  BanditAgent agent(1, l, small_config(Algorithm::kBandit), 5);
  const std::vector<double> s(l.state_dim(), 0.2), joint(l.cells(), 0.1), d(l.cells(), 1.0 / 6.0);
  for (int k = 0; k < 50; ++k) {
    for (double v : agent.act({s, joint, d}, k % 2 == 0)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(A2C, AdvantageWithZeroValueIsReward) {
  const StateLayout l{1, 1};
  AgentConfig cfg = small_config(Algorithm::kA2C);
  A2CAgent agent(0, l, cfg, 4);
  std::mt19937_64 rng(9);
  auto t = random_tuple(l, rng);
  // Without a matching act() the update refuses to run.
  ReplayMemory memory;
  const TargetPolicyFn none = [](std::size_t, const Eigen::MatrixXd& s) {
    return Eigen::MatrixXd::Zero(1, s.cols()).eval();
  };
  EXPECT_THROW((void)agent.update({memory, t, none}), std::logic_error);

  const std::vector<double> joint(1, 0.0), d(1, 1.0);
  const auto a = agent.act({t.state, joint, d}, true);
  ASSERT_EQ(a.size(), 1u);
  t.actions = a;
  const auto stats = agent.update({memory, t, none});
  EXPECT_TRUE(stats.updated);
}

TEST(Team, SeedsAreDistinctPerAgentAndReproducible) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
  const StateLayout l{3, 2};
  AgentTeam a(l, std::vector<AgentConfig>(3, small_config(Algorithm::kDcmab)), 4);
  AgentTeam b(l, std::vector<AgentConfig>(3, small_config(Algorithm::kDcmab)), 4);
  const std::vector<double> s(l.state_dim(), 0.5);
  EXPECT_EQ(a.act(s, true), b.act(s, true));
  EXPECT_THROW((void)a.act(std::vector<double>(3, 0.0), false), std::invalid_argument);
}

TEST(Team, CheckpointRoundTrip) {
  const StateLayout l{3, 2};
  std::vector<AgentConfig> cfgs{small_config(Algorithm::kDcmab), small_config(Algorithm::kBandit),
                                small_config(Algorithm::kA2C)};
  AgentTeam team(l, cfgs, 8);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 6; ++k) {
    const auto t = random_tuple(l, rng);
    team.observe(t);
  }
  const auto dir = std::filesystem::temp_directory_path() / "dcmab_team_checkpoint_test";
  std::filesystem::remove_all(dir);
  team.save(dir);
  AgentTeam restored(l, cfgs, 999);
  restored.load(dir);
  const std::vector<double> s(l.state_dim(), 0.25);
  EXPECT_EQ(team.act(s, false), restored.act(s, false));
  EXPECT_EQ(team.act(s, true), restored.act(s, true));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace dcmab
