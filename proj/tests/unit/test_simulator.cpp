#include <gtest/gtest.h>

#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dcmab/auction_log.hpp"
#include "dcmab/simulator.hpp"
#include "oracles.hpp"

namespace dcmab {
namespace {

CandidateAd make_ad(MerchantId id, double base_bid, double pctr, double pcvr, double ppb) {
  CandidateAd c;
  c.merchant_id = id;
  c.base_bid = base_bid;
  c.pctr = pctr;
  c.pcvr = pcvr;
  c.pcvr_avg = pcvr;
  c.ppb = ppb;
  return c;
}

GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.merchants = 40;
  g.consumers = 80;
  g.requests = 600;
  g.candidates_per_request = 6;
  return g;
}

ExperimentData small_experiment(std::size_t n = 2, std::size_t l = 2) {
  const auto g = small_generator();
  return prepare_experiment(generate_synthetic_log(g, 1), generate_synthetic_log(g, 2), n, l, {});
}

AgentConfig tiny_agent(Algorithm algo) {
  AgentConfig a;
  a.algorithm = algo;
  a.actor_hidden = 8;
  a.critic_hidden = 8;
  a.minibatch_size = 4;
  return a;
}

AgentTeam team_of(const ExperimentData& d, Algorithm algo, std::uint64_t seed = 1) {
  return AgentTeam(d.model.layout, std::vector<AgentConfig>(d.model.layout.n_merchant_clusters, tiny_agent(algo)),
                   seed);
}

std::vector<double> unlimited(const Market& m) {
  return std::vector<double>(m.merchant_count, std::numeric_limits<double>::infinity());
}

TEST(Calibration, HandExamples) {
  EXPECT_EQ(calibrate_ct({}), 0.0);
  // eCPMs 0.20 and 0.15: the winner pays 0.15 / 0.10 = 1.5 per click, 0.15 expected.
  AuctionRequest r;
  r.candidates = {make_ad(0, 2.0, 0.10, 0.1, 100.0), make_ad(1, 1.0, 0.15, 0.1, 100.0)};
  const std::vector<AuctionRequest> log{r};
  EXPECT_NEAR(calibrate_ct(log, {1, 0.0}), 0.15, 1e-12);
  const auto cal = calibrate(log, {1, 0.0});
  EXPECT_NEAR(cal.total_revenue, 1.0, 1e-12);
  EXPECT_NEAR(cal.merchant_cost[0], 0.15, 1e-12);
  EXPECT_EQ(cal.merchant_cost[1], 0.0);
}

TEST(Calibration, Deterministic) {
  const auto log = generate_synthetic_log(small_generator(), 3);
  EXPECT_EQ(calibrate_ct(log), calibrate_ct(log));
  EXPECT_GT(calibrate_ct(log), 0.0);
}

TEST(Budgets, FractionOfReferenceSpendWithFloor) {
  Market m;
  m.merchant_count = 3;
  m.reference_cost = {4.0, 0.0, 2.0};
  EXPECT_EQ(merchant_budgets(m, 0.5), (std::vector<double>{2.0, 1.0, 1.0}));
  m.reference_cost = {0.0, 0.0, 0.0};
  EXPECT_EQ(merchant_budgets(m, 0.5), (std::vector<double>(3, 0.0)));
  EXPECT_THROW((void)merchant_budgets(m, -1.0), std::invalid_argument);
}

TEST(Episode, ManualUnlimitedSpendsReferenceCost) {
  const auto d = small_experiment();
  AgentTeam team = team_of(d, Algorithm::kManual);
  EpisodeOptions opt;
  opt.budgets = unlimited(d.test);
  const auto r = run_episode(d.test, d.model, team, {}, opt);
  EXPECT_NEAR(r.total_cost, d.test.c_t, 1e-9 * d.test.c_t);
  EXPECT_NEAR(r.total_revenue, d.test.reference_revenue, 1e-9 * d.test.reference_revenue);
}

TEST(Episode, ZeroBudgetEarnsNothing) {
  const auto d = small_experiment();
  AgentTeam team = team_of(d, Algorithm::kDcmab);
  EpisodeOptions opt;
  opt.budgets = std::vector<double>(d.test.merchant_count, 0.0);
  const auto r = run_episode(d.test, d.model, team, {}, opt);
  EXPECT_EQ(r.total_revenue, 0.0);
  EXPECT_EQ(r.total_cost, 0.0);
  for (const auto& s : r.steps) EXPECT_TRUE(s.distribution.degenerate);
}

TEST(Episode, FullBudgetManualSpendsAboutReference) {
  const auto d = small_experiment();
  AgentTeam team = team_of(d, Algorithm::kManual);
  EpisodeConfig c;
  c.budget_fraction = 1.0;
  const auto r = run_episode(d.test, d.model, team, c);
  EXPECT_NEAR(r.total_cost, d.test.c_t, 0.02 * d.test.c_t);
}

TEST(Episode, TotalsAreSumsOfParts) {
  const auto d = small_experiment(3, 2);
  AgentTeam team = team_of(d, Algorithm::kDcmab);
  InvariantReport monitor;
  EpisodeOptions opt;
  opt.explore = true;
  opt.monitor = &monitor;
  const auto r = run_episode(d.train, d.model, team, {}, opt);
  ASSERT_EQ(r.steps.size(), 3u);
  double rev = 0.0, cost = 0.0;
  std::uint64_t auctions = 0;
  for (const auto& s : r.steps) {
    rev += std::accumulate(s.agent_revenue.begin(), s.agent_revenue.end(), 0.0);
    cost += std::accumulate(s.agent_cost.begin(), s.agent_cost.end(), 0.0);
    auctions += s.auctions;
  }
  EXPECT_NEAR(rev, r.total_revenue, 1e-9 * r.total_revenue);
  EXPECT_NEAR(cost, r.total_cost, 1e-9 * r.total_cost);
  EXPECT_NEAR(std::accumulate(r.agent_revenue.begin(), r.agent_revenue.end(), 0.0), r.total_revenue,
              1e-9 * r.total_revenue);
  EXPECT_LE(auctions, d.train.requests.size());
  EXPECT_TRUE(monitor.market_clean()) << (monitor.messages.empty() ? "" : monitor.messages.front());
  EXPECT_TRUE(monitor.state_clean()) << (monitor.messages.empty() ? "" : monitor.messages.front());
  for (double f : r.spent_fraction()) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0 + 1e-12);
  }
}

TEST(Episode, WorkerCountDoesNotChangeResults) {
  const auto d = small_experiment(3, 3);
  EpisodeConfig one, four;
  four.worker_count = 4;
  AgentTeam a = team_of(d, Algorithm::kDcmab, 5);
  AgentTeam b = team_of(d, Algorithm::kDcmab, 5);
  EpisodeOptions opt;
  opt.explore = true;
  opt.learn = true;
  for (int e = 0; e < 3; ++e) {
    const auto ra = run_episode(d.train, d.model, a, one, opt);
    const auto rb = run_episode(d.train, d.model, b, four, opt);
    EXPECT_EQ(ra.total_revenue, rb.total_revenue);
    EXPECT_EQ(ra.total_cost, rb.total_cost);
    EXPECT_EQ(ra.agent_spent, rb.agent_spent);
  }
}

TEST(Episode, TransitionsChainAndEndTerminal) {
  const auto d = small_experiment();
  AgentTeam team = team_of(d, Algorithm::kDcmab);
  std::vector<TransitionTuple> t;
  EpisodeOptions opt;
  opt.transitions = &t;
  (void)run_episode(d.train, d.model, team, {}, opt);
  ASSERT_EQ(t.size(), 3u);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    EXPECT_EQ(t[k].next_state, t[k + 1].state);
    EXPECT_EQ(t[k].next_distribution.values, t[k + 1].distribution.values);
    EXPECT_FALSE(t[k].terminal);
  }
  EXPECT_TRUE(t.back().terminal);
}

TEST(Training, ZeroEpisodesLeavesAgentsUnchanged) {
  const auto d = small_experiment();
  AgentTeam team = team_of(d, Algorithm::kDcmab);
  EpisodeConfig c;
  c.episodes = 0;
  const auto r = run_training(d.train, d.model, team, c);
  EXPECT_TRUE(r.curve.empty());
  const auto& before = dynamic_cast<const DeterministicPolicyAgent&>(team.agent(0));
  const auto& after = dynamic_cast<const DeterministicPolicyAgent&>(r.best.agent(0));
  EXPECT_EQ(before.actor().flat_parameters(), after.actor().flat_parameters());
}

TEST(Training, ManualCurveIsFlat) {
  const auto d = small_experiment();
  EpisodeConfig c;
  c.episodes = 4;
  const auto r = run_training(d.train, d.model, team_of(d, Algorithm::kManual), c);
  ASSERT_EQ(r.curve.size(), 4u);
  for (const auto& p : r.curve) {
    EXPECT_EQ(p.eval_revenue, r.curve.front().eval_revenue);
    EXPECT_EQ(p.train_revenue, p.eval_revenue);
  }
  std::ostringstream out;
  write_learning_curve(out, r.curve);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "episode,train_revenue,eval_revenue,best_revenue,noise_sigma,agent0_revenue,agent1_revenue,"
            "agent0_spent_fraction,agent1_spent_fraction");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Training, SameSeedSameCurve) {
  const auto d = small_experiment();
  EpisodeConfig c;
  c.episodes = 3;
  const auto a = run_training(d.train, d.model, team_of(d, Algorithm::kDcmab, 9), c);
  const auto b = run_training(d.train, d.model, team_of(d, Algorithm::kDcmab, 9), c);
  std::ostringstream ca, cb;
  write_learning_curve(ca, a.curve);
  write_learning_curve(cb, b.curve);
  EXPECT_EQ(ca.str(), cb.str());
}

// Two merchants, one slot, one consumer cluster. The manual bids let the
// low-value merchant win every auction; total revenue improves only if the
// high-value merchant outbids it.
std::vector<AuctionRequest> micro_log(std::size_t n) {
  std::vector<AuctionRequest> log;
  for (std::size_t k = 0; k < n; ++k) {
    AuctionRequest r;
    r.request_id = k;
    r.consumer_id = static_cast<ConsumerId>(k % 4);
    r.timestamp = static_cast<std::uint32_t>(k);
    r.candidates = {make_ad(0, 1.1, 0.1, 0.01, 10.0), make_ad(1, 1.0, 0.1, 0.2, 10.0)};
    log.push_back(r);
  }
  return log;
}

/// Best total revenue over constant joint actions on a grid, replayed with the
/// brute-force auction.
double constant_action_optimum(const Market& market, const std::vector<double>& budgets, const EpisodeConfig& c,
                               int grid) {
  double best = 0.0;
  for (int u = 0; u <= grid; ++u) {
    for (int v = 0; v <= grid; ++v) {
      const double a[2] = {-1.0 + 2.0 * u / grid, -1.0 + 2.0 * v / grid};
      std::map<MerchantId, double> remaining;
      for (std::size_t m = 0; m < budgets.size(); ++m) remaining[static_cast<MerchantId>(m)] = budgets[m];
      double revenue = 0.0;
      for (const auto& r : market.requests) {
        auto cands = r.candidates;
        for (auto& x : cands) {
          const double alpha = std::clamp(a[x.cluster_id] * x.bratio(), -0.9, 0.9);
          x.final_bid = x.base_bid * (1.0 + alpha);
        }
        for (const auto& s : oracle::brute_force_auction(cands, remaining, c.slots, c.reserve_price)) {
          revenue += s.revenue;
        }
      }
      best = std::max(best, revenue);
    }
  }
  return best;
}

TEST(Training, MicroMarketBeatsManual) {
  EpisodeConfig c;
  c.slots = 1;
  c.budget_fraction = 1.0;
  c.episodes = 120;
  c.stop_on_convergence = false;
  const auto d = prepare_experiment(micro_log(300), micro_log(300), 2, 1, c.auction());
  ASSERT_EQ(d.model.clusters.merchant_cluster(0), 0u);
  ASSERT_EQ(d.model.clusters.merchant_cluster(1), 1u);

  AgentConfig a = tiny_agent(Algorithm::kDcmab);
  a.reward_mode = RewardMode::kCoordinated;
  a.actor_hidden = 16;
  a.critic_hidden = 16;
  a.actor_learning_rate = 1e-3;
  a.reward_scale = 0.0;
  a.minibatch_size = 8;
  const std::vector<AgentConfig> agents(2, a);

  AgentTeam manual(d.model.layout, std::vector<AgentConfig>(2, tiny_agent(Algorithm::kManual)), 1);
  const double manual_revenue = run_episode(d.test, d.model, manual, c).total_revenue;
  const double optimum = constant_action_optimum(d.test, merchant_budgets(d.test, 1.0), c, 20);
  EXPECT_NEAR(manual_revenue, 300 * 0.1 * 0.01 * 10.0, 1e-9);
  EXPECT_GT(optimum, 10.0 * manual_revenue);

  const auto r = run_experiment(d, agents, c);
  const double learned = r.test.total_revenue;
  EXPECT_GT(learned, manual_revenue);
  EXPECT_LE(learned, optimum + 1e-9);
  // Most of the gap to the grid optimum is closed.
  EXPECT_GT(learned, manual_revenue + 0.5 * (optimum - manual_revenue)) << learned << " vs " << optimum;
}

TEST(Sweeps, ReportEveryRow) {
  const auto g = small_generator();
  const auto train = generate_synthetic_log(g, 1);
  const auto test = generate_synthetic_log(g, 2);
  EpisodeConfig c;
  c.episodes = 1;
  const std::vector<std::size_t> ns{1, 2};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto rows = sweep_cluster_count(train, test, ns, tiny_agent(Algorithm::kDcmab), c, seeds);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].clusters, 1u);
  EXPECT_EQ(rows[1].test_revenue.values.size(), 2u);

  const auto d = small_experiment();
  const std::vector<double> fractions{1.0 / 3.0, 1.0};
  const auto budget_rows = sweep_budget_ratio(d, fractions, tiny_agent(Algorithm::kDcmab), c, seeds);
  ASSERT_EQ(budget_rows.size(), 2u);
  EXPECT_GT(budget_rows[1].manual_revenue, budget_rows[0].manual_revenue);
  EXPECT_GT(budget_rows[1].manual_spend_fraction, 0.95);
  EXPECT_EQ(budget_rows[0].learned_revenue.values.size(), 2u);
}

TEST(Sweeps, SummaryStatistics) {
  const auto s = summarize_runs({1.0, 2.0, 3.0});
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 3.0);
  EXPECT_NEAR(s.stddev, 1.0, 1e-12);
}

}  // namespace
}  // namespace dcmab
