#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcmab/agents.hpp"
#include "dcmab/clustering.hpp"
#include "dcmab/market.hpp"
#include "dcmab/metrics.hpp"
#include "dcmab/state_space.hpp"

namespace dcmab {

struct EpisodeConfig {
  std::size_t steps_per_episode = 3;  // T
  double interval_seconds = 3600.0;   // T_p; each interval takes 1/T of the requests
  std::size_t episodes = 300;
  std::size_t patience = 50;  // converged once the best evaluation is this many episodes old
  bool stop_on_convergence = true;
  std::size_t slots = 3;
  double reserve_price = 0.0;
  std::size_t worker_count = 1;
  double budget_fraction = 1.0 / 3.0;
  std::uint64_t seed = 1;
  /// Workers settle their own shards against a locked ledger. Results then
  /// depend on thread timing.
  bool async_workers = false;

  void validate() const;
  [[nodiscard]] AuctionConfig auction() const { return {slots, reserve_price}; }
};

/// Manual bids, unlimited budgets: who spends and earns what.
struct CalibrationResult {
  double total_cost = 0.0;  // C_T
  double total_revenue = 0.0;
  std::vector<EntityStats> merchants;  // revenue and presence count
  std::vector<EntityStats> consumers;  // revenue and request count
  std::vector<double> merchant_cost;   // indexed by merchant id
};

[[nodiscard]] CalibrationResult calibrate(std::span<const AuctionRequest> requests, const AuctionConfig& config);
[[nodiscard]] double calibrate_ct(std::span<const AuctionRequest> requests, const AuctionConfig& config = {});

/// Everything learned from the training log before any agent acts.
struct MarketModel {
  StateLayout layout;
  ClusterAssignment clusters;
  StateNormalizer normalizer;
  ConsumerClusterFeatures features;
};

[[nodiscard]] MarketModel build_market_model(std::span<const AuctionRequest> train_log, std::size_t n_merchant_clusters,
                                             std::size_t n_consumer_clusters, const AuctionConfig& config);

/// One log ready for replay: cluster ids filled in and reference spend known.
struct Market {
  std::vector<AuctionRequest> requests;
  std::size_t merchant_count = 0;  // merchant ids are in [0, merchant_count)
  std::vector<std::size_t> merchant_cluster;
  std::vector<double> reference_cost;  // per merchant under manual, unlimited budget
  double c_t = 0.0;
  double reference_revenue = 0.0;
  std::vector<double> reference_cluster_revenue;  // per merchant cluster
};

[[nodiscard]] Market prepare_market(std::vector<AuctionRequest> requests, const MarketModel& model,
                                    const AuctionConfig& config);

/// Each merchant gets `fraction` of its own reference spend, so the market
/// total is fraction * C_T. Merchants that never won get the smallest
/// positive reference spend as their base.
[[nodiscard]] std::vector<double> merchant_budgets(const Market& market, double fraction);

/// Counters for the runtime checks performed while episodes run.
struct InvariantReport {
  std::uint64_t auctions = 0;
  std::uint64_t bids = 0;
  std::uint64_t winners = 0;
  std::uint64_t snapshots = 0;

  std::uint64_t price_above_bid = 0;
  std::uint64_t budget_overrun = 0;
  std::uint64_t exhausted_bidder = 0;
  std::uint64_t adjustment_out_of_range = 0;
  std::uint64_t bid_out_of_range = 0;
  std::uint64_t ledger_imbalance = 0;

  std::uint64_t distribution_invalid = 0;
  std::uint64_t state_decreased = 0;
  std::uint64_t chaining_broken = 0;
  std::uint64_t revenue_not_conserved = 0;

  std::vector<std::string> messages;  // first few violations

  [[nodiscard]] bool market_clean() const;
  [[nodiscard]] bool state_clean() const;
  void record(std::uint64_t& counter, const std::string& message);
  void merge(const InvariantReport& other);
};

struct StepResult {
  std::vector<double> actions;  // agent-major N * L
  std::vector<double> agent_revenue;
  std::vector<double> agent_cost;
  std::vector<double> agent_click;
  std::uint64_t auctions = 0;
  ActionDistribution distribution;
};

struct EpisodeResult {
  std::vector<double> agent_revenue;
  std::vector<double> agent_cost;
  std::vector<double> agent_click;
  std::vector<double> agent_budget;
  std::vector<double> agent_spent;
  double total_revenue = 0.0;
  double total_cost = 0.0;
  double total_click = 0.0;
  std::vector<StepResult> steps;
  std::vector<UpdateStats> last_updates;

  [[nodiscard]] std::vector<double> spent_fraction() const;
  [[nodiscard]] std::vector<ClusterTotals> cluster_totals() const;
};

[[nodiscard]] MetricsReport compute_metrics(const EpisodeResult& result);

struct EpisodeOptions {
  bool explore = false;
  bool learn = false;
  /// Overrides the budget fraction with explicit per-merchant budgets.
  std::optional<std::vector<double>> budgets;
  InvariantReport* monitor = nullptr;
  std::vector<TransitionTuple>* transitions = nullptr;
};

class WorkerPool;

/// Reusable per-episode buffers and the worker threads.
class EpisodeRunner {
 public:
  explicit EpisodeRunner(std::size_t worker_count);
  ~EpisodeRunner();
  EpisodeRunner(const EpisodeRunner&) = delete;
  EpisodeRunner& operator=(const EpisodeRunner&) = delete;

  [[nodiscard]] EpisodeResult run(const Market& market, const MarketModel& model, AgentTeam& team,
                                  const EpisodeConfig& config, const EpisodeOptions& options);

 private:
  std::unique_ptr<WorkerPool> pool_;
  std::vector<std::vector<CandidateAd>> ranked_;
};

[[nodiscard]] EpisodeResult run_episode(const Market& market, const MarketModel& model, AgentTeam& team,
                                        const EpisodeConfig& config, const EpisodeOptions& options = {});

struct CurvePoint {
  std::size_t episode = 0;
  double train_revenue = 0.0;  // exploratory episode
  double eval_revenue = 0.0;   // noise-free replay of the training log
  double best_revenue = 0.0;
  double noise_sigma = 0.0;
  std::vector<double> eval_agent_revenue;
  std::vector<double> eval_spent_fraction;
};

struct TrainingOptions {
  InvariantReport* monitor = nullptr;
  std::function<void(const CurvePoint&)> on_episode;
};

struct TrainingResult {
  std::vector<CurvePoint> curve;
  AgentTeam best;  // snapshot with the highest noise-free training revenue
  double best_revenue = 0.0;
  std::size_t best_episode = 0;
  bool converged = false;
};

[[nodiscard]] TrainingResult run_training(const Market& train, const MarketModel& model, AgentTeam team,
                                          const EpisodeConfig& config, const TrainingOptions& options = {});

void write_learning_curve(std::ostream& out, std::span<const CurvePoint> curve);

/// Train and test markets sharing one model.
struct ExperimentData {
  MarketModel model;
  Market train;
  Market test;
};

[[nodiscard]] ExperimentData prepare_experiment(std::vector<AuctionRequest> train_log,
                                                std::vector<AuctionRequest> test_log, std::size_t n_merchant_clusters,
                                                std::size_t n_consumer_clusters, const AuctionConfig& config);

/// Default reward scale: the manual unlimited-budget revenue per interval
/// that the reward covers (the agent's own cluster, or the whole market for
/// coordinated rewards).
[[nodiscard]] double default_reward_scale(const Market& train, const EpisodeConfig& config, std::size_t agent,
                                          RewardMode mode);
/// Fills in every non-positive reward_scale with the default.
[[nodiscard]] std::vector<AgentConfig> resolve_reward_scales(std::vector<AgentConfig> agents, const Market& train,
                                                             const EpisodeConfig& config);

struct ExperimentResult {
  TrainingResult training;
  EpisodeResult test;
  MetricsReport test_metrics;
};

/// Trains a team built from `agents` (reward_scale <= 0 means default) and
/// evaluates the best snapshot on the test market.
[[nodiscard]] ExperimentResult run_experiment(const ExperimentData& data, std::vector<AgentConfig> agents,
                                              const EpisodeConfig& config, const TrainingOptions& options = {});

struct SweepStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> values;
};

[[nodiscard]] SweepStats summarize_runs(std::vector<double> values);

struct ClusterSweepRow {
  std::size_t clusters = 0;
  SweepStats test_revenue;
};

/// For every N (with L = N) trains `seeds.size()` teams of `agent` and
/// reports the test revenue.
[[nodiscard]] std::vector<ClusterSweepRow> sweep_cluster_count(const std::vector<AuctionRequest>& train_log,
                                                               const std::vector<AuctionRequest>& test_log,
                                                               std::span<const std::size_t> cluster_counts,
                                                               const AgentConfig& agent, const EpisodeConfig& config,
                                                               std::span<const std::uint64_t> seeds);

struct BudgetSweepRow {
  double fraction = 0.0;
  SweepStats learned_revenue;
  double manual_revenue = 0.0;
  double manual_spend_fraction = 0.0;
};

/// Per budget fraction: trains coordinated agents and replays manual bids.
[[nodiscard]] std::vector<BudgetSweepRow> sweep_budget_ratio(const ExperimentData& data,
                                                             std::span<const double> fractions,
                                                             const AgentConfig& agent, const EpisodeConfig& config,
                                                             std::span<const std::uint64_t> seeds);

}  // namespace dcmab
