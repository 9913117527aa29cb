#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dcmab/market.hpp"

namespace dcmab {

/// Dimensions of every vector that crosses the state/agent boundary.
///
/// The general-information block g is flattened row-major by (merchant
/// cluster i, consumer cluster j) as [cost_11, revenue_11, cost_12, ...].
/// Each consumer-cluster feature x_j is one-hot(j) followed by the
/// normalized historical (revenue, cost) pair. The full state is [g, x_1..x_L];
/// the actor input for pair (i, j) is [g, x_j].
struct StateLayout {
  std::size_t n_merchant_clusters = 1;
  std::size_t n_consumer_clusters = 1;

  [[nodiscard]] std::size_t cells() const { return n_merchant_clusters * n_consumer_clusters; }
  [[nodiscard]] std::size_t g_dim() const { return 2 * cells(); }
  [[nodiscard]] std::size_t x_dim() const { return n_consumer_clusters + 2; }
  [[nodiscard]] std::size_t state_dim() const { return g_dim() + n_consumer_clusters * x_dim(); }
  [[nodiscard]] std::size_t actor_input_dim() const { return g_dim() + x_dim(); }
  [[nodiscard]] std::size_t cell(std::size_t i, std::size_t j) const { return i * n_consumer_clusters + j; }
};

struct CostRevenue {
  double cost = 0.0;
  double revenue = 0.0;
};

/// Cumulative (cost, revenue) per merchant-cluster x consumer-cluster pair.
class GeneralInfoState {
 public:
  GeneralInfoState() = default;
  explicit GeneralInfoState(StateLayout layout);

  [[nodiscard]] const StateLayout& layout() const { return layout_; }
  [[nodiscard]] const CostRevenue& at(std::size_t i, std::size_t j) const;
  [[nodiscard]] std::span<const CostRevenue> cells() const { return cells_; }

  /// Adds a non-negative increment to cell (i, j).
  void accumulate(std::size_t i, std::size_t j, double cost, double revenue);
  void reset();

  [[nodiscard]] std::vector<double> flatten() const;
  [[nodiscard]] double total_cost() const;
  [[nodiscard]] double total_revenue() const;

 private:
  StateLayout layout_{};
  std::vector<CostRevenue> cells_;
};

/// Adds every winner of `outcome` to (winner cluster, consumer_cluster).
void update_general_info(GeneralInfoState& state, const AuctionOutcome& outcome, std::size_t consumer_cluster);
/// Adds only the winners that belong to merchant cluster `merchant_cluster`.
void update_general_info(GeneralInfoState& state, const AuctionOutcome& outcome, std::size_t merchant_cluster,
                         std::size_t consumer_cluster);

/// Frequency of executed cluster-level actions within one interval.
struct ActionDistribution {
  StateLayout layout{};
  std::vector<double> values;  // flattened like g's cells
  bool degenerate = true;      // no executions at all

  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values.at(layout.cell(i, j)); }
  [[nodiscard]] static ActionDistribution zeros(StateLayout layout);
};

[[nodiscard]] ActionDistribution aggregate_action_distribution(StateLayout layout,
                                                               std::span<const std::uint64_t> execution_counts);

/// Per-cell scales that map raw currency in g onto roughly [0, 1].
struct StateNormalizer {
  std::vector<double> cost_scale;     // one per cell
  std::vector<double> revenue_scale;  // one per cell

  [[nodiscard]] static StateNormalizer identity(StateLayout layout);
  [[nodiscard]] static StateNormalizer from_totals(const GeneralInfoState& reference);
  [[nodiscard]] std::vector<double> normalize(const GeneralInfoState& g) const;
};

/// Static consumer-cluster features x^q = [x_1, ..., x_L].
struct ConsumerClusterFeatures {
  std::size_t n_consumer_clusters = 0;
  std::vector<double> historical_revenue;
  std::vector<double> historical_cost;
  std::vector<double> flattened;  // L rows of (L + 2)

  [[nodiscard]] std::span<const double> row(std::size_t j) const;
};

[[nodiscard]] ConsumerClusterFeatures make_consumer_features(std::vector<double> historical_revenue,
                                                             std::vector<double> historical_cost);

enum class RewardMode { kSelfInterest, kCoordinated, kNone };

[[nodiscard]] std::vector<std::optional<double>> attribute_rewards(std::span<const double> agent_revenue,
                                                                   std::span<const RewardMode> modes);

/// What one interval produced, before merging into g.
class IntervalAccumulator {
 public:
  IntervalAccumulator() = default;
  explicit IntervalAccumulator(StateLayout layout);

  void record_outcome(const AuctionOutcome& outcome, std::size_t consumer_cluster);
  void record_execution(std::size_t i, std::size_t j, std::uint64_t count = 1);
  void merge(const IntervalAccumulator& other);
  void clear();

  [[nodiscard]] const StateLayout& layout() const { return layout_; }
  [[nodiscard]] std::span<const CostRevenue> cells() const { return cells_; }
  [[nodiscard]] std::span<const std::uint64_t> executions() const { return executions_; }
  [[nodiscard]] std::span<const double> agent_revenue() const { return agent_revenue_; }
  [[nodiscard]] std::span<const double> agent_cost() const { return agent_cost_; }
  [[nodiscard]] std::span<const double> agent_click() const { return agent_click_; }
  [[nodiscard]] std::uint64_t auctions() const { return auctions_; }
  [[nodiscard]] double total_revenue() const;
  [[nodiscard]] double total_cost() const;

 private:
  StateLayout layout_{};
  std::vector<CostRevenue> cells_;
  std::vector<std::uint64_t> executions_;
  std::vector<double> agent_revenue_;
  std::vector<double> agent_cost_;
  std::vector<double> agent_click_;
  std::uint64_t auctions_ = 0;
};

/// One replay-memory record.
struct TransitionTuple {
  std::size_t step = 0;
  std::vector<double> state;  // normalized [g, x^q]
  ActionDistribution distribution;
  std::vector<double> actions;                  // agent-major, N * L
  std::vector<std::optional<double>> rewards;   // raw currency, absent for non-learners
  std::vector<double> next_state;
  ActionDistribution next_distribution;
  bool terminal = false;

  [[nodiscard]] std::span<const double> agent_actions(std::size_t agent, std::size_t n_consumer_clusters) const {
    return std::span<const double>(actions).subspan(agent * n_consumer_clusters, n_consumer_clusters);
  }
};

/// Merges interval results into g at every interval boundary and emits
/// transition tuples. Single-threaded: called from the merge thread only.
class StateServer {
 public:
  StateServer(StateLayout layout, StateNormalizer normalizer, ConsumerClusterFeatures features);

  [[nodiscard]] const StateLayout& layout() const { return layout_; }
  [[nodiscard]] const GeneralInfoState& general_info() const { return g_; }
  [[nodiscard]] const ConsumerClusterFeatures& features() const { return features_; }
  [[nodiscard]] const ActionDistribution& last_distribution() const { return last_d_; }
  [[nodiscard]] bool interval_open() const { return interval_open_; }

  /// Zeroes g and d; x^q is kept.
  void begin_episode();
  void begin_interval();
  void merge(const IntervalAccumulator& worker_result);

  /// Normalized [g, x^q] as of now.
  [[nodiscard]] std::vector<double> current_state() const;

  /// Closes the open interval: folds it into g, builds the tuple, resets the
  /// interval accumulators. `next_distribution` is left for the caller.
  TransitionTuple snapshot_transition(std::span<const double> actions, std::span<const RewardMode> modes,
                                      bool terminal);

  [[nodiscard]] const IntervalAccumulator& last_interval() const { return last_interval_; }

 private:
  StateLayout layout_;
  StateNormalizer normalizer_;
  ConsumerClusterFeatures features_;
  GeneralInfoState g_;
  IntervalAccumulator interval_;
  IntervalAccumulator last_interval_;
  ActionDistribution last_d_;
  std::vector<double> interval_start_state_;
  std::size_t step_ = 0;
  bool interval_open_ = false;
};

/// Line-delimited text record; doubles are written with round-trip precision.
void write_transition(std::ostream& out, const TransitionTuple& tuple);
[[nodiscard]] std::optional<TransitionTuple> read_transition(std::istream& in, StateLayout layout);

}  // namespace dcmab
