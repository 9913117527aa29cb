#include "dcmab/state_space.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dcmab {

GeneralInfoState::GeneralInfoState(StateLayout layout) : layout_(layout), cells_(layout.cells()) {}

const CostRevenue& GeneralInfoState::at(std::size_t i, std::size_t j) const {
  if (i >= layout_.n_merchant_clusters || j >= layout_.n_consumer_clusters) {
    throw std::out_of_range("general info index");
  }
  return cells_[layout_.cell(i, j)];
}

void GeneralInfoState::accumulate(std::size_t i, std::size_t j, double cost, double revenue) {
  if (i >= layout_.n_merchant_clusters || j >= layout_.n_consumer_clusters) {
    throw std::out_of_range("general info index");
  }
  if (cost < 0.0 || revenue < 0.0) throw std::invalid_argument("general info increments must be non-negative");
  CostRevenue& cell = cells_[layout_.cell(i, j)];
  cell.cost += cost;
  cell.revenue += revenue;
}

void GeneralInfoState::reset() { std::fill(cells_.begin(), cells_.end(), CostRevenue{}); }

std::vector<double> GeneralInfoState::flatten() const {
  std::vector<double> out;
  out.reserve(2 * cells_.size());
  for (const auto& c : cells_) {
    out.push_back(c.cost);
    out.push_back(c.revenue);
  }
  return out;
}

double GeneralInfoState::total_cost() const {
  return std::accumulate(cells_.begin(), cells_.end(), 0.0,
                         [](double acc, const CostRevenue& c) { return acc + c.cost; });
}

double GeneralInfoState::total_revenue() const {
  return std::accumulate(cells_.begin(), cells_.end(), 0.0,
                         [](double acc, const CostRevenue& c) { return acc + c.revenue; });
}

void update_general_info(GeneralInfoState& state, const AuctionOutcome& outcome, std::size_t consumer_cluster) {
  for (const WinnerRecord& w : outcome.winners) {
    state.accumulate(w.cluster_id, consumer_cluster, w.expected_cost, w.expected_revenue);
  }
}

void update_general_info(GeneralInfoState& state, const AuctionOutcome& outcome, std::size_t merchant_cluster,
                         std::size_t consumer_cluster) {
  for (const WinnerRecord& w : outcome.winners) {
    if (w.cluster_id != merchant_cluster) continue;
    state.accumulate(merchant_cluster, consumer_cluster, w.expected_cost, w.expected_revenue);
  }
}

ActionDistribution ActionDistribution::zeros(StateLayout layout) {
  return ActionDistribution{layout, std::vector<double>(layout.cells(), 0.0), true};
}

ActionDistribution aggregate_action_distribution(StateLayout layout, std::span<const std::uint64_t> execution_counts) {
  if (execution_counts.size() != layout.cells()) throw std::invalid_argument("execution count shape");
  const std::uint64_t total = std::accumulate(execution_counts.begin(), execution_counts.end(), std::uint64_t{0});
  ActionDistribution d = ActionDistribution::zeros(layout);
  if (total == 0) return d;
  d.degenerate = false;
  for (std::size_t k = 0; k < execution_counts.size(); ++k) {
    d.values[k] = static_cast<double>(execution_counts[k]) / static_cast<double>(total);
  }
  return d;
}

StateNormalizer StateNormalizer::identity(StateLayout layout) {
  return StateNormalizer{std::vector<double>(layout.cells(), 1.0), std::vector<double>(layout.cells(), 1.0)};
}

StateNormalizer StateNormalizer::from_totals(const GeneralInfoState& reference) {
  StateNormalizer n;
  for (const auto& c : reference.cells()) {
    n.cost_scale.push_back(c.cost > 0.0 ? c.cost : 1.0);
    n.revenue_scale.push_back(c.revenue > 0.0 ? c.revenue : 1.0);
  }
  return n;
}

std::vector<double> StateNormalizer::normalize(const GeneralInfoState& g) const {
  const auto cells = g.cells();
  if (cells.size() != cost_scale.size()) throw std::invalid_argument("normalizer shape");
  std::vector<double> out;
  out.reserve(2 * cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    out.push_back(cells[k].cost / cost_scale[k]);
    out.push_back(cells[k].revenue / revenue_scale[k]);
  }
  return out;
}

std::span<const double> ConsumerClusterFeatures::row(std::size_t j) const {
  const std::size_t width = n_consumer_clusters + 2;
  return std::span<const double>(flattened).subspan(j * width, width);
}

ConsumerClusterFeatures make_consumer_features(std::vector<double> historical_revenue,
                                               std::vector<double> historical_cost) {
  if (historical_revenue.size() != historical_cost.size() || historical_revenue.empty()) {
    throw std::invalid_argument("consumer feature shape");
  }
  ConsumerClusterFeatures f;
  f.n_consumer_clusters = historical_revenue.size();
  f.historical_revenue = std::move(historical_revenue);
  f.historical_cost = std::move(historical_cost);
  const double rev_max = *std::max_element(f.historical_revenue.begin(), f.historical_revenue.end());
  const double cost_max = *std::max_element(f.historical_cost.begin(), f.historical_cost.end());
  const std::size_t L = f.n_consumer_clusters;
  f.flattened.assign(L * (L + 2), 0.0);
  for (std::size_t j = 0; j < L; ++j) {
    double* row = f.flattened.data() + j * (L + 2);
    row[j] = 1.0;
    row[L] = rev_max > 0.0 ? f.historical_revenue[j] / rev_max : 0.0;
    row[L + 1] = cost_max > 0.0 ? f.historical_cost[j] / cost_max : 0.0;
  }
  return f;
}

std::vector<std::optional<double>> attribute_rewards(std::span<const double> agent_revenue,
                                                     std::span<const RewardMode> modes) {
  if (agent_revenue.size() != modes.size()) throw std::invalid_argument("reward mode count");
  const double total = std::accumulate(agent_revenue.begin(), agent_revenue.end(), 0.0);
  std::vector<std::optional<double>> rewards(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    switch (modes[i]) {
      case RewardMode::kSelfInterest: rewards[i] = agent_revenue[i]; break;
      case RewardMode::kCoordinated: rewards[i] = total; break;
      case RewardMode::kNone: break;
    }
  }
  return rewards;
}

IntervalAccumulator::IntervalAccumulator(StateLayout layout)
    : layout_(layout),
      cells_(layout.cells()),
      executions_(layout.cells(), 0),
      agent_revenue_(layout.n_merchant_clusters, 0.0),
      agent_cost_(layout.n_merchant_clusters, 0.0),
      agent_click_(layout.n_merchant_clusters, 0.0) {}

void IntervalAccumulator::record_outcome(const AuctionOutcome& outcome, std::size_t consumer_cluster) {
  ++auctions_;
  for (const WinnerRecord& w : outcome.winners) {
    CostRevenue& c = cells_.at(layout_.cell(w.cluster_id, consumer_cluster));
    c.cost += w.expected_cost;
    c.revenue += w.expected_revenue;
    agent_revenue_[w.cluster_id] += w.expected_revenue;
    agent_cost_[w.cluster_id] += w.expected_cost;
    agent_click_[w.cluster_id] += w.expected_click;
  }
}

void IntervalAccumulator::record_execution(std::size_t i, std::size_t j, std::uint64_t count) {
  executions_.at(layout_.cell(i, j)) += count;
}

void IntervalAccumulator::merge(const IntervalAccumulator& other) {
  if (other.cells_.size() != cells_.size()) throw std::invalid_argument("accumulator shape");
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    cells_[k].cost += other.cells_[k].cost;
    cells_[k].revenue += other.cells_[k].revenue;
    executions_[k] += other.executions_[k];
  }
  for (std::size_t i = 0; i < agent_revenue_.size(); ++i) {
    agent_revenue_[i] += other.agent_revenue_[i];
    agent_cost_[i] += other.agent_cost_[i];
    agent_click_[i] += other.agent_click_[i];
  }
  auctions_ += other.auctions_;
}

void IntervalAccumulator::clear() {
  std::fill(cells_.begin(), cells_.end(), CostRevenue{});
  std::fill(executions_.begin(), executions_.end(), 0);
  std::fill(agent_revenue_.begin(), agent_revenue_.end(), 0.0);
  std::fill(agent_cost_.begin(), agent_cost_.end(), 0.0);
  std::fill(agent_click_.begin(), agent_click_.end(), 0.0);
  auctions_ = 0;
}

double IntervalAccumulator::total_revenue() const {
  return std::accumulate(agent_revenue_.begin(), agent_revenue_.end(), 0.0);
}

double IntervalAccumulator::total_cost() const {
  return std::accumulate(agent_cost_.begin(), agent_cost_.end(), 0.0);
}

StateServer::StateServer(StateLayout layout, StateNormalizer normalizer, ConsumerClusterFeatures features)
    : layout_(layout),
      normalizer_(std::move(normalizer)),
      features_(std::move(features)),
      g_(layout),
      interval_(layout),
      last_interval_(layout),
      last_d_(ActionDistribution::zeros(layout)) {
  if (features_.n_consumer_clusters != layout.n_consumer_clusters) {
    throw std::invalid_argument("consumer features do not match layout");
  }
  if (normalizer_.cost_scale.size() != layout.cells()) throw std::invalid_argument("normalizer shape");
}

void StateServer::begin_episode() {
  g_.reset();
  interval_.clear();
  last_interval_.clear();
  last_d_ = ActionDistribution::zeros(layout_);
  step_ = 0;
  interval_open_ = false;
}

void StateServer::begin_interval() {
  if (interval_open_) throw std::logic_error("interval already open");
  interval_start_state_ = current_state();
  interval_.clear();
  interval_open_ = true;
}

void StateServer::merge(const IntervalAccumulator& worker_result) {
  if (!interval_open_) throw std::logic_error("merge outside an open interval");
  interval_.merge(worker_result);
}

std::vector<double> StateServer::current_state() const {
  std::vector<double> s = normalizer_.normalize(g_);
  s.insert(s.end(), features_.flattened.begin(), features_.flattened.end());
  return s;
}

TransitionTuple StateServer::snapshot_transition(std::span<const double> actions, std::span<const RewardMode> modes,
                                                 bool terminal) {
  if (!interval_open_) throw std::logic_error("snapshot_transition: interval already snapshotted");
  if (actions.size() != layout_.cells()) throw std::invalid_argument("action matrix shape");

  const auto cells = interval_.cells();
  for (std::size_t i = 0; i < layout_.n_merchant_clusters; ++i) {
    for (std::size_t j = 0; j < layout_.n_consumer_clusters; ++j) {
      const CostRevenue& c = cells[layout_.cell(i, j)];
      g_.accumulate(i, j, c.cost, c.revenue);
    }
  }
  last_d_ = aggregate_action_distribution(layout_, interval_.executions());

  TransitionTuple t;
  t.step = step_++;
  t.state = std::move(interval_start_state_);
  t.distribution = last_d_;
  t.actions.assign(actions.begin(), actions.end());
  t.rewards = attribute_rewards(interval_.agent_revenue(), modes);
  t.next_state = current_state();
  t.next_distribution = ActionDistribution::zeros(layout_);
  t.terminal = terminal;

  last_interval_ = interval_;
  interval_.clear();
  interval_open_ = false;
  return t;
}

namespace {

void put_double(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

void put_vector(std::ostream& out, char tag, std::span<const double> values) {
  out << ' ' << tag << ' ' << values.size();
  for (double v : values) {
    out << ' ';
    put_double(out, v);
  }
}

double parse_double(const std::string& token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw std::runtime_error("transition record: bad number '" + token + "'");
  }
  return v;
}

std::vector<double> get_vector(std::istringstream& in, char tag) {
  std::string t;
  std::size_t n = 0;
  if (!(in >> t) || t.size() != 1 || t[0] != tag || !(in >> n)) {
    throw std::runtime_error(std::string("transition record: expected section ") + tag);
  }
  std::vector<double> v(n);
  for (auto& x : v) {
    if (!(in >> t)) throw std::runtime_error("transition record: truncated");
    x = parse_double(t);
  }
  return v;
}

}  // namespace

void write_transition(std::ostream& out, const TransitionTuple& t) {
  out << "T " << t.step << ' ' << (t.terminal ? 1 : 0);
  put_vector(out, 'S', t.state);
  out << ' ' << (t.distribution.degenerate ? 1 : 0);
  put_vector(out, 'D', t.distribution.values);
  put_vector(out, 'A', t.actions);
  out << " R " << t.rewards.size();
  for (const auto& r : t.rewards) {
    out << ' ';
    if (r) put_double(out, *r);
    else out << "NA";
  }
  put_vector(out, 'N', t.next_state);
  out << ' ' << (t.next_distribution.degenerate ? 1 : 0);
  put_vector(out, 'E', t.next_distribution.values);
  out << '\n';
}

std::optional<TransitionTuple> read_transition(std::istream& in, StateLayout layout) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) break;
  }
  if (line.empty()) return std::nullopt;
  std::istringstream row(line);
  std::string tag;
  TransitionTuple t;
  int terminal = 0;
  int degenerate = 0;
  if (!(row >> tag) || tag != "T" || !(row >> t.step >> terminal)) {
    throw std::runtime_error("transition record: bad prefix");
  }
  t.terminal = terminal != 0;
  t.state = get_vector(row, 'S');
  row >> degenerate;
  t.distribution = ActionDistribution{layout, get_vector(row, 'D'), degenerate != 0};
  t.actions = get_vector(row, 'A');
  std::size_t n = 0;
  if (!(row >> tag) || tag != "R" || !(row >> n)) throw std::runtime_error("transition record: expected R");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(row >> tag)) throw std::runtime_error("transition record: truncated");
    if (tag == "NA") t.rewards.emplace_back(std::nullopt);
    else t.rewards.emplace_back(parse_double(tag));
  }
  t.next_state = get_vector(row, 'N');
  row >> degenerate;
  t.next_distribution = ActionDistribution{layout, get_vector(row, 'E'), degenerate != 0};
  if (t.distribution.values.size() != layout.cells() || t.next_distribution.values.size() != layout.cells()) {
    throw std::runtime_error("transition record: distribution does not match layout");
  }
  return t;
}

}  // namespace dcmab
