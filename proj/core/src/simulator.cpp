#include "dcmab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dcmab/worker_pool.hpp"

namespace dcmab {

void EpisodeConfig::validate() const {
  if (steps_per_episode == 0) throw std::invalid_argument("steps per episode must be at least 1");
  if (worker_count == 0) throw std::invalid_argument("worker count must be at least 1");
  if (slots == 0) throw std::invalid_argument("slots must be at least 1");
  if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
    throw std::invalid_argument("budget fraction must be in (0, 1]");
  }
  if (!(interval_seconds > 0.0)) throw std::invalid_argument("interval length must be positive");
  if (!(reserve_price >= 0.0)) throw std::invalid_argument("reserve price must be non-negative");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
}

namespace {

std::size_t merchant_id_space(std::span<const AuctionRequest> requests) {
  std::size_t n = 0;
  for (const auto& r : requests) {
    for (const auto& c : r.candidates) n = std::max<std::size_t>(n, std::size_t{c.merchant_id} + 1);
  }
  return n;
}

void set_manual_bids(std::vector<CandidateAd>& candidates) {
  for (auto& c : candidates) c.final_bid = c.base_bid;
}

bool close_enough(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

CalibrationResult calibrate(std::span<const AuctionRequest> requests, const AuctionConfig& config) {
  const std::size_t n_merchants = merchant_id_space(requests);
  std::size_t n_consumers = 0;
  for (const auto& r : requests) n_consumers = std::max<std::size_t>(n_consumers, std::size_t{r.consumer_id} + 1);

  std::vector<double> m_rev(n_merchants, 0.0), m_cost(n_merchants, 0.0), m_presence(n_merchants, 0.0);
  std::vector<double> c_rev(n_consumers, 0.0), c_requests(n_consumers, 0.0);
  BudgetLedger ledger = BudgetLedger::unlimited(n_merchants);

  CalibrationResult out;
  AuctionRequest manual;
  for (const auto& r : requests) {
    manual.candidates = r.candidates;
    set_manual_bids(manual.candidates);
    for (const auto& c : manual.candidates) m_presence[c.merchant_id] += 1.0;
    c_requests[r.consumer_id] += 1.0;
    const AuctionOutcome outcome = settle_auction(manual, ledger, config);
    for (const auto& w : outcome.winners) {
      m_rev[w.merchant_id] += w.expected_revenue;
      m_cost[w.merchant_id] += w.expected_cost;
      c_rev[r.consumer_id] += w.expected_revenue;
      out.total_cost += w.expected_cost;
      out.total_revenue += w.expected_revenue;
    }
  }
  for (std::size_t m = 0; m < n_merchants; ++m) {
    if (m_presence[m] > 0.0) out.merchants.push_back({static_cast<std::uint32_t>(m), m_rev[m], m_presence[m]});
  }
  for (std::size_t c = 0; c < n_consumers; ++c) {
    if (c_requests[c] > 0.0) out.consumers.push_back({static_cast<std::uint32_t>(c), c_rev[c], c_requests[c]});
  }
  out.merchant_cost = std::move(m_cost);
  return out;
}

double calibrate_ct(std::span<const AuctionRequest> requests, const AuctionConfig& config) {
  return calibrate(requests, config).total_cost;
}

namespace {

void assign_clusters(std::vector<AuctionRequest>& requests, const ClusterAssignment& clusters) {
  for (auto& r : requests) {
    r.consumer_cluster_id = clusters.consumer_cluster(r.consumer_id);
    for (auto& c : r.candidates) c.cluster_id = clusters.merchant_cluster(c.merchant_id);
  }
}

}  // namespace

MarketModel build_market_model(std::span<const AuctionRequest> train_log, std::size_t n_merchant_clusters,
                               std::size_t n_consumer_clusters, const AuctionConfig& config) {
  if (n_merchant_clusters == 0 || n_consumer_clusters == 0) throw std::invalid_argument("cluster counts must be positive");
  const CalibrationResult cal = calibrate(train_log, config);
  if (cal.merchants.size() < n_merchant_clusters || cal.consumers.size() < n_consumer_clusters) {
    throw std::invalid_argument("training log has fewer entities than clusters");
  }

  MarketModel model;
  model.layout = {n_merchant_clusters, n_consumer_clusters};
  model.clusters.n_merchant_clusters = n_merchant_clusters;
  model.clusters.n_consumer_clusters = n_consumer_clusters;
  model.clusters.merchant_to_cluster = cluster_merchants_by_presence(cal.merchants, n_merchant_clusters);
  model.clusters.consumer_to_cluster = cluster_consumers_by_requests(cal.consumers, n_consumer_clusters);

  std::vector<AuctionRequest> requests(train_log.begin(), train_log.end());
  assign_clusters(requests, model.clusters);
  GeneralInfoState reference(model.layout);
  BudgetLedger ledger = BudgetLedger::unlimited(merchant_id_space(requests));
  for (auto& r : requests) {
    set_manual_bids(r.candidates);
    update_general_info(reference, settle_auction(r, ledger, config), r.consumer_cluster_id);
  }
  model.normalizer = StateNormalizer::from_totals(reference);

  std::vector<double> hist_revenue(n_consumer_clusters, 0.0), hist_cost(n_consumer_clusters, 0.0);
  for (std::size_t i = 0; i < n_merchant_clusters; ++i) {
    for (std::size_t j = 0; j < n_consumer_clusters; ++j) {
      hist_revenue[j] += reference.at(i, j).revenue;
      hist_cost[j] += reference.at(i, j).cost;
    }
  }
  model.features = make_consumer_features(std::move(hist_revenue), std::move(hist_cost));
  return model;
}

Market prepare_market(std::vector<AuctionRequest> requests, const MarketModel& model, const AuctionConfig& config) {
  Market market;
  assign_clusters(requests, model.clusters);
  const CalibrationResult cal = calibrate(requests, config);
  market.requests = std::move(requests);
  market.merchant_count = cal.merchant_cost.size();
  market.reference_cost = cal.merchant_cost;
  market.c_t = cal.total_cost;
  market.reference_revenue = cal.total_revenue;
  market.merchant_cluster.resize(market.merchant_count);
  for (std::size_t m = 0; m < market.merchant_count; ++m) {
    market.merchant_cluster[m] = model.clusters.merchant_cluster(static_cast<std::uint32_t>(m));
  }
  market.reference_cluster_revenue.assign(model.layout.n_merchant_clusters, 0.0);
  for (const auto& e : cal.merchants) market.reference_cluster_revenue[market.merchant_cluster[e.id]] += e.revenue;
  return market;
}

std::vector<double> merchant_budgets(const Market& market, double fraction) {
  if (!(fraction >= 0.0)) throw std::invalid_argument("budget fraction must be non-negative");
  double floor = std::numeric_limits<double>::infinity();
  for (double c : market.reference_cost) {
    if (c > 0.0) floor = std::min(floor, c);
  }
  if (!std::isfinite(floor)) floor = 0.0;
  std::vector<double> budgets(market.merchant_count);
  for (std::size_t m = 0; m < market.merchant_count; ++m) {
    const double base = market.reference_cost[m] > 0.0 ? market.reference_cost[m] : floor;
    budgets[m] = fraction * base;
  }
  return budgets;
}

// ---------------------------------------------------------------- invariants

bool InvariantReport::market_clean() const {
  return price_above_bid == 0 && budget_overrun == 0 && exhausted_bidder == 0 && adjustment_out_of_range == 0 &&
         bid_out_of_range == 0 && ledger_imbalance == 0;
}

bool InvariantReport::state_clean() const {
  return distribution_invalid == 0 && state_decreased == 0 && chaining_broken == 0 && revenue_not_conserved == 0;
}

void InvariantReport::record(std::uint64_t& counter, const std::string& message) {
  ++counter;
  if (messages.size() < 20) messages.push_back(message);
}

void InvariantReport::merge(const InvariantReport& o) {
  auctions += o.auctions;
  bids += o.bids;
  winners += o.winners;
  snapshots += o.snapshots;
  price_above_bid += o.price_above_bid;
  budget_overrun += o.budget_overrun;
  exhausted_bidder += o.exhausted_bidder;
  adjustment_out_of_range += o.adjustment_out_of_range;
  bid_out_of_range += o.bid_out_of_range;
  ledger_imbalance += o.ledger_imbalance;
  distribution_invalid += o.distribution_invalid;
  state_decreased += o.state_decreased;
  chaining_broken += o.chaining_broken;
  revenue_not_conserved += o.revenue_not_conserved;
  for (const auto& m : o.messages) {
    if (messages.size() < 20) messages.push_back(m);
  }
}

namespace {

/// Market-side checks with a charge tally kept apart from the ledger.
class MarketChecker {
 public:
  MarketChecker(InvariantReport* report, const std::vector<double>& budgets, std::span<const double> ranges)
      : report_(report), budgets_(budgets), charged_(budgets.size(), 0.0), ranges_(ranges) {}

  [[nodiscard]] bool enabled() const { return report_ != nullptr; }

  void bidder(const CandidateAd& c) {
    ++report_->bids;
    const double range = ranges_[c.cluster_id];
    const double ratio = c.final_bid / c.base_bid;
    const double alpha = ratio - 1.0;
    if (std::abs(alpha) > range + 1e-12) {
      report_->record(report_->adjustment_out_of_range,
                      "adjustment " + std::to_string(alpha) + " for merchant " + std::to_string(c.merchant_id));
    }
    if (ratio < 1.0 - range - 1e-12 || ratio > 1.0 + range + 1e-12) {
      report_->record(report_->bid_out_of_range, "final bid outside the feasible region for merchant " +
                                                     std::to_string(c.merchant_id));
    }
    if (charged_[c.merchant_id] >= budgets_[c.merchant_id] + tolerance(c.merchant_id)) {
      report_->record(report_->exhausted_bidder, "exhausted merchant " + std::to_string(c.merchant_id) + " bid");
    }
  }

  void settled(const AuctionOutcome& outcome, const BudgetLedger& ledger) {
    ++report_->auctions;
    for (const auto& w : outcome.winners) {
      ++report_->winners;
      if (w.price_per_click > w.final_bid * (1.0 + 1e-12)) {
        report_->record(report_->price_above_bid, "price above bid for merchant " + std::to_string(w.merchant_id));
      }
      const double before = charged_[w.merchant_id];
      charged_[w.merchant_id] += w.expected_cost;
      const double budget = budgets_[w.merchant_id];
      // One settled click may cross the budget; nothing after that.
      if (before > budget + tolerance(w.merchant_id) ||
          charged_[w.merchant_id] > budget + w.expected_cost + tolerance(w.merchant_id)) {
        report_->record(report_->budget_overrun, "merchant " + std::to_string(w.merchant_id) + " overran budget");
      }
      if (ledger.spent(w.merchant_id) > budget + tolerance(w.merchant_id)) {
        report_->record(report_->budget_overrun, "ledger spent above budget for " + std::to_string(w.merchant_id));
      }
    }
  }

  void finish(const BudgetLedger& ledger) {
    for (std::size_t m = 0; m < budgets_.size(); ++m) {
      const auto id = static_cast<MerchantId>(m);
      if (!close_enough(ledger.spent(id) + ledger.remaining(id), budgets_[m], 1e-9)) {
        report_->record(report_->ledger_imbalance, "spent + remaining != budget for " + std::to_string(m));
      }
      if (!close_enough(ledger.spent(id) + ledger.overspend(id), charged_[m], 1e-9)) {
        report_->record(report_->ledger_imbalance, "ledger charges disagree for " + std::to_string(m));
      }
    }
  }

 private:
  [[nodiscard]] double tolerance(MerchantId m) const {
    return kCurrencyTolerance * std::max(1.0, budgets_[m]);
  }

  InvariantReport* report_;
  const std::vector<double>& budgets_;
  std::vector<double> charged_;
  std::span<const double> ranges_;
};

void check_snapshot(InvariantReport& report, const TransitionTuple& tuple, const GeneralInfoState& before,
                    const GeneralInfoState& after, const IntervalAccumulator& interval) {
  ++report.snapshots;
  const auto& d = tuple.distribution;
  double sum = 0.0;
  bool in_range = true;
  for (double v : d.values) {
    sum += v;
    in_range = in_range && v >= 0.0 && v <= 1.0;
  }
  const bool ok = d.degenerate ? sum == 0.0 : (in_range && std::abs(sum - 1.0) <= 1e-9);
  if (!ok) report.record(report.distribution_invalid, "d sums to " + std::to_string(sum));

  for (std::size_t k = 0; k < after.cells().size(); ++k) {
    if (after.cells()[k].cost < before.cells()[k].cost || after.cells()[k].revenue < before.cells()[k].revenue) {
      report.record(report.state_decreased, "g cell " + std::to_string(k) + " decreased");
    }
  }
  double cell_revenue = 0.0;
  for (const auto& c : interval.cells()) cell_revenue += c.revenue;
  if (!close_enough(cell_revenue, interval.total_revenue(), 1e-9) ||
      !close_enough(after.total_revenue() - before.total_revenue(), interval.total_revenue(), 1e-9)) {
    report.record(report.revenue_not_conserved, "interval revenue does not match g increment");
  }
}

}  // namespace

// ---------------------------------------------------------------- results

std::vector<double> EpisodeResult::spent_fraction() const {
  std::vector<double> f(agent_budget.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = agent_budget[i] > 0.0 ? agent_spent[i] / agent_budget[i] : 0.0;
  return f;
}

std::vector<ClusterTotals> EpisodeResult::cluster_totals() const {
  std::vector<ClusterTotals> out(agent_revenue.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {agent_revenue[i], agent_cost[i], agent_click[i], agent_budget[i], agent_spent[i]};
  }
  return out;
}

MetricsReport compute_metrics(const EpisodeResult& result) {
  const auto totals = result.cluster_totals();
  return compute_metrics(totals);
}

// ---------------------------------------------------------------- episodes

EpisodeRunner::EpisodeRunner(std::size_t worker_count) : pool_(std::make_unique<WorkerPool>(worker_count)) {}

EpisodeRunner::~EpisodeRunner() = default;

EpisodeResult EpisodeRunner::run(const Market& market, const MarketModel& model, AgentTeam& team,
                                 const EpisodeConfig& config, const EpisodeOptions& options) {
  config.validate();
  const StateLayout layout = model.layout;
  if (team.layout().n_merchant_clusters != layout.n_merchant_clusters ||
      team.layout().n_consumer_clusters != layout.n_consumer_clusters) {
    throw std::invalid_argument("agent team does not match the market's cluster layout");
  }
  if (config.worker_count != pool_->size()) throw std::invalid_argument("runner built for another worker count");
  const std::size_t N = layout.n_merchant_clusters;
  const std::size_t L = layout.n_consumer_clusters;
  const std::size_t T = config.steps_per_episode;
  const AuctionConfig auction = config.auction();

  std::vector<double> budgets = options.budgets ? *options.budgets : merchant_budgets(market, config.budget_fraction);
  if (budgets.size() < market.merchant_count) throw std::invalid_argument("budget vector too short");
  BudgetLedger ledger(budgets);

  std::vector<double> ranges(N);
  for (std::size_t i = 0; i < N; ++i) ranges[i] = team.agent(i).config().range;
  MarketChecker checker(options.monitor, budgets, ranges);

  StateServer server(layout, model.normalizer, model.features);
  server.begin_episode();
  team.begin_episode();
  const std::vector<RewardMode> modes = team.reward_modes();

  EpisodeResult result;
  result.agent_revenue.assign(N, 0.0);
  result.agent_cost.assign(N, 0.0);
  result.agent_click.assign(N, 0.0);

  auto finalize = [&](const TransitionTuple& t) {
    if (options.transitions) options.transitions->push_back(t);
    if (options.learn) {
      team.observe(t);
      result.last_updates = team.update(t);
    }
  };

  const std::size_t R = market.requests.size();
  const std::size_t W = pool_->size();
  std::optional<TransitionTuple> pending;
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t begin = step * R / T;
    const std::size_t end = (step + 1) * R / T;
    const std::vector<double> state = server.current_state();
    const std::vector<double> actions = team.act(state, options.explore);

    server.begin_interval();
    IntervalAccumulator interval(layout);

    auto build = [&](std::vector<CandidateAd>& out, const AuctionRequest& req) {
      out.assign(req.candidates.begin(), req.candidates.end());
      const std::size_t j = req.consumer_cluster_id;
      for (auto& c : out) {
        const std::size_t i = c.cluster_id;
        c.final_bid = compute_bid_adjustment(actions[i * L + j], c.bratio(), c.base_bid, ranges[i]);
      }
      rank_by_ecpm_in_place(out);
    };
    std::vector<CandidateAd> eligible;
    auto settle = [&](const std::vector<CandidateAd>& ranked, std::size_t j, IntervalAccumulator& acc) {
      eligible.clear();
      for (const auto& c : ranked) {
        if (!is_eligible(c, ledger, auction)) continue;
        eligible.push_back(c);
        acc.record_execution(c.cluster_id, j);
        if (checker.enabled()) checker.bidder(c);
      }
      if (eligible.empty()) return;
      const AuctionOutcome outcome = settle_ranked(eligible, ledger, auction);
      acc.record_outcome(outcome, j);
      if (checker.enabled()) checker.settled(outcome, ledger);
    };

    if (!config.async_workers) {
      // Bids and ranking in parallel, settlement in request order.
      const std::size_t len = end - begin;
      if (ranked_.size() < len) ranked_.resize(len);
      pool_->run([&](std::size_t w) {
        for (std::size_t k = w; k < len; k += W) build(ranked_[k], market.requests[begin + k]);
      });
      for (std::size_t k = 0; k < len; ++k) settle(ranked_[k], market.requests[begin + k].consumer_cluster_id, interval);
    } else {
      std::mutex ledger_mutex;
      std::vector<IntervalAccumulator> local(W, IntervalAccumulator(layout));
      std::vector<std::vector<CandidateAd>> scratch(W);
      std::vector<std::vector<CandidateAd>> eligible_scratch(W);
      pool_->run([&](std::size_t w) {
        for (std::size_t k = begin + w; k < end; k += W) {
          const AuctionRequest& req = market.requests[k];
          build(scratch[w], req);
          std::lock_guard lock(ledger_mutex);
          auto& elig = eligible_scratch[w];
          elig.clear();
          for (const auto& c : scratch[w]) {
            if (!is_eligible(c, ledger, auction)) continue;
            elig.push_back(c);
            local[w].record_execution(c.cluster_id, req.consumer_cluster_id);
            if (checker.enabled()) checker.bidder(c);
          }
          if (elig.empty()) continue;
          const AuctionOutcome outcome = settle_ranked(elig, ledger, auction);
          local[w].record_outcome(outcome, req.consumer_cluster_id);
          if (checker.enabled()) checker.settled(outcome, ledger);
        }
      });
      for (const auto& acc : local) interval.merge(acc);
    }

    server.merge(interval);
    GeneralInfoState g_before;
    if (options.monitor) g_before = server.general_info();
    const bool terminal = step + 1 == T;
    TransitionTuple tuple = server.snapshot_transition(actions, modes, terminal);
    if (options.monitor) {
      check_snapshot(*options.monitor, tuple, g_before, server.general_info(), server.last_interval());
      if (pending && pending->next_state != tuple.state) {
        options.monitor->record(options.monitor->chaining_broken, "s' of step " + std::to_string(pending->step) +
                                                                      " differs from s of the next step");
      }
    }
    team.set_context(actions, tuple.distribution.values);

    const IntervalAccumulator& done = server.last_interval();
    StepResult sr;
    sr.actions = actions;
    sr.agent_revenue.assign(done.agent_revenue().begin(), done.agent_revenue().end());
    sr.agent_cost.assign(done.agent_cost().begin(), done.agent_cost().end());
    sr.agent_click.assign(done.agent_click().begin(), done.agent_click().end());
    sr.auctions = done.auctions();
    sr.distribution = tuple.distribution;
    for (std::size_t i = 0; i < N; ++i) {
      result.agent_revenue[i] += sr.agent_revenue[i];
      result.agent_cost[i] += sr.agent_cost[i];
      result.agent_click[i] += sr.agent_click[i];
    }
    result.steps.push_back(std::move(sr));

    if (pending) {
      pending->next_distribution = tuple.distribution;
      finalize(*pending);
    }
    pending = std::move(tuple);
    if (terminal) finalize(*pending);
  }
  if (options.explore) team.end_episode();

  result.agent_budget.assign(N, 0.0);
  result.agent_spent.assign(N, 0.0);
  for (std::size_t m = 0; m < market.merchant_count; ++m) {
    if (market.reference_cost.empty()) break;
    const std::size_t i = market.merchant_cluster[m];
    result.agent_budget[i] += budgets[m];
    result.agent_spent[i] += ledger.spent(static_cast<MerchantId>(m));
  }
  for (std::size_t i = 0; i < N; ++i) {
    result.total_revenue += result.agent_revenue[i];
    result.total_cost += result.agent_cost[i];
    result.total_click += result.agent_click[i];
  }
  if (options.monitor) {
    checker.finish(ledger);
    if (!close_enough(result.total_revenue, server.general_info().total_revenue(), 1e-9)) {
      options.monitor->record(options.monitor->revenue_not_conserved, "episode revenue differs from g total");
    }
  }
  return result;
}

EpisodeResult run_episode(const Market& market, const MarketModel& model, AgentTeam& team,
                          const EpisodeConfig& config, const EpisodeOptions& options) {
  EpisodeRunner runner(config.worker_count);
  return runner.run(market, model, team, config, options);
}

// ---------------------------------------------------------------- training

namespace {

double noise_sigma(const AgentTeam& team) {
  for (std::size_t i = 0; i < team.size(); ++i) {
    if (const auto* a = dynamic_cast<const DeterministicPolicyAgent*>(&team.agent(i))) {
      return a->noise().sigma();
    }
  }
  return 0.0;
}

}  // namespace

TrainingResult run_training(const Market& train, const MarketModel& model, AgentTeam team,
                            const EpisodeConfig& config, const TrainingOptions& options) {
  config.validate();
  EpisodeRunner runner(config.worker_count);
  EpisodeOptions eval_options;
  eval_options.monitor = options.monitor;
  EpisodeOptions train_options = eval_options;
  train_options.explore = true;
  train_options.learn = true;

  AgentTeam probe(team);
  const double initial = runner.run(train, model, probe, config, eval_options).total_revenue;
  TrainingResult result{{}, team, initial, 0, false};

  std::size_t since_best = 0;
  for (std::size_t e = 1; e <= config.episodes; ++e) {
    const EpisodeResult explored = runner.run(train, model, team, config, train_options);
    AgentTeam evaluated(team);
    const EpisodeResult eval = runner.run(train, model, evaluated, config, eval_options);
    if (eval.total_revenue > result.best_revenue) {
      result.best = team;
      result.best_revenue = eval.total_revenue;
      result.best_episode = e;
      since_best = 0;
    } else {
      ++since_best;
    }
    CurvePoint p;
    p.episode = e;
    p.train_revenue = explored.total_revenue;
    p.eval_revenue = eval.total_revenue;
    p.best_revenue = result.best_revenue;
    p.noise_sigma = noise_sigma(team);
    p.eval_agent_revenue = eval.agent_revenue;
    p.eval_spent_fraction = eval.spent_fraction();
    result.curve.push_back(p);
    if (options.on_episode) options.on_episode(p);
    if (since_best >= config.patience) {
      result.converged = true;
      if (config.stop_on_convergence) break;
    }
  }
  return result;
}

void write_learning_curve(std::ostream& out, std::span<const CurvePoint> curve) {
  const std::size_t n = curve.empty() ? 0 : curve.front().eval_agent_revenue.size();
  out << "episode,train_revenue,eval_revenue,best_revenue,noise_sigma";
  for (std::size_t i = 0; i < n; ++i) out << ",agent" << i << "_revenue";
  for (std::size_t i = 0; i < n; ++i) out << ",agent" << i << "_spent_fraction";
  out << '\n';
  for (const auto& p : curve) {
    out << p.episode << ',' << format_number(p.train_revenue) << ',' << format_number(p.eval_revenue) << ','
        << format_number(p.best_revenue) << ',' << format_number(p.noise_sigma);
    for (double v : p.eval_agent_revenue) out << ',' << format_number(v);
    for (double v : p.eval_spent_fraction) out << ',' << format_number(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------- experiments

ExperimentData prepare_experiment(std::vector<AuctionRequest> train_log, std::vector<AuctionRequest> test_log,
                                  std::size_t n_merchant_clusters, std::size_t n_consumer_clusters,
                                  const AuctionConfig& config) {
  ExperimentData data;
  data.model = build_market_model(train_log, n_merchant_clusters, n_consumer_clusters, config);
  data.train = prepare_market(std::move(train_log), data.model, config);
  data.test = prepare_market(std::move(test_log), data.model, config);
  return data;
}

double default_reward_scale(const Market& train, const EpisodeConfig& config, std::size_t agent, RewardMode mode) {
  double revenue = train.reference_revenue;
  if (mode == RewardMode::kSelfInterest && agent < train.reference_cluster_revenue.size()) {
    revenue = train.reference_cluster_revenue[agent];
  }
  const double per_interval = revenue / static_cast<double>(config.steps_per_episode);
  return per_interval > 0.0 ? per_interval : 1.0;
}

std::vector<AgentConfig> resolve_reward_scales(std::vector<AgentConfig> agents, const Market& train,
                                               const EpisodeConfig& config) {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (!(agents[i].reward_scale > 0.0)) {
      agents[i].reward_scale = default_reward_scale(train, config, i, agents[i].reward_mode);
    }
  }
  return agents;
}

ExperimentResult run_experiment(const ExperimentData& data, std::vector<AgentConfig> agents,
                                const EpisodeConfig& config, const TrainingOptions& options) {
  AgentTeam team(data.model.layout, resolve_reward_scales(std::move(agents), data.train, config), config.seed);
  EpisodeConfig run_config = config;
  if (!team.any_learner()) run_config.episodes = 0;

  ExperimentResult result{run_training(data.train, data.model, std::move(team), run_config, options), {}, {}};
  AgentTeam best(result.training.best);
  EpisodeOptions eval;
  eval.monitor = options.monitor;
  result.test = run_episode(data.test, data.model, best, config, eval);
  result.test_metrics = compute_metrics(result.test);
  return result;
}

SweepStats summarize_runs(std::vector<double> values) {
  SweepStats s;
  s.values = std::move(values);
  if (s.values.empty()) return s;
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::vector<ClusterSweepRow> sweep_cluster_count(const std::vector<AuctionRequest>& train_log,
                                                 const std::vector<AuctionRequest>& test_log,
                                                 std::span<const std::size_t> cluster_counts,
                                                 const AgentConfig& agent, const EpisodeConfig& config,
                                                 std::span<const std::uint64_t> seeds) {
  std::vector<ClusterSweepRow> rows;
  for (std::size_t n : cluster_counts) {
    const ExperimentData data = prepare_experiment(train_log, test_log, n, n, config.auction());
    std::vector<double> revenue;
    for (std::uint64_t seed : seeds) {
      EpisodeConfig c = config;
      c.seed = seed;
      revenue.push_back(run_experiment(data, std::vector<AgentConfig>(n, agent), c).test.total_revenue);
    }
    rows.push_back({n, summarize_runs(std::move(revenue))});
  }
  return rows;
}

std::vector<BudgetSweepRow> sweep_budget_ratio(const ExperimentData& data, std::span<const double> fractions,
                                               const AgentConfig& agent, const EpisodeConfig& config,
                                               std::span<const std::uint64_t> seeds) {
  const std::size_t N = data.model.layout.n_merchant_clusters;
  AgentConfig manual = agent;
  manual.algorithm = Algorithm::kManual;
  std::vector<BudgetSweepRow> rows;
  for (double f : fractions) {
    EpisodeConfig c = config;
    c.budget_fraction = f;
    BudgetSweepRow row;
    row.fraction = f;
    const ExperimentResult m = run_experiment(data, std::vector<AgentConfig>(N, manual), c);
    row.manual_revenue = m.test.total_revenue;
    const double budget = std::accumulate(m.test.agent_budget.begin(), m.test.agent_budget.end(), 0.0);
    const double spent = std::accumulate(m.test.agent_spent.begin(), m.test.agent_spent.end(), 0.0);
    row.manual_spend_fraction = budget > 0.0 ? spent / budget : 0.0;
    std::vector<double> learned;
    for (std::uint64_t seed : seeds) {
      c.seed = seed;
      learned.push_back(run_experiment(data, std::vector<AgentConfig>(N, agent), c).test.total_revenue);
    }
    row.learned_revenue = summarize_runs(std::move(learned));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dcmab
