#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcmab/auction_log.hpp"
#include "dcmab/clustering.hpp"
#include "dcmab/experiment_config.hpp"
#include "dcmab/metrics.hpp"
#include "dcmab/simulator.hpp"

namespace fs = std::filesystem;
using namespace dcmab;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config (key = value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out_dir, "Output directory");
  cmd->add_option("-s,--seed", o.seed, "Override the training seed");
  cmd->add_option("-w,--workers", o.workers, "Override the worker count");
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig config = load_config(o.config_path);
  if (o.seed) config.episode.seed = *o.seed;
  if (o.workers) config.episode.worker_count = *o.workers;
  config.validate();
  fs::create_directories(o.out_dir);
  return config;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

ExperimentData load_data(const ExperimentConfig& config) {
  return prepare_experiment(load_train_log(config), load_test_log(config), config.merchant_clusters,
                            config.consumer_clusters, config.episode.auction());
}

std::vector<AgentConfig> resolved_agents(const ExperimentConfig& config, const ExperimentData& data) {
  return resolve_reward_scales(config.agent_configs(), data.train, config.episode);
}

int cmd_generate(const CommonOptions& o) {
  const ExperimentConfig config = load(o);
  const fs::path out(o.out_dir);
  write_log(out / "train.log", generate_synthetic_log(config.generator, config.train_log_seed));
  write_log(out / "test.log", generate_synthetic_log(config.generator, config.test_log_seed));
  std::cout << "wrote " << (out / "train.log").string() << " and " << (out / "test.log").string() << '\n';
  return 0;
}

int cmd_calibrate(const CommonOptions& o) {
  const ExperimentConfig config = load(o);
  const ExperimentData data = load_data(config);
  const fs::path out(o.out_dir);
  auto csv = open_out(out / "calibration.csv");
  csv << "log,requests,c_t,revenue,budget_fraction,budget_total\n";
  for (const auto& [name, market] : {std::pair{"train", &data.train}, std::pair{"test", &data.test}}) {
    const auto budgets = merchant_budgets(*market, config.episode.budget_fraction);
    double total = 0.0;
    for (double b : budgets) total += b;
    csv << name << ',' << market->requests.size() << ',' << format_number(market->c_t) << ','
        << format_number(market->reference_revenue) << ',' << format_number(config.episode.budget_fraction) << ','
        << format_number(total) << '\n';
    std::cout << name << ": C_T = " << format_number(market->c_t)
              << ", manual revenue = " << format_number(market->reference_revenue) << '\n';
  }
  auto merchants = open_out(out / "merchant_clusters.tsv");
  write_cluster_table(merchants, data.model.clusters.merchant_to_cluster);
  auto consumers = open_out(out / "consumer_clusters.tsv");
  write_cluster_table(consumers, data.model.clusters.consumer_to_cluster);
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig config = load(o);
  const ExperimentData data = load_data(config);
  const fs::path out(o.out_dir);
  {
    auto cfg = open_out(out / "config.txt");
    write_config(cfg, config);
  }
  TrainingOptions options;
  options.on_episode = [](const CurvePoint& p) {
    if (p.episode % 10 == 0) {
      std::cerr << "episode " << p.episode << " eval revenue " << format_number(p.eval_revenue) << " best "
                << format_number(p.best_revenue) << '\n';
    }
  };
  const ExperimentResult result = run_experiment(data, resolved_agents(config, data), config.episode, options);
  {
    auto curve = open_out(out / "learning_curve.csv");
    write_learning_curve(curve, result.training.curve);
  }
  result.training.best.save(out / "checkpoint");
  {
    auto metrics = open_out(out / "metrics.csv");
    write_metrics_csv(metrics, "train_best_on_test", result.test_metrics);
  }
  std::cout << "best episode " << result.training.best_episode << " (train revenue "
            << format_number(result.training.best_revenue) << "), test revenue "
            << format_number(result.test.total_revenue) << (result.training.converged ? ", converged" : "") << '\n';
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint, bool manual) {
  const ExperimentConfig config = load(o);
  const ExperimentData data = load_data(config);
  auto agents = resolved_agents(config, data);
  std::string experiment = "evaluate";
  if (manual) {
    for (auto& a : agents) a.algorithm = Algorithm::kManual;
    experiment = "manual";
  }
  AgentTeam team(data.model.layout, agents, config.episode.seed);
  if (!manual) team.load(checkpoint.empty() ? fs::path(o.out_dir) / "checkpoint" : fs::path(checkpoint));
  const EpisodeResult result = run_episode(data.test, data.model, team, config.episode);
  auto metrics = open_out(fs::path(o.out_dir) / "metrics.csv");
  write_metrics_csv(metrics, experiment, compute_metrics(result));
  std::cout << experiment << " test revenue " << format_number(result.total_revenue) << '\n';
  return 0;
}

int cmd_sweep_clusters(const CommonOptions& o, const std::vector<std::size_t>& counts,
                       const std::vector<std::uint64_t>& seeds) {
  const ExperimentConfig config = load(o);
  const auto train = load_train_log(config);
  const auto test = load_test_log(config);
  AgentConfig agent = config.agent;
  const auto rows = sweep_cluster_count(train, test, counts, agent, config.episode, seeds);
  auto csv = open_out(fs::path(o.out_dir) / "sweep_clusters.csv");
  csv << "clusters,seeds,mean_revenue,std_revenue,min_revenue,max_revenue\n";
  for (const auto& r : rows) {
    csv << r.clusters << ',' << r.test_revenue.values.size() << ',' << format_number(r.test_revenue.mean) << ','
        << format_number(r.test_revenue.stddev) << ',' << format_number(r.test_revenue.min) << ','
        << format_number(r.test_revenue.max) << '\n';
  }
  return 0;
}

int cmd_sweep_budget(const CommonOptions& o, const std::vector<double>& fractions,
                     const std::vector<std::uint64_t>& seeds) {
  const ExperimentConfig config = load(o);
  const ExperimentData data = load_data(config);
  const auto rows = sweep_budget_ratio(data, fractions, config.agent, config.episode, seeds);
  auto csv = open_out(fs::path(o.out_dir) / "sweep_budget.csv");
  csv << "budget_fraction,learned_mean_revenue,learned_std_revenue,manual_revenue,manual_spend_fraction\n";
  for (const auto& r : rows) {
    csv << format_number(r.fraction) << ',' << format_number(r.learned_revenue.mean) << ','
        << format_number(r.learned_revenue.stddev) << ',' << format_number(r.manual_revenue) << ','
        << format_number(r.manual_spend_fraction) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered multi-agent bidding simulator"};
  app.require_subcommand(1);

  CommonOptions o;
  auto* generate = app.add_subcommand("generate", "Write synthetic train and test logs");
  add_common(generate, o);
  auto* calibrate = app.add_subcommand("calibrate", "Measure C_T and write cluster tables");
  add_common(calibrate, o);
  auto* train = app.add_subcommand("train", "Train agents and evaluate the best snapshot on the test log");
  add_common(train, o);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test log");
  add_common(evaluate, o);
  std::string checkpoint;
  bool manual = false;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint directory (default <out>/checkpoint)");
  evaluate->add_flag("--manual", manual, "Evaluate manual bids instead of a checkpoint");

  std::vector<std::uint64_t> seeds{1, 2, 3};
  auto* sweep_clusters = app.add_subcommand("sweep-clusters", "Train across cluster counts (L = N)");
  add_common(sweep_clusters, o);
  std::vector<std::size_t> counts{1, 2, 3, 4, 5};
  sweep_clusters->add_option("--clusters", counts, "Cluster counts")->delimiter(',');
  sweep_clusters->add_option("--seeds", seeds, "Training seeds")->delimiter(',');
  auto* sweep_budget = app.add_subcommand("sweep-budget", "Train across budget fractions");
  add_common(sweep_budget, o);
  std::vector<double> fractions{1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0};
  sweep_budget->add_option("--fractions", fractions, "Budget fractions of C_T")->delimiter(',');
  sweep_budget->add_option("--seeds", seeds, "Training seeds")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  try {
    if (generate->parsed()) return cmd_generate(o);
    if (calibrate->parsed()) return cmd_calibrate(o);
    if (train->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o, checkpoint, manual);
    if (sweep_clusters->parsed()) return cmd_sweep_clusters(o, counts, seeds);
    if (sweep_budget->parsed()) return cmd_sweep_budget(o, fractions, seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
