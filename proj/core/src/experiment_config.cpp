#include "dcmab/experiment_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "dcmab/metrics.hpp"

namespace dcmab {

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::kSelfInterest: return "self_interest";
    case RewardMode::kCoordinated: return "coordinated";
    case RewardMode::kNone: return "none";
  }
  return "none";
}

RewardMode reward_mode_from_string(const std::string& name) {
  if (name == "self_interest") return RewardMode::kSelfInterest;
  if (name == "coordinated") return RewardMode::kCoordinated;
  if (name == "none") return RewardMode::kNone;
  throw std::invalid_argument("unknown reward mode: " + name);
}

namespace {

template <typename T>
T parse_int(const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::string show(double v) { return format_number(v); }
std::string show(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string show(T v) requires std::is_integral_v<T> { return std::to_string(v); }

template <typename T>
struct Field {
  const char* name;
  std::function<void(T&, const std::string&)> set;
  std::function<std::string(const T&)> get;
};

#define DCMAB_FIELD(Type, key, member, parser) \
  Field<Type> { key, [](Type& c, const std::string& v) { c.member = parser(v); }, [](const Type& c) { return show(c.member); } }

const std::vector<Field<GeneratorConfig>>& generator_fields() {
  static const std::vector<Field<GeneratorConfig>> fields = {
      DCMAB_FIELD(GeneratorConfig, "merchants", merchants, parse_int<std::size_t>),
      DCMAB_FIELD(GeneratorConfig, "consumers", consumers, parse_int<std::size_t>),
      DCMAB_FIELD(GeneratorConfig, "requests", requests, parse_int<std::size_t>),
      DCMAB_FIELD(GeneratorConfig, "candidates_per_request", candidates_per_request, parse_int<std::size_t>),
      DCMAB_FIELD(GeneratorConfig, "duration_seconds", duration_seconds, parse_int<std::uint32_t>),
      DCMAB_FIELD(GeneratorConfig, "population_seed", population_seed, parse_int<std::uint64_t>),
      DCMAB_FIELD(GeneratorConfig, "base_bid_log_mean", base_bid_log_mean, parse_double),
      DCMAB_FIELD(GeneratorConfig, "base_bid_log_sigma", base_bid_log_sigma, parse_double),
      DCMAB_FIELD(GeneratorConfig, "ppb_log_mean", ppb_log_mean, parse_double),
      DCMAB_FIELD(GeneratorConfig, "ppb_log_sigma", ppb_log_sigma, parse_double),
      DCMAB_FIELD(GeneratorConfig, "popularity_exponent", popularity_exponent, parse_double),
      DCMAB_FIELD(GeneratorConfig, "quality_log_sigma", quality_log_sigma, parse_double),
      DCMAB_FIELD(GeneratorConfig, "consumer_activity_log_sigma", consumer_activity_log_sigma, parse_double),
      DCMAB_FIELD(GeneratorConfig, "consumer_propensity_log_sigma", consumer_propensity_log_sigma, parse_double),
      DCMAB_FIELD(GeneratorConfig, "mean_pctr", mean_pctr, parse_double),
      DCMAB_FIELD(GeneratorConfig, "mean_pcvr", mean_pcvr, parse_double),
      DCMAB_FIELD(GeneratorConfig, "beta_concentration", beta_concentration, parse_double),
      DCMAB_FIELD(GeneratorConfig, "bid_value_correlation", bid_value_correlation, parse_double),
      DCMAB_FIELD(GeneratorConfig, "conversion_trend", conversion_trend, parse_double),
  };
  return fields;
}

const std::vector<Field<EpisodeConfig>>& episode_fields() {
  static const std::vector<Field<EpisodeConfig>> fields = {
      DCMAB_FIELD(EpisodeConfig, "steps_per_episode", steps_per_episode, parse_int<std::size_t>),
      DCMAB_FIELD(EpisodeConfig, "interval_seconds", interval_seconds, parse_double),
      DCMAB_FIELD(EpisodeConfig, "episodes", episodes, parse_int<std::size_t>),
      DCMAB_FIELD(EpisodeConfig, "patience", patience, parse_int<std::size_t>),
      DCMAB_FIELD(EpisodeConfig, "stop_on_convergence", stop_on_convergence, parse_bool),
      DCMAB_FIELD(EpisodeConfig, "slots", slots, parse_int<std::size_t>),
      DCMAB_FIELD(EpisodeConfig, "reserve_price", reserve_price, parse_double),
      DCMAB_FIELD(EpisodeConfig, "workers", worker_count, parse_int<std::size_t>),
      DCMAB_FIELD(EpisodeConfig, "budget_fraction", budget_fraction, parse_double),
      DCMAB_FIELD(EpisodeConfig, "seed", seed, parse_int<std::uint64_t>),
      DCMAB_FIELD(EpisodeConfig, "async_workers", async_workers, parse_bool),
  };
  return fields;
}

const std::vector<Field<AgentConfig>>& agent_fields() {
  static const std::vector<Field<AgentConfig>> fields = {
      {"algorithm", [](AgentConfig& c, const std::string& v) { c.algorithm = algorithm_from_string(v); },
       [](const AgentConfig& c) { return to_string(c.algorithm); }},
      {"reward_mode", [](AgentConfig& c, const std::string& v) { c.reward_mode = reward_mode_from_string(v); },
       [](const AgentConfig& c) { return to_string(c.reward_mode); }},
      DCMAB_FIELD(AgentConfig, "gamma", gamma, parse_double),
      DCMAB_FIELD(AgentConfig, "minibatch_size", minibatch_size, parse_int<std::size_t>),
      DCMAB_FIELD(AgentConfig, "replay_capacity", replay_capacity, parse_int<std::size_t>),
      {"noise",
       [](AgentConfig& c, const std::string& v) {
         if (v == "gaussian") {
           c.noise.mode = NoiseMode::kGaussian;
         } else if (v == "ou") {
           c.noise.mode = NoiseMode::kOrnsteinUhlenbeck;
         } else {
           throw std::invalid_argument("noise must be gaussian or ou, got '" + v + "'");
         }
       },
       [](const AgentConfig& c) { return std::string(c.noise.mode == NoiseMode::kGaussian ? "gaussian" : "ou"); }},
      DCMAB_FIELD(AgentConfig, "noise_sigma", noise.sigma, parse_double),
      DCMAB_FIELD(AgentConfig, "noise_theta", noise.theta, parse_double),
      DCMAB_FIELD(AgentConfig, "noise_dt", noise.dt, parse_double),
      DCMAB_FIELD(AgentConfig, "noise_decay", noise.decay, parse_double),
      DCMAB_FIELD(AgentConfig, "range", range, parse_double),
      DCMAB_FIELD(AgentConfig, "actor_learning_rate", actor_learning_rate, parse_double),
      DCMAB_FIELD(AgentConfig, "critic_learning_rate", critic_learning_rate, parse_double),
      DCMAB_FIELD(AgentConfig, "tau", tau, parse_double),
      DCMAB_FIELD(AgentConfig, "actor_hidden", actor_hidden, parse_int<std::size_t>),
      DCMAB_FIELD(AgentConfig, "critic_hidden", critic_hidden, parse_int<std::size_t>),
      DCMAB_FIELD(AgentConfig, "discounted_q_loss", discounted_q_loss, parse_bool),
      DCMAB_FIELD(AgentConfig, "bandit_candidates", bandit_candidates, parse_int<std::size_t>),
      DCMAB_FIELD(AgentConfig, "bandit_epsilon", bandit_epsilon, parse_double),
      DCMAB_FIELD(AgentConfig, "a2c_sigma", a2c_sigma, parse_double),
      DCMAB_FIELD(AgentConfig, "updates_per_step", updates_per_step, parse_int<std::size_t>),
      DCMAB_FIELD(AgentConfig, "reward_scale", reward_scale, parse_double),
  };
  return fields;
}

#undef DCMAB_FIELD

template <typename T>
bool apply_field(const std::vector<Field<T>>& fields, T& target, const std::string& key, const std::string& value) {
  const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return key == f.name; });
  if (it == fields.end()) return false;
  it->set(target, value);
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig::ExperimentConfig() { agent.reward_scale = 0.0; }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "train_log") {
    train_log = value;
  } else if (key == "test_log") {
    test_log = value;
  } else if (key == "train_log_seed") {
    train_log_seed = parse_int<std::uint64_t>(value);
  } else if (key == "test_log_seed") {
    test_log_seed = parse_int<std::uint64_t>(value);
  } else if (key == "merchant_clusters") {
    merchant_clusters = parse_int<std::size_t>(value);
  } else if (key == "consumer_clusters") {
    consumer_clusters = parse_int<std::size_t>(value);
  } else if (key.rfind("agent", 0) == 0 && key.find('.') != std::string::npos) {
    const auto dot = key.find('.');
    const std::size_t index = parse_int<std::size_t>(key.substr(5, dot - 5));
    const std::string field = key.substr(dot + 1);
    AgentConfig probe;
    if (!apply_field(agent_fields(), probe, field, value)) throw std::invalid_argument("unknown agent key: " + field);
    agent_overrides[index][field] = value;
  } else if (!apply_field(generator_fields(), generator, key, value) &&
             !apply_field(episode_fields(), episode, key, value) && !apply_field(agent_fields(), agent, key, value)) {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

std::vector<AgentConfig> ExperimentConfig::agent_configs() const {
  std::vector<AgentConfig> out(merchant_clusters, agent);
  for (const auto& [index, fields] : agent_overrides) {
    if (index >= merchant_clusters) {
      throw std::invalid_argument("override for agent " + std::to_string(index) + " but only " +
                                  std::to_string(merchant_clusters) + " agents");
    }
    for (const auto& [k, v] : fields) apply_field(agent_fields(), out[index], k, v);
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (!train_log || !test_log) generator.validate();
  if (merchant_clusters == 0 || consumer_clusters == 0) throw std::invalid_argument("cluster counts must be positive");
  episode.validate();
  for (AgentConfig a : agent_configs()) {
    if (!(a.reward_scale > 0.0)) a.reward_scale = 1.0;
    a.validate();
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  ExperimentConfig config = parse_config(in);
  // Log paths are relative to the config file.
  const auto base = path.parent_path();
  if (config.train_log && config.train_log->is_relative()) config.train_log = base / *config.train_log;
  if (config.test_log && config.test_log->is_relative()) config.test_log = base / *config.test_log;
  return config;
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  out << "# generator\n";
  for (const auto& f : generator_fields()) out << f.name << " = " << f.get(config.generator) << '\n';
  out << "train_log_seed = " << config.train_log_seed << '\n';
  out << "test_log_seed = " << config.test_log_seed << '\n';
  if (config.train_log) out << "train_log = " << config.train_log->string() << '\n';
  if (config.test_log) out << "test_log = " << config.test_log->string() << '\n';
  out << "# market\n";
  out << "merchant_clusters = " << config.merchant_clusters << '\n';
  out << "consumer_clusters = " << config.consumer_clusters << '\n';
  out << "# episode\n";
  for (const auto& f : episode_fields()) out << f.name << " = " << f.get(config.episode) << '\n';
  out << "# agents\n";
  for (const auto& f : agent_fields()) out << f.name << " = " << f.get(config.agent) << '\n';
  for (const auto& [index, fields] : config.agent_overrides) {
    for (const auto& [k, v] : fields) out << "agent" << index << '.' << k << " = " << v << '\n';
  }
}

std::vector<AuctionRequest> load_train_log(const ExperimentConfig& config) {
  if (config.train_log) return read_log(*config.train_log);
  return generate_synthetic_log(config.generator, config.train_log_seed);
}

std::vector<AuctionRequest> load_test_log(const ExperimentConfig& config) {
  if (config.test_log) return read_log(*config.test_log);
  return generate_synthetic_log(config.generator, config.test_log_seed);
}

}  // namespace dcmab
