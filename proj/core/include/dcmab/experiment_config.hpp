#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcmab/agents.hpp"
#include "dcmab/auction_log.hpp"
#include "dcmab/simulator.hpp"

namespace dcmab {

/// Everything a run needs, read from a flat `key = value` file. Agent keys
/// set the default for every agent; `agentK.<key>` overrides agent K only.
struct ExperimentConfig {
  GeneratorConfig generator;
  std::uint64_t train_log_seed = 11;
  std::uint64_t test_log_seed = 12;
  std::optional<std::filesystem::path> train_log;  // read instead of generating
  std::optional<std::filesystem::path> test_log;
  std::size_t merchant_clusters = 3;
  std::size_t consumer_clusters = 3;
  EpisodeConfig episode;
  AgentConfig agent;  // reward_scale <= 0 selects the default scale
  std::map<std::size_t, std::map<std::string, std::string>> agent_overrides;

  ExperimentConfig();

  /// Applies one key. Throws std::invalid_argument for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  [[nodiscard]] std::vector<AgentConfig> agent_configs() const;
  void validate() const;
};

[[nodiscard]] ExperimentConfig parse_config(std::istream& in);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
/// Writes every key with its current value, readable by parse_config.
void write_config(std::ostream& out, const ExperimentConfig& config);

[[nodiscard]] std::string to_string(RewardMode mode);
[[nodiscard]] RewardMode reward_mode_from_string(const std::string& name);

/// Loads or generates the train and test logs named by the config.
[[nodiscard]] std::vector<AuctionRequest> load_train_log(const ExperimentConfig& config);
[[nodiscard]] std::vector<AuctionRequest> load_test_log(const ExperimentConfig& config);

}  // namespace dcmab
