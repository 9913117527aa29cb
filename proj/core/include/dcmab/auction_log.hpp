#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcmab/market.hpp"

namespace dcmab {

inline constexpr int kLogFormatVersion = 1;
inline constexpr int kCurrencyDigits = 4;
inline constexpr int kProbabilityDigits = 6;

/// Synthetic market parameters. Merchant and consumer attributes come from
/// `population_seed`; the request stream comes from the seed passed to the
/// generator, so train and test logs can share one population.
struct GeneratorConfig {
  std::size_t merchants = 300;
  std::size_t consumers = 1000;
  std::size_t requests = 20000;
  std::size_t candidates_per_request = 20;
  std::uint32_t duration_seconds = 10800;
  std::uint64_t population_seed = 7;

  double base_bid_log_mean = 0.0;  // log-normal base bid
  double base_bid_log_sigma = 0.5;
  double ppb_log_mean = 3.5;  // log-normal product price
  double ppb_log_sigma = 0.8;
  double popularity_exponent = 1.1;  // Zipf exponent of merchant recall weight
  double quality_log_sigma = 0.6;    // merchant quality, scales pctr and pcvr
  double consumer_activity_log_sigma = 1.0;
  double consumer_propensity_log_sigma = 0.4;  // consumer-level pcvr multiplier
  double mean_pctr = 0.03;
  double mean_pcvr = 0.05;
  double beta_concentration = 20.0;  // pctr/pcvr beta draws around their means
  double bid_value_correlation = 0.5;  // how much base bid follows merchant quality
  double conversion_trend = 0.3;  // pcvr multiplier ramps from 1-trend to 1+trend over the day

  void validate() const;
};

/// Rounds to the stored number of fractional digits.
[[nodiscard]] double quantize_currency(double v);
[[nodiscard]] double quantize_probability(double v);

/// Checks one request against the record invariants. Throws on violation.
void validate_request(const AuctionRequest& request);

[[nodiscard]] std::vector<AuctionRequest> generate_synthetic_log(const GeneratorConfig& config, std::uint64_t seed);

/// Line-oriented log writer. The header is written on construction.
class LogWriter {
 public:
  explicit LogWriter(std::ostream& out);
  void write(const AuctionRequest& request);

 private:
  std::ostream& out_;
  std::string line_;
};

/// Streaming reader: one request in memory at a time. Malformed input throws
/// std::runtime_error naming the offending line.
class LogReader {
 public:
  explicit LogReader(std::istream& in);
  [[nodiscard]] std::optional<AuctionRequest> next();
  [[nodiscard]] std::size_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t line_number_ = 0;
  std::uint32_t last_timestamp_ = 0;
};

void write_log(std::ostream& out, std::span<const AuctionRequest> requests);
void write_log(const std::filesystem::path& path, std::span<const AuctionRequest> requests);
[[nodiscard]] std::vector<AuctionRequest> read_log(std::istream& in);
[[nodiscard]] std::vector<AuctionRequest> read_log(const std::filesystem::path& path);

}  // namespace dcmab
