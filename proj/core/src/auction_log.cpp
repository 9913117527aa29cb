#include "dcmab/auction_log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string_view>
#include <unordered_set>

namespace dcmab {

namespace {

constexpr std::string_view kHeader =
    "#dcmab-auction-log\tversion=1\tcandidate=merchant_id,base_bid,pctr,pcvr,pcvr_avg,ppb";

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

double draw_beta(std::mt19937_64& rng, double mean, double concentration) {
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : mean;
}

void append_fixed(std::string& out, double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  out.append(buf, res.ptr);
}

template <typename T>
void append_int(std::string& out, T v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::runtime_error("auction log line " + std::to_string(line) + ": " + what);
}

/// Splits on `sep` into views of `text`.
std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const char* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, value);
  if (field.empty() || res.ec != std::errc{} || res.ptr != end) {
    fail(line, std::string("bad ") + name + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (merchants == 0 || consumers == 0) throw std::invalid_argument("generator needs merchants and consumers");
  if (candidates_per_request == 0 || candidates_per_request > merchants) {
    throw std::invalid_argument("candidates per request must be in [1, merchants]");
  }
  if (duration_seconds == 0) throw std::invalid_argument("duration must be positive");
  const double sigmas[] = {base_bid_log_sigma, ppb_log_sigma, quality_log_sigma, consumer_activity_log_sigma,
                           consumer_propensity_log_sigma};
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("log-normal sigma must be non-negative");
  }
  if (!(popularity_exponent >= 0.0)) throw std::invalid_argument("popularity exponent must be non-negative");
  if (!(mean_pctr > 0.0 && mean_pctr < 1.0)) throw std::invalid_argument("mean pctr must be in (0, 1)");
  if (!(mean_pcvr > 0.0 && mean_pcvr < 1.0)) throw std::invalid_argument("mean pcvr must be in (0, 1)");
  if (!(beta_concentration > 0.0)) throw std::invalid_argument("beta concentration must be positive");
  if (!(bid_value_correlation >= -1.0 && bid_value_correlation <= 1.0)) {
    throw std::invalid_argument("bid/value correlation must be in [-1, 1]");
  }
  if (!(conversion_trend >= 0.0 && conversion_trend < 1.0)) {
    throw std::invalid_argument("conversion trend must be in [0, 1)");
  }
}

double quantize_currency(double v) { return round_to(v, 1e4); }
double quantize_probability(double v) { return round_to(v, 1e6); }

void validate_request(const AuctionRequest& request) {
  if (request.candidates.empty()) throw std::invalid_argument("request has no candidates");
  std::unordered_set<MerchantId> seen;
  for (const CandidateAd& c : request.candidates) {
    if (!(c.pctr >= 0.0 && c.pctr <= 1.0)) throw std::invalid_argument("pctr outside [0, 1]");
    if (!(c.pcvr >= 0.0 && c.pcvr <= 1.0)) throw std::invalid_argument("pcvr outside [0, 1]");
    if (!(c.pcvr_avg > 0.0 && c.pcvr_avg <= 1.0)) throw std::invalid_argument("pcvr_avg outside (0, 1]");
    if (!(c.base_bid > 0.0) || !std::isfinite(c.base_bid)) throw std::invalid_argument("base bid must be positive");
    if (!(c.ppb >= 0.0) || !std::isfinite(c.ppb)) throw std::invalid_argument("ppb must be non-negative");
    if (!seen.insert(c.merchant_id).second) throw std::invalid_argument("merchant listed twice in one request");
  }
}

std::vector<AuctionRequest> generate_synthetic_log(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();

  // Population.
  std::mt19937_64 pop(config.population_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t M = config.merchants;
  std::vector<double> quality(M), base_bid(M), ppb(M), popularity(M);
  const double rho = config.bid_value_correlation;
  for (std::size_t m = 0; m < M; ++m) {
    const double zq = normal(pop);
    const double zb = rho * zq + std::sqrt(1.0 - rho * rho) * normal(pop);
    quality[m] = std::exp(config.quality_log_sigma * zq);
    base_bid[m] = std::max(0.01, quantize_currency(std::exp(config.base_bid_log_mean + config.base_bid_log_sigma * zb)));
    ppb[m] = quantize_currency(std::exp(config.ppb_log_mean + config.ppb_log_sigma * normal(pop)));
  }
  std::vector<std::size_t> rank(M);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), pop);
  for (std::size_t m = 0; m < M; ++m) {
    popularity[m] = std::pow(static_cast<double>(rank[m] + 1), -config.popularity_exponent);
  }
  const std::size_t C = config.consumers;
  std::vector<double> activity(C), propensity(C);
  for (std::size_t c = 0; c < C; ++c) {
    activity[c] = std::exp(config.consumer_activity_log_sigma * normal(pop));
    const double s = config.consumer_propensity_log_sigma;
    propensity[c] = std::exp(s * normal(pop) - 0.5 * s * s);
  }

  // Requests.
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> timestamps(config.requests);
  std::uniform_int_distribution<std::uint32_t> when(0, config.duration_seconds - 1);
  for (auto& t : timestamps) t = when(rng);
  std::sort(timestamps.begin(), timestamps.end());

  std::discrete_distribution<std::size_t> pick_consumer(activity.begin(), activity.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_c = config.candidates_per_request;
  std::vector<std::pair<double, std::size_t>> keys(M);

  std::vector<AuctionRequest> log(config.requests);
  std::vector<double> pcvr_sum(M, 0.0);
  std::vector<std::size_t> pcvr_count(M, 0);
  for (std::size_t r = 0; r < config.requests; ++r) {
    AuctionRequest& req = log[r];
    req.request_id = r + 1;
    const std::size_t c = pick_consumer(rng);
    req.consumer_id = static_cast<ConsumerId>(c);
    req.timestamp = timestamps[r];
    const double phase = static_cast<double>(req.timestamp) / static_cast<double>(config.duration_seconds);
    const double trend = 1.0 + config.conversion_trend * (2.0 * phase - 1.0);

    // Weighted sampling without replacement (exponential-key method).
    for (std::size_t m = 0; m < M; ++m) {
      const double u = std::max(unit(rng), 1e-300);
      keys[m] = {std::log(u) / popularity[m], m};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_c), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });

    req.candidates.reserve(n_c);
    for (std::size_t k = 0; k < n_c; ++k) {
      const std::size_t m = keys[k].second;
      CandidateAd ad;
      ad.merchant_id = static_cast<MerchantId>(m);
      ad.base_bid = base_bid[m];
      ad.ppb = ppb[m];
      const double q = std::sqrt(quality[m]);
      const double ctr_mean = std::clamp(config.mean_pctr * q, 1e-4, 0.5);
      const double cvr_mean = std::clamp(config.mean_pcvr * q * propensity[c] * trend, 1e-4, 0.9);
      ad.pctr = std::clamp(quantize_probability(draw_beta(rng, ctr_mean, config.beta_concentration)), 1e-6, 1.0);
      ad.pcvr = std::clamp(quantize_probability(draw_beta(rng, cvr_mean, config.beta_concentration)), 0.0, 1.0);
      pcvr_sum[m] += ad.pcvr;
      ++pcvr_count[m];
      req.candidates.push_back(ad);
    }
  }

  std::vector<double> pcvr_avg(M, 1.0);
  for (std::size_t m = 0; m < M; ++m) {
    if (pcvr_count[m] > 0) {
      pcvr_avg[m] = std::clamp(quantize_probability(pcvr_sum[m] / static_cast<double>(pcvr_count[m])), 1e-6, 1.0);
    }
  }
  for (auto& req : log) {
    for (auto& ad : req.candidates) ad.pcvr_avg = pcvr_avg[ad.merchant_id];
  }
  return log;
}

LogWriter::LogWriter(std::ostream& out) : out_(out) { out_ << kHeader << '\n'; }

void LogWriter::write(const AuctionRequest& request) {
  line_.clear();
  append_int(line_, request.request_id);
  line_ += '\t';
  append_int(line_, request.consumer_id);
  line_ += '\t';
  append_int(line_, request.timestamp);
  line_ += '\t';
  append_int(line_, request.candidates.size());
  for (const CandidateAd& c : request.candidates) {
    line_ += '\t';
    append_int(line_, c.merchant_id);
    line_ += ',';
    append_fixed(line_, c.base_bid, kCurrencyDigits);
    line_ += ',';
    append_fixed(line_, c.pctr, kProbabilityDigits);
    line_ += ',';
    append_fixed(line_, c.pcvr, kProbabilityDigits);
    line_ += ',';
    append_fixed(line_, c.pcvr_avg, kProbabilityDigits);
    line_ += ',';
    append_fixed(line_, c.ppb, kCurrencyDigits);
  }
  line_ += '\n';
  out_ << line_;
  if (!out_) throw std::runtime_error("auction log write failed");
}

LogReader::LogReader(std::istream& in) : in_(in) {
  if (!std::getline(in_, line_)) throw std::runtime_error("auction log is empty (missing header)");
  ++line_number_;
  if (in_.eof()) fail(line_number_, "truncated header");
  if (line_ != kHeader) {
    if (line_.rfind("#dcmab-auction-log", 0) == 0) fail(line_number_, "unsupported log version");
    fail(line_number_, "not an auction log header");
  }
}

std::optional<AuctionRequest> LogReader::next() {
  if (!std::getline(in_, line_)) {
    if (in_.bad()) throw std::runtime_error("auction log read failed");
    return std::nullopt;
  }
  ++line_number_;
  if (in_.eof()) fail(line_number_, "truncated record (no trailing newline)");
  const auto fields = split(line_, '\t');
  if (fields.size() < 5) fail(line_number_, "truncated record (too few fields)");

  AuctionRequest req;
  req.request_id = parse_number<RequestId>(fields[0], line_number_, "request_id");
  req.consumer_id = parse_number<ConsumerId>(fields[1], line_number_, "consumer_id");
  req.timestamp = parse_number<std::uint32_t>(fields[2], line_number_, "timestamp");
  const auto n = parse_number<std::size_t>(fields[3], line_number_, "candidate count");
  if (fields.size() != n + 4) {
    fail(line_number_, "expected " + std::to_string(n) + " candidates, found " + std::to_string(fields.size() - 4));
  }
  if (req.timestamp < last_timestamp_) fail(line_number_, "timestamps must be non-decreasing");
  last_timestamp_ = req.timestamp;

  req.candidates.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto cols = split(fields[4 + k], ',');
    if (cols.size() != 6) fail(line_number_, "candidate " + std::to_string(k) + " needs 6 columns");
    CandidateAd ad;
    ad.merchant_id = parse_number<MerchantId>(cols[0], line_number_, "merchant_id");
    ad.base_bid = parse_number<double>(cols[1], line_number_, "base_bid");
    ad.pctr = parse_number<double>(cols[2], line_number_, "pctr");
    ad.pcvr = parse_number<double>(cols[3], line_number_, "pcvr");
    ad.pcvr_avg = parse_number<double>(cols[4], line_number_, "pcvr_avg");
    ad.ppb = parse_number<double>(cols[5], line_number_, "ppb");
    req.candidates.push_back(ad);
  }
  try {
    validate_request(req);
  } catch (const std::invalid_argument& e) {
    fail(line_number_, e.what());
  }
  return req;
}

void write_log(std::ostream& out, std::span<const AuctionRequest> requests) {
  LogWriter writer(out);
  for (const auto& r : requests) writer.write(r);
}

void write_log(const std::filesystem::path& path, std::span<const AuctionRequest> requests) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_log(out, requests);
}

std::vector<AuctionRequest> read_log(std::istream& in) {
  LogReader reader(in);
  std::vector<AuctionRequest> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::vector<AuctionRequest> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_log(in);
}

}  // namespace dcmab
