#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "dcmab/auction_log.hpp"
#include "dcmab/simulator.hpp"

namespace dcmab {
namespace {

GeneratorConfig small_generator(std::size_t requests = 500) {
  GeneratorConfig g;
  g.merchants = 60;
  g.consumers = 120;
  g.requests = requests;
  g.candidates_per_request = 8;
  return g;
}

std::string to_text(const std::vector<AuctionRequest>& log) {
  std::ostringstream out;
  write_log(out, log);
  return out.str();
}

std::string header_line() {
  std::ostringstream out;
  LogWriter w(out);
  return out.str();
}

std::string read_error(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)read_log(in);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return {};
}

TEST(Generator, ZeroRequestsWritesHeaderOnly) {
  const auto log = generate_synthetic_log(small_generator(0), 3);
  EXPECT_TRUE(log.empty());
  const std::string text = to_text(log);
  EXPECT_EQ(text, header_line());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST(Generator, SameSeedIsByteIdentical) {
  const auto a = to_text(generate_synthetic_log(small_generator(), 5));
  const auto b = to_text(generate_synthetic_log(small_generator(), 5));
  const auto c = to_text(generate_synthetic_log(small_generator(), 6));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Generator, RecordsAreValidAndOrdered) {
  const auto log = generate_synthetic_log(small_generator(), 5);
  ASSERT_EQ(log.size(), 500u);
  std::uint32_t last = 0;
  for (const auto& r : log) {
    EXPECT_NO_THROW(validate_request(r));
    EXPECT_GE(r.timestamp, last);
    EXPECT_LT(r.timestamp, small_generator().duration_seconds);
    EXPECT_EQ(r.candidates.size(), 8u);
    last = r.timestamp;
  }
}

TEST(Generator, RevenueIsConcentrated) {
  GeneratorConfig g;
  g.requests = 5000;
  const auto log = generate_synthetic_log(g, 11);
  const auto cal = calibrate(log, {});
  std::vector<double> rev;
  for (const auto& m : cal.merchants) rev.push_back(m.revenue);
  std::sort(rev.begin(), rev.end(), std::greater<>());
  const double total = std::accumulate(rev.begin(), rev.end(), 0.0);
  const auto top = static_cast<std::ptrdiff_t>(g.merchants / 10);
  const double head = std::accumulate(rev.begin(), rev.begin() + top, 0.0);
  EXPECT_GT(head, 0.5 * total);
}

TEST(LogIo, RoundTripIsExact) {
  const auto log = generate_synthetic_log(small_generator(), 8);
  const std::string text = to_text(log);
  std::istringstream in(text);
  const auto back = read_log(in);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    EXPECT_EQ(back[k].request_id, log[k].request_id);
    EXPECT_EQ(back[k].consumer_id, log[k].consumer_id);
    EXPECT_EQ(back[k].timestamp, log[k].timestamp);
    ASSERT_EQ(back[k].candidates.size(), log[k].candidates.size());
    for (std::size_t c = 0; c < log[k].candidates.size(); ++c) {
      const auto& x = back[k].candidates[c];
      const auto& y = log[k].candidates[c];
      EXPECT_EQ(x.merchant_id, y.merchant_id);
      EXPECT_EQ(x.base_bid, y.base_bid);
      EXPECT_EQ(x.pctr, y.pctr);
      EXPECT_EQ(x.pcvr, y.pcvr);
      EXPECT_EQ(x.pcvr_avg, y.pcvr_avg);
      EXPECT_EQ(x.ppb, y.ppb);
    }
  }
  EXPECT_EQ(to_text(back), text);
}

TEST(LogIo, StreamingReaderYieldsOneRecordAtATime) {
  const auto log = generate_synthetic_log(small_generator(50), 8);
  std::istringstream in(to_text(log));
  LogReader reader(in);
  std::size_t n = 0;
  while (auto r = reader.next()) {
    EXPECT_EQ(r->request_id, log[n].request_id);
    ++n;
    EXPECT_EQ(reader.line_number(), n + 1);
  }
  EXPECT_EQ(n, log.size());
}

TEST(LogIo, MalformedInputNamesTheLine) {
  const std::string h = header_line();
  const std::string good = "0\t1\t5\t1\t3,1.0000,0.100000,0.050000,0.050000,20.0000\n";

  EXPECT_NE(read_error(""), "");
  EXPECT_NE(read_error("not a log\n").find("line 1"), std::string::npos);
  EXPECT_NE(read_error("#dcmab-auction-log\tversion=9\n").find("version"), std::string::npos);

  // Missing trailing newline on the last record.
  std::string truncated = h + good + good.substr(0, good.size() - 1);
  EXPECT_NE(read_error(truncated).find("line 3: truncated"), std::string::npos);
  EXPECT_NE(read_error(h + "0\t1\t5\n").find("line 2: truncated"), std::string::npos);

  EXPECT_NE(read_error(h + good + "1\t1\tx\t1\t3,1,0.1,0.05,0.05,20\n").find("line 3"), std::string::npos);
  EXPECT_NE(read_error(h + "0\t1\t5\t2\t3,1,0.1,0.05,0.05,20\n").find("candidates"), std::string::npos);
  EXPECT_NE(read_error(h + "0\t1\t5\t1\t3,1,1.5,0.05,0.05,20\n").find("pctr"), std::string::npos);
  EXPECT_NE(read_error(h + "0\t1\t5\t1\t3,1,0.1,0.05,0.05\n").find("6 columns"), std::string::npos);
  EXPECT_NE(read_error(h + "0\t1\t9\t1\t3,1,0.1,0.05,0.05,20\n" + good).find("line 3: timestamps"),
            std::string::npos);
  EXPECT_EQ(read_error(h + good), "");
}

TEST(LogIo, QuantizationIsStable) {
  EXPECT_EQ(quantize_currency(1.23456), 1.2346);
  EXPECT_EQ(quantize_probability(0.1234567), 0.123457);
  EXPECT_EQ(quantize_currency(quantize_currency(3.14159)), quantize_currency(3.14159));
}

}  // namespace
}  // namespace dcmab
