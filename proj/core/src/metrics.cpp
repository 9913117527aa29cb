#include "dcmab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace dcmab {

ClusterMetrics summarize(const ClusterTotals& t) {
  ClusterMetrics m;
  m.revenue = t.revenue;
  m.cost = t.cost;
  m.click = t.click;
  if (t.cost > 0.0) m.roi = t.revenue / t.cost;
  if (t.click > 0.0) m.cpa = t.cost / t.click;
  if (t.budget > 0.0 && std::isfinite(t.budget)) m.spend_fraction = t.spent / t.budget;
  return m;
}

MetricsReport compute_metrics(std::span<const ClusterTotals> clusters) {
  MetricsReport report;
  ClusterTotals sum;
  for (const ClusterTotals& c : clusters) {
    report.clusters.push_back(summarize(c));
    sum.revenue += c.revenue;
    sum.cost += c.cost;
    sum.click += c.click;
    sum.budget += c.budget;
    sum.spent += c.spent;
  }
  report.total = summarize(sum);
  return report;
}

std::string to_string(ParetoOrder order) {
  switch (order) {
    case ParetoOrder::kADominates: return "A_dominates";
    case ParetoOrder::kBDominates: return "B_dominates";
    case ParetoOrder::kIncomparable: return "incomparable";
  }
  return "incomparable";
}

ParetoOrder pareto_compare(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pareto_compare: cluster counts differ");
  bool a_better = false;
  bool b_better = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] > b[k]) a_better = true;
    if (b[k] > a[k]) b_better = true;
  }
  if (a_better && !b_better) return ParetoOrder::kADominates;
  if (b_better && !a_better) return ParetoOrder::kBDominates;
  return ParetoOrder::kIncomparable;
}

ParetoOrder pareto_compare(const MetricsReport& a, const MetricsReport& b) {
  std::vector<double> ra, rb;
  for (const auto& c : a.clusters) ra.push_back(c.revenue);
  for (const auto& c : b.clusters) rb.push_back(c.revenue);
  return pareto_compare(ra, rb);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

void write_row(std::ostream& out, const std::string& experiment, const std::string& agent, const ClusterMetrics& m) {
  out << experiment << ',' << agent << ',' << format_number(m.revenue) << ',' << format_number(m.cost) << ','
      << optional_field(m.roi) << ',' << optional_field(m.cpa) << ',' << format_number(m.click) << ','
      << optional_field(m.spend_fraction) << '\n';
}

}  // namespace

void write_metrics_rows(std::ostream& out, const std::string& experiment, const MetricsReport& report) {
  if (experiment.find_first_of(",\n") != std::string::npos) {
    throw std::invalid_argument("experiment name must not contain commas or newlines");
  }
  for (std::size_t i = 0; i < report.clusters.size(); ++i) {
    write_row(out, experiment, std::to_string(i), report.clusters[i]);
  }
  write_row(out, experiment, "total", report.total);
}

void write_metrics_csv(std::ostream& out, const std::string& experiment, const MetricsReport& report) {
  out << kMetricsCsvHeader << '\n';
  write_metrics_rows(out, experiment, report);
}

}  // namespace dcmab
