#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcmab {

/// Raw sums for one agent cluster over one evaluation.
struct ClusterTotals {
  double revenue = 0.0;
  double cost = 0.0;
  double click = 0.0;  // sum of pctr over won impressions
  double budget = 0.0;
  double spent = 0.0;  // deducted from budget, excluding overspend
};

struct ClusterMetrics {
  double revenue = 0.0;
  double cost = 0.0;
  double click = 0.0;
  std::optional<double> roi;  // revenue / cost
  std::optional<double> cpa;  // cost / click
  std::optional<double> spend_fraction;  // spent / budget
};

struct MetricsReport {
  std::vector<ClusterMetrics> clusters;
  ClusterMetrics total;
};

[[nodiscard]] ClusterMetrics summarize(const ClusterTotals& totals);
[[nodiscard]] MetricsReport compute_metrics(std::span<const ClusterTotals> clusters);

enum class ParetoOrder { kADominates, kBDominates, kIncomparable };

[[nodiscard]] std::string to_string(ParetoOrder order);

/// A dominates B when no cluster revenue is lower and at least one is higher.
[[nodiscard]] ParetoOrder pareto_compare(const MetricsReport& a, const MetricsReport& b);
[[nodiscard]] ParetoOrder pareto_compare(std::span<const double> a, std::span<const double> b);

/// Header of the metrics table.
inline constexpr const char* kMetricsCsvHeader = "experiment,agent,revenue,cost,roi,cpa,click,spend_fraction";

/// Shortest decimal that reads back to the same double.
[[nodiscard]] std::string format_number(double v);

/// Writes one row per cluster and one `total` row; absent values are empty.
void write_metrics_rows(std::ostream& out, const std::string& experiment, const MetricsReport& report);
void write_metrics_csv(std::ostream& out, const std::string& experiment, const MetricsReport& report);

}  // namespace dcmab
