#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace dcmab {

/// Per-entity statistics used to rank and balance clusters. `weight` is the
/// presence count for merchants and the request count for consumers.
struct EntityStats {
  std::uint32_t id = 0;
  double revenue = 0.0;
  double weight = 0.0;
};

struct ClusterAssignment {
  std::map<std::uint32_t, std::size_t> merchant_to_cluster;
  std::map<std::uint32_t, std::size_t> consumer_to_cluster;
  std::size_t n_merchant_clusters = 0;
  std::size_t n_consumer_clusters = 0;

  /// Entities never seen while clustering fall into the lowest-revenue cluster.
  [[nodiscard]] std::size_t merchant_cluster(std::uint32_t id) const;
  [[nodiscard]] std::size_t consumer_cluster(std::uint32_t id) const;
};

/// Greedy prefix cut over weights that are already in ranking order. Returns
/// the cluster index of each position; clusters are contiguous and non-empty.
[[nodiscard]] std::vector<std::size_t> greedy_prefix_partition(std::span<const double> weights,
                                                               std::size_t n_clusters);

/// Ranks entities by revenue (descending, ties by ascending id) and cuts the
/// ranking into `n_clusters` pieces of approximately equal total weight.
[[nodiscard]] std::map<std::uint32_t, std::size_t> cluster_by_revenue(std::vector<EntityStats> entities,
                                                                      std::size_t n_clusters);

[[nodiscard]] std::map<std::uint32_t, std::size_t> cluster_merchants_by_presence(
    std::span<const EntityStats> merchants, std::size_t n_clusters);
[[nodiscard]] std::map<std::uint32_t, std::size_t> cluster_consumers_by_requests(
    std::span<const EntityStats> consumers, std::size_t n_clusters);

/// Two-column `id<TAB>cluster` table with a header line.
void write_cluster_table(std::ostream& out, const std::map<std::uint32_t, std::size_t>& mapping);
[[nodiscard]] std::map<std::uint32_t, std::size_t> read_cluster_table(std::istream& in);

}  // namespace dcmab
