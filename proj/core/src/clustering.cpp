#include "dcmab/clustering.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dcmab {

std::size_t ClusterAssignment::merchant_cluster(std::uint32_t id) const {
  auto it = merchant_to_cluster.find(id);
  if (it != merchant_to_cluster.end()) return it->second;
  if (n_merchant_clusters == 0) throw std::logic_error("empty merchant clustering");
  return n_merchant_clusters - 1;
}

std::size_t ClusterAssignment::consumer_cluster(std::uint32_t id) const {
  auto it = consumer_to_cluster.find(id);
  if (it != consumer_to_cluster.end()) return it->second;
  if (n_consumer_clusters == 0) throw std::logic_error("empty consumer clustering");
  return n_consumer_clusters - 1;
}

std::vector<std::size_t> greedy_prefix_partition(std::span<const double> weights, std::size_t n_clusters) {
  if (n_clusters == 0) throw std::invalid_argument("cluster count must be positive");
  if (n_clusters > weights.size()) throw std::invalid_argument("too many clusters");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const std::size_t n = weights.size();

  std::vector<std::size_t> labels(n, 0);
  std::size_t cluster = 0;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    labels[k] = cluster;
    cumulative += weights[k];
    if (cluster + 1 == n_clusters) continue;
    const double threshold = total * static_cast<double>(cluster + 1) / static_cast<double>(n_clusters);
    const std::size_t entities_left = n - k - 1;
    const std::size_t clusters_left = n_clusters - cluster - 1;
    // Cut once the quota is met, or when every remaining entity is needed to
    // keep the remaining clusters non-empty.
    if (cumulative >= threshold || entities_left == clusters_left) ++cluster;
  }
  return labels;
}

std::map<std::uint32_t, std::size_t> cluster_by_revenue(std::vector<EntityStats> entities,
                                                         std::size_t n_clusters) {
  std::sort(entities.begin(), entities.end(), [](const EntityStats& a, const EntityStats& b) {
    if (a.revenue != b.revenue) return a.revenue > b.revenue;
    return a.id < b.id;
  });
  for (std::size_t k = 1; k < entities.size(); ++k) {
    if (entities[k].id == entities[k - 1].id) throw std::invalid_argument("duplicate entity id");
  }
  std::vector<double> weights;
  weights.reserve(entities.size());
  for (const auto& e : entities) weights.push_back(e.weight);
  const auto labels = greedy_prefix_partition(weights, n_clusters);

  std::map<std::uint32_t, std::size_t> mapping;
  for (std::size_t k = 0; k < entities.size(); ++k) mapping.emplace(entities[k].id, labels[k]);
  return mapping;
}

std::map<std::uint32_t, std::size_t> cluster_merchants_by_presence(std::span<const EntityStats> merchants,
                                                                   std::size_t n_clusters) {
  return cluster_by_revenue({merchants.begin(), merchants.end()}, n_clusters);
}

std::map<std::uint32_t, std::size_t> cluster_consumers_by_requests(std::span<const EntityStats> consumers,
                                                                   std::size_t n_clusters) {
  return cluster_by_revenue({consumers.begin(), consumers.end()}, n_clusters);
}

void write_cluster_table(std::ostream& out, const std::map<std::uint32_t, std::size_t>& mapping) {
  out << "id\tcluster\n";
  for (const auto& [id, cluster] : mapping) out << id << '\t' << cluster << '\n';
}

std::map<std::uint32_t, std::size_t> read_cluster_table(std::istream& in) {
  std::map<std::uint32_t, std::size_t> mapping;
  std::string line;
  if (!std::getline(in, line) || line != "id\tcluster") {
    throw std::runtime_error("cluster table: missing header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::uint32_t id = 0;
    std::size_t cluster = 0;
    if (!(row >> id >> cluster)) {
      throw std::runtime_error("cluster table: malformed line " + std::to_string(line_no));
    }
    mapping[id] = cluster;
  }
  return mapping;
}

}  // namespace dcmab
