// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "sparse_rnn/graph.hpp"

namespace srnn::metrics {

using graph::Dag;
using graph::Edge;
using graph::UGraph;

/// BFS hop counts; row u holds the distances from u. Throws DomainError if
/// the graph is disconnected.
std::vector<std::vector<std::size_t>> all_pairs_distances(const UGraph& g);

std::size_t diameter(const UGraph& g);
std::size_t radius(const UGraph& g);
/// 2m / (n(n-1)). Needs n >= 2.
double density(const UGraph& g);
/// m / (n(n-1)). Needs n >= 2.
double density(const Dag& g);
double average_shortest_path_length(const UGraph& g);
std::vector<double> eccentricities(const UGraph& g);
/// (n-1) / sum of distances. Needs n >= 2.
std::vector<double> closeness(const UGraph& g);

/// Shortest-path fractions summed over unordered pairs {s,t} with s,t != v
/// (Brandes accumulation).
std::vector<double> node_betweenness(const UGraph& g);
/// Same over pairs whose shortest paths use the edge; aligned with g.edges.
std::vector<double> edge_betweenness(const UGraph& g);

/// Mean local clustering coefficient (nodes of degree < 2 count as 0).
double average_clustering(const UGraph& g);

/// How betweenness enters the property record.
enum class BetweennessScale {
  /// Sums over unordered pairs, as node_betweenness/edge_betweenness return.
  Raw,
  /// Divided by the number of pairs that could route through the node
  /// ((n-1)(n-2)/2) or edge (n(n-1)/2), as networkx reports by default.
  PairFraction,
};

std::string_view to_string(BetweennessScale scale);
/// Accepts "raw" and "pair_fraction".
BetweennessScale parse_betweenness_scale(std::string_view name);

inline constexpr std::size_t kPropertyCount = 23;

/// Structural description of one generated architecture. Counts of layers,
/// sources and sinks come from the DAG; everything else from the
/// undirected base graph.
struct GraphPropertyRecord {
  double layers = 0, nodes = 0, edges = 0, source_nodes = 0, sink_nodes = 0;
  double diameter = 0, density = 0, average_shortest_path_length = 0;
  double eccentricity_mean = 0, eccentricity_var = 0, eccentricity_std = 0;
  double degree_mean = 0, degree_var = 0, degree_std = 0;
  double closeness_mean = 0, closeness_var = 0, closeness_std = 0;
  double nodes_betweenness_mean = 0, nodes_betweenness_var = 0, nodes_betweenness_std = 0;
  double edge_betweenness_mean = 0, edge_betweenness_var = 0, edge_betweenness_std = 0;

  static const std::array<std::string_view, kPropertyCount>& names();
  std::array<double, kPropertyCount> values() const;
  static GraphPropertyRecord from_values(const std::array<double, kPropertyCount>& v);
  friend bool operator==(const GraphPropertyRecord&, const GraphPropertyRecord&) = default;
};

GraphPropertyRecord full_record(const graph::ArchGraph& arch,
                                BetweennessScale scale = BetweennessScale::Raw);

}  // namespace srnn::metrics
