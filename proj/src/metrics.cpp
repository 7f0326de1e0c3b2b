// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/metrics.hpp"

#include <algorithm>
#include <limits>

#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/numerics.hpp"

namespace srnn::metrics {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> bfs(const std::vector<std::vector<std::size_t>>& adj, std::size_t s) {
  std::vector<std::size_t> dist(adj.size(), kUnreached);
  std::vector<std::size_t> queue{s};
  dist[s] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t u = queue[head];
    for (std::size_t v : adj[u]) {
      if (dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

void require_pairs(std::size_t n) {
  if (n < 2) throw DomainError("metric needs at least 2 nodes, got " + std::to_string(n));
}

void require_nodes(std::size_t n) {
  if (n == 0) throw DomainError("metric is undefined on the empty graph");
}

// Brandes: per-source shortest-path counts and dependency accumulation.
// Sums over ordered (s, t); callers halve for unordered pairs.
void brandes(const UGraph& g, std::vector<double>& node_bc, std::vector<double>& edge_bc) {
  const std::size_t n = g.n;
  const auto adj = g.adjacency();
  node_bc.assign(n, 0.0);
  edge_bc.assign(g.edges.size(), 0.0);
  auto edge_id = [&](std::size_t u, std::size_t v) {
    const Edge e = u < v ? Edge{u, v} : Edge{v, u};
    return static_cast<std::size_t>(std::lower_bound(g.edges.begin(), g.edges.end(), e) - g.edges.begin());
  };
  std::vector<double> sigma(n), delta(n);
  std::vector<std::size_t> dist(n);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(dist.begin(), dist.end(), kUnreached);
    order.assign(1, s);
    sigma[s] = 1.0;
    dist[s] = 0;
    for (std::size_t head = 0; head < order.size(); ++head) {
      const std::size_t u = order[head];
      for (std::size_t v : adj[u]) {
        if (dist[v] == kUnreached) {
          dist[v] = dist[u] + 1;
          order.push_back(v);
        }
        if (dist[v] == dist[u] + 1) sigma[v] += sigma[u];
      }
    }
    if (order.size() != n) throw DomainError("graph is disconnected");
    for (std::size_t i = order.size(); i-- > 0;) {
      const std::size_t w = order[i];
      for (std::size_t v : adj[w]) {
        if (dist[v] + 1 != dist[w]) continue;
        const double share = sigma[v] / sigma[w] * (1.0 + delta[w]);
        edge_bc[edge_id(v, w)] += share;
        delta[v] += share;
      }
      if (w != s) node_bc[w] += delta[w];
    }
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> all_pairs_distances(const UGraph& g) {
  const auto adj = g.adjacency();
  std::vector<std::vector<std::size_t>> out;
  out.reserve(g.n);
  for (std::size_t s = 0; s < g.n; ++s) {
    out.push_back(bfs(adj, s));
    if (std::find(out.back().begin(), out.back().end(), kUnreached) != out.back().end()) {
      throw DomainError("graph is disconnected: infinite eccentricity");
    }
  }
  return out;
}

std::vector<double> eccentricities(const UGraph& g) {
  require_nodes(g.n);
  const auto d = all_pairs_distances(g);
  std::vector<double> ecc(g.n);
  for (std::size_t u = 0; u < g.n; ++u) ecc[u] = static_cast<double>(*std::max_element(d[u].begin(), d[u].end()));
  return ecc;
}

std::size_t diameter(const UGraph& g) {
  const auto e = eccentricities(g);
  return static_cast<std::size_t>(*std::max_element(e.begin(), e.end()));
}

std::size_t radius(const UGraph& g) {
  const auto e = eccentricities(g);
  return static_cast<std::size_t>(*std::min_element(e.begin(), e.end()));
}

double density(const UGraph& g) {
  require_pairs(g.n);
  const double n = static_cast<double>(g.n);
  return 2.0 * static_cast<double>(g.edges.size()) / (n * (n - 1.0));
}

double density(const Dag& g) {
  require_pairs(g.n);
  const double n = static_cast<double>(g.n);
  return static_cast<double>(g.arcs.size()) / (n * (n - 1.0));
}

double average_shortest_path_length(const UGraph& g) {
  require_pairs(g.n);
  const auto d = all_pairs_distances(g);
  double total = 0.0;
  for (const auto& row : d) {
    for (std::size_t x : row) total += static_cast<double>(x);
  }
  const double n = static_cast<double>(g.n);
  return total / (n * (n - 1.0));
}

std::vector<double> closeness(const UGraph& g) {
  require_pairs(g.n);
  const auto d = all_pairs_distances(g);
  std::vector<double> c(g.n);
  for (std::size_t u = 0; u < g.n; ++u) {
    double sum = 0.0;
    for (std::size_t x : d[u]) sum += static_cast<double>(x);
    c[u] = static_cast<double>(g.n - 1) / sum;
  }
  return c;
}

std::vector<double> node_betweenness(const UGraph& g) {
  require_nodes(g.n);
  std::vector<double> nodes, edges;
  brandes(g, nodes, edges);
  for (double& v : nodes) v /= 2.0;
  return nodes;
}

std::vector<double> edge_betweenness(const UGraph& g) {
  require_nodes(g.n);
  std::vector<double> nodes, edges;
  brandes(g, nodes, edges);
  for (double& v : edges) v /= 2.0;
  return edges;
}

double average_clustering(const UGraph& g) {
  require_nodes(g.n);
  const auto adj = g.adjacency();
  double total = 0.0;
  for (std::size_t u = 0; u < g.n; ++u) {
    const auto& nb = adj[u];
    if (nb.size() < 2) continue;
    std::size_t links = 0;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      for (std::size_t j = i + 1; j < nb.size(); ++j) links += g.has_edge(nb[i], nb[j]);
    }
    const double possible = static_cast<double>(nb.size() * (nb.size() - 1)) / 2.0;
    total += static_cast<double>(links) / possible;
  }
  return total / static_cast<double>(g.n);
}

std::string_view to_string(BetweennessScale scale) {
  return scale == BetweennessScale::Raw ? "raw" : "pair_fraction";
}

BetweennessScale parse_betweenness_scale(std::string_view name) {
  if (name == "raw") return BetweennessScale::Raw;
  if (name == "pair_fraction") return BetweennessScale::PairFraction;
  throw InputError("unknown betweenness scale '" + std::string(name) + "' (expected raw or pair_fraction)");
}

const std::array<std::string_view, kPropertyCount>& GraphPropertyRecord::names() {
  static const std::array<std::string_view, kPropertyCount> kNames{
      "layers",
      "nodes",
      "edges",
      "source_nodes",
      "sink_nodes",
      "diameter",
      "density",
      "average_shortest_path_length",
      "eccentricity_mean",
      "eccentricity_var",
      "eccentricity_std",
      "degree_mean",
      "degree_var",
      "degree_std",
      "closeness_mean",
      "closeness_var",
      "closeness_std",
      "nodes_betweenness_mean",
      "nodes_betweenness_var",
      "nodes_betweenness_std",
      "edge_betweenness_mean",
      "edge_betweenness_var",
      "edge_betweenness_std",
  };
  return kNames;
}

std::array<double, kPropertyCount> GraphPropertyRecord::values() const {
  return {layers,
          nodes,
          edges,
          source_nodes,
          sink_nodes,
          diameter,
          density,
          average_shortest_path_length,
          eccentricity_mean,
          eccentricity_var,
          eccentricity_std,
          degree_mean,
          degree_var,
          degree_std,
          closeness_mean,
          closeness_var,
          closeness_std,
          nodes_betweenness_mean,
          nodes_betweenness_var,
          nodes_betweenness_std,
          edge_betweenness_mean,
          edge_betweenness_var,
          edge_betweenness_std};
}

GraphPropertyRecord GraphPropertyRecord::from_values(const std::array<double, kPropertyCount>& v) {
  GraphPropertyRecord r;
  double* fields[kPropertyCount] = {
      &r.layers, &r.nodes, &r.edges, &r.source_nodes, &r.sink_nodes, &r.diameter, &r.density,
      &r.average_shortest_path_length, &r.eccentricity_mean, &r.eccentricity_var,
      &r.eccentricity_std, &r.degree_mean, &r.degree_var, &r.degree_std, &r.closeness_mean,
      &r.closeness_var, &r.closeness_std, &r.nodes_betweenness_mean, &r.nodes_betweenness_var,
      &r.nodes_betweenness_std, &r.edge_betweenness_mean, &r.edge_betweenness_var,
      &r.edge_betweenness_std};
  for (std::size_t i = 0; i < kPropertyCount; ++i) *fields[i] = v[i];
  return r;
}

GraphPropertyRecord full_record(const graph::ArchGraph& arch, BetweennessScale scale) {
  const UGraph& g = arch.base;
  require_pairs(g.n);
  auto layer_idx = arch.dag.layer_index;
  if (layer_idx.size() != arch.dag.n) layer_idx = graph::layer_index(arch.dag);

  GraphPropertyRecord r;
  r.layers = static_cast<double>(1 + *std::max_element(layer_idx.begin(), layer_idx.end()));
  r.nodes = static_cast<double>(g.n);
  r.edges = static_cast<double>(g.edges.size());
  r.source_nodes = static_cast<double>(arch.dag.sources().size());
  r.sink_nodes = static_cast<double>(arch.dag.sinks().size());

  const auto ecc = eccentricities(g);
  r.diameter = *std::max_element(ecc.begin(), ecc.end());
  r.density = density(g);
  r.average_shortest_path_length = average_shortest_path_length(g);
  const Stats e = stats(ecc);
  r.eccentricity_mean = e.mean, r.eccentricity_var = e.variance, r.eccentricity_std = e.std;

  std::vector<double> deg;
  for (std::size_t d : g.degrees()) deg.push_back(static_cast<double>(d));
  const Stats d = stats(deg);
  r.degree_mean = d.mean, r.degree_var = d.variance, r.degree_std = d.std;

  const Stats c = stats(closeness(g));
  r.closeness_mean = c.mean, r.closeness_var = c.variance, r.closeness_std = c.std;

  std::vector<double> nb, eb;
  brandes(g, nb, eb);
  const double n = static_cast<double>(g.n);
  double node_scale = 0.5, edge_scale = 0.5;
  if (scale == BetweennessScale::PairFraction) {
    node_scale = g.n > 2 ? 1.0 / ((n - 1.0) * (n - 2.0)) : 0.0;
    edge_scale = 1.0 / (n * (n - 1.0));
  }
  for (double& v : nb) v *= node_scale;
  for (double& v : eb) v *= edge_scale;
  const Stats nbs = stats(nb);
  r.nodes_betweenness_mean = nbs.mean, r.nodes_betweenness_var = nbs.variance,
  r.nodes_betweenness_std = nbs.std;
  const Stats ebs = eb.empty() ? Stats{} : stats(eb);
  r.edge_betweenness_mean = ebs.mean, r.edge_betweenness_var = ebs.variance,
  r.edge_betweenness_std = ebs.std;
  return r;
}

}  // namespace srnn::metrics
