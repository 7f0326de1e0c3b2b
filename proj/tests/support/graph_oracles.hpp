// SPDX-License-Identifier: Apache-2.0
// Brute-force graph oracles: Floyd-Warshall distances, explicit shortest
// path enumeration and longest paths by walking every path of a DAG.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include "sparse_rnn/graph.hpp"

namespace srnn::testing {

inline constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 4;

inline std::vector<std::vector<std::size_t>> floyd_warshall(const graph::UGraph& g) {
  std::vector<std::vector<std::size_t>> d(g.n, std::vector<std::size_t>(g.n, kInf));
  for (std::size_t i = 0; i < g.n; ++i) d[i][i] = 0;
  for (auto [u, v] : g.edges) d[u][v] = d[v][u] = 1;
  for (std::size_t k = 0; k < g.n; ++k)
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t j = 0; j < g.n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

inline bool connected_oracle(const graph::UGraph& g) {
  auto d = floyd_warshall(g);
  for (auto& row : d)
    for (auto x : row)
      if (x >= kInf) return false;
  return true;
}

struct BetweennessOracle {
  std::vector<double> node;
  std::map<graph::Edge, double> edge;
  double pair_distance_sum = 0.0;  // sum over unordered pairs of d(s,t)
};

// Enumerates every shortest path of every unordered pair explicitly.
inline BetweennessOracle betweenness_oracle(const graph::UGraph& g) {
  auto d = floyd_warshall(g);
  auto adj = g.adjacency();
  BetweennessOracle out;
  out.node.assign(g.n, 0.0);
  for (auto e : g.edges) out.edge[e] = 0.0;
  for (std::size_t s = 0; s < g.n; ++s) {
    for (std::size_t t = s + 1; t < g.n; ++t) {
      std::vector<std::vector<std::size_t>> paths;
      std::vector<std::size_t> path{s};
      auto extend = [&](auto&& self, std::size_t v) -> void {
        if (v == t) {
          paths.push_back(path);
          return;
        }
        for (std::size_t w : adj[v]) {
          if (d[s][w] == path.size() && d[w][t] + path.size() == d[s][t]) {
            path.push_back(w);
            self(self, w);
            path.pop_back();
          }
        }
      };
      extend(extend, s);
      const double share = 1.0 / static_cast<double>(paths.size());
      out.pair_distance_sum += static_cast<double>(d[s][t]);
      for (const auto& p : paths) {
        for (std::size_t i = 1; i + 1 < p.size(); ++i) out.node[p[i]] += share;
        for (std::size_t i = 0; i + 1 < p.size(); ++i)
          out.edge[{std::min(p[i], p[i + 1]), std::max(p[i], p[i + 1])}] += share;
      }
    }
  }
  return out;
}

// Length (in arcs) of the longest path ending at each node, by walking every
// path that starts at a source.
inline std::vector<std::size_t> longest_path_oracle(std::size_t n, const std::vector<graph::Edge>& arcs) {
  std::vector<std::vector<std::size_t>> out_arcs(n);
  std::vector<bool> has_parent(n, false);
  for (auto [u, v] : arcs) {
    out_arcs[u].push_back(v);
    has_parent[v] = true;
  }
  std::vector<std::size_t> best(n, 0);
  auto walk = [&](auto&& self, std::size_t v, std::size_t len) -> void {
    best[v] = std::max(best[v], len);
    for (std::size_t w : out_arcs[v]) self(self, w, len + 1);
  };
  for (std::size_t v = 0; v < n; ++v)
    if (!has_parent[v]) walk(walk, v, 0);
  return best;
}

// Every edge subset of the complete graph on n nodes, as an edge list.
template <typename F>
void for_each_edge_subset(std::size_t n, F&& f) {
  std::vector<graph::Edge> all;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) all.push_back({u, v});
  for (std::size_t mask = 0; mask < (std::size_t{1} << all.size()); ++mask) {
    std::vector<graph::Edge> edges;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (mask >> i & 1) edges.push_back(all[i]);
    f(edges);
  }
}

}  // namespace srnn::testing
