// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "sparse_rnn/errors.hpp"

namespace srnn::graph {

namespace {

constexpr std::size_t kMaxConnectAttempts = 1000;

Edge ordered(std::size_t u, std::size_t v) { return u < v ? Edge{u, v} : Edge{v, u}; }

UGraph from_sets(const std::vector<std::set<std::size_t>>& adj) {
  UGraph g;
  g.n = adj.size();
  for (std::size_t u = 0; u < adj.size(); ++u) {
    for (std::size_t v : adj[u]) {
      if (u < v) g.edges.emplace_back(u, v);
    }
  }
  return g;
}

std::size_t parse_index(std::string_view token, std::string_view what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw InputError("graph file: bad " + std::string(what) + " '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string edge_list(std::size_t n, const std::vector<Edge>& edges, const Provenance& prov) {
  std::string out = prov.comment_line() + "\n" + std::to_string(n) + "\n";
  for (const auto& [u, v] : edges) out += std::to_string(u) + " " + std::to_string(v) + "\n";
  return out;
}

}  // namespace

UGraph UGraph::from_edges(std::size_t n, std::vector<Edge> edges) {
  for (auto& e : edges) {
    if (e.first >= n || e.second >= n) throw DomainError("edge endpoint out of range");
    if (e.first == e.second) throw DomainError("self-loop on node " + std::to_string(e.first));
    e = ordered(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw DomainError("duplicate edge");
  }
  return UGraph{n, std::move(edges)};
}

std::vector<std::vector<std::size_t>> UGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<std::size_t> UGraph::degrees() const {
  std::vector<std::size_t> d(n, 0);
  for (const auto& [u, v] : edges) {
    ++d[u];
    ++d[v];
  }
  return d;
}

bool UGraph::has_edge(std::size_t u, std::size_t v) const {
  return std::binary_search(edges.begin(), edges.end(), ordered(u, v));
}

std::vector<std::vector<std::size_t>> Dag::parents() const {
  std::vector<std::vector<std::size_t>> p(n);
  for (const auto& [u, v] : arcs) p[v].push_back(u);
  return p;
}

std::vector<std::vector<std::size_t>> Dag::children() const {
  std::vector<std::vector<std::size_t>> c(n);
  for (const auto& [u, v] : arcs) c[u].push_back(v);
  return c;
}

std::vector<std::size_t> Dag::sources() const {
  std::vector<bool> has_parent(n, false);
  for (const auto& a : arcs) has_parent[a.second] = true;
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < n; ++v) {
    if (!has_parent[v]) out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> Dag::sinks() const {
  std::vector<bool> has_child(n, false);
  for (const auto& a : arcs) has_child[a.first] = true;
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < n; ++v) {
    if (!has_child[v]) out.push_back(v);
  }
  return out;
}

std::size_t Dag::layer_count() const {
  if (layer_index.empty()) return 0;
  return 1 + *std::max_element(layer_index.begin(), layer_index.end());
}

bool is_connected(const UGraph& g) {
  if (g.n <= 1) return true;
  const auto adj = g.adjacency();
  std::vector<bool> seen(g.n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == g.n;
}

UGraph ring_lattice(std::size_t n, std::size_t k) {
  if (k % 2 != 0 || k < 2 || n <= k) {
    throw DomainError("ring lattice needs even k >= 2 and n > k (n=" + std::to_string(n) +
                      ", k=" + std::to_string(k) + ")");
  }
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t j = 1; j <= k / 2; ++j) edges.push_back(ordered(u, (u + j) % n));
  }
  return UGraph::from_edges(n, std::move(edges));
}

UGraph ws_generate(std::size_t n, std::size_t k, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("rewiring probability must lie in [0, 1]");
  const UGraph lattice = ring_lattice(n, k);
  const std::uint64_t base = rng.next_u64();
  for (std::size_t attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
    Rng r(derive_seed(base, attempt));
    std::vector<std::set<std::size_t>> adj(n);
    for (const auto& [u, v] : lattice.edges) {
      adj[u].insert(v);
      adj[v].insert(u);
    }
    // Visit clockwise edges ring by ring, as in the classic construction.
    for (std::size_t j = 1; j <= k / 2; ++j) {
      for (std::size_t u = 0; u < n; ++u) {
        const std::size_t v = (u + j) % n;
        if (!r.bernoulli(p)) continue;
        if (adj[u].size() >= n - 1) continue;  // no non-neighbour left
        std::size_t w = static_cast<std::size_t>(r.below(n));
        while (w == u || adj[u].count(w) != 0) w = static_cast<std::size_t>(r.below(n));
        adj[u].erase(v);
        adj[v].erase(u);
        adj[u].insert(w);
        adj[w].insert(u);
      }
    }
    UGraph g = from_sets(adj);
    if (is_connected(g)) return g;
  }
  throw DomainError("no connected Watts-Strogatz graph after " +
                    std::to_string(kMaxConnectAttempts) + " attempts");
}

UGraph ba_generate(std::size_t n, std::size_t m, Rng& rng) {
  const std::size_t n0 = ba_seed_nodes(m);
  if (m < 1 || n <= n0) {
    throw DomainError("Barabasi-Albert needs m >= 1 and n > m+1 (n=" + std::to_string(n) +
                      ", m=" + std::to_string(m) + ")");
  }
  std::vector<Edge> edges;
  std::vector<std::size_t> degree(n, 0);
  for (std::size_t u = 0; u + 1 < n0; ++u) {
    edges.emplace_back(u, u + 1);
    ++degree[u];
    ++degree[u + 1];
  }
  std::vector<std::size_t> chosen;
  for (std::size_t v = n0; v < n; ++v) {
    chosen.clear();
    std::size_t pool = 0;
    for (std::size_t u = 0; u < v; ++u) pool += degree[u];
    for (std::size_t pick = 0; pick < m; ++pick) {
      // Degree-proportional draw over nodes not yet chosen for v.
      std::size_t ticket = static_cast<std::size_t>(rng.below(pool));
      std::size_t target = 0;
      for (std::size_t u = 0; u < v; ++u) {
        if (std::find(chosen.begin(), chosen.end(), u) != chosen.end()) continue;
        if (ticket < degree[u]) {
          target = u;
          break;
        }
        ticket -= degree[u];
      }
      chosen.push_back(target);
      pool -= degree[target];
    }
    for (std::size_t u : chosen) {
      edges.emplace_back(u, v);
      ++degree[u];
      ++degree[v];
    }
  }
  return UGraph::from_edges(n, std::move(edges));
}

Dag to_dag(const UGraph& g) {
  Dag d;
  d.n = g.n;
  for (const auto& [u, v] : g.edges) d.arcs.push_back(ordered(u, v));
  std::sort(d.arcs.begin(), d.arcs.end());
  return d;
}

std::vector<std::size_t> layer_index(const Dag& dag) {
  const auto parents = dag.parents();
  enum : unsigned char { kNew, kOpen, kDone };
  std::vector<unsigned char> state(dag.n, kNew);
  std::vector<std::size_t> index(dag.n, 0);
  // Iterative post-order walk over parents; an open node met again is a cycle.
  for (std::size_t root = 0; root < dag.n; ++root) {
    if (state[root] == kDone) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    state[root] = kOpen;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < parents[v].size()) {
        const std::size_t u = parents[v][next++];
        if (state[u] == kOpen) throw ContractViolation("graph has a cycle through node " + std::to_string(u));
        if (state[u] == kNew) {
          state[u] = kOpen;
          stack.emplace_back(u, 0);
        }
        continue;
      }
      std::size_t idx = 0;
      for (std::size_t u : parents[v]) idx = std::max(idx, index[u] + 1);
      index[v] = idx;
      state[v] = kDone;
      stack.pop_back();
    }
  }
  return index;
}

std::string_view to_string(Family family) {
  return family == Family::WattsStrogatz ? "ws" : "ba";
}

Family parse_family(std::string_view name) {
  if (name == "ws" || name == "watts_strogatz") return Family::WattsStrogatz;
  if (name == "ba" || name == "barabasi_albert") return Family::BarabasiAlbert;
  throw InputError("unknown graph family '" + std::string(name) + "' (expected ws or ba)");
}

ArchGraph make_arch(Family family, std::size_t n, const FamilyParams& params, std::uint64_t seed) {
  Rng rng(seed);
  UGraph base = family == Family::WattsStrogatz ? ws_generate(n, params.k, params.p, rng)
                                                 : ba_generate(n, params.m, rng);
  ArchGraph arch = arch_from(base, family, seed);
  arch.params = params;
  return arch;
}

ArchGraph arch_from(const UGraph& base, Family family, std::uint64_t seed) {
  ArchGraph arch;
  arch.family = family;
  arch.base = base;
  arch.dag = to_dag(base);
  arch.dag.layer_index = layer_index(arch.dag);
  arch.seed = seed;
  return arch;
}

std::string ug_text(const UGraph& g, const Provenance& prov) { return edge_list(g.n, g.edges, prov); }

std::string dag_text(const Dag& dag, const Provenance& prov) {
  std::string out = edge_list(dag.n, dag.arcs, prov);
  for (std::size_t v = 0; v < dag.layer_index.size(); ++v) {
    out += "L " + std::to_string(v) + " " + std::to_string(dag.layer_index[v]) + "\n";
  }
  return out;
}

UGraph parse_ug(std::string_view text) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw InputError("graph file: missing node count");
  const std::size_t n = parse_index(lines[0], "node count");
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto tok = split_ws(lines[i]);
    if (tok.size() != 2) throw InputError("graph file: expected 'u v' on line '" + lines[i] + "'");
    edges.emplace_back(parse_index(tok[0], "node"), parse_index(tok[1], "node"));
  }
  try {
    return UGraph::from_edges(n, std::move(edges));
  } catch (const DomainError& e) {
    throw InputError(std::string("graph file: ") + e.what());
  }
}

Dag parse_dag(std::string_view text) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw InputError("dag file: missing node count");
  Dag d;
  d.n = parse_index(lines[0], "node count");
  std::vector<std::pair<std::size_t, std::size_t>> levels;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto tok = split_ws(lines[i]);
    if (tok.size() == 3 && tok[0] == "L") {
      levels.emplace_back(parse_index(tok[1], "node"), parse_index(tok[2], "layer index"));
      continue;
    }
    if (tok.size() != 2) throw InputError("dag file: bad line '" + lines[i] + "'");
    const std::size_t u = parse_index(tok[0], "node"), v = parse_index(tok[1], "node");
    if (u >= d.n || v >= d.n || u == v) throw InputError("dag file: bad arc '" + lines[i] + "'");
    d.arcs.emplace_back(u, v);
  }
  std::sort(d.arcs.begin(), d.arcs.end());
  if (std::adjacent_find(d.arcs.begin(), d.arcs.end()) != d.arcs.end()) {
    throw InputError("dag file: duplicate arc");
  }
  if (!levels.empty()) {
    if (levels.size() != d.n) throw InputError("dag file: layer index lines must cover every node");
    d.layer_index.assign(d.n, 0);
    std::vector<bool> seen(d.n, false);
    for (const auto& [v, idx] : levels) {
      if (v >= d.n || seen[v]) throw InputError("dag file: bad layer index line for node " + std::to_string(v));
      seen[v] = true;
      d.layer_index[v] = idx;
    }
  }
  return d;
}

}  // namespace srnn::graph
