// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/rng.hpp"

namespace srnn::graph {

using Edge = std::pair<std::size_t, std::size_t>;

/// Simple undirected graph. Edges are stored as (min, max) pairs, sorted.
struct UGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;

  /// Normalizes and sorts `edges`. Throws DomainError on self-loops,
  /// duplicates or out-of-range endpoints.
  static UGraph from_edges(std::size_t n, std::vector<Edge> edges);

  std::vector<std::vector<std::size_t>> adjacency() const;
  std::vector<std::size_t> degrees() const;
  bool has_edge(std::size_t u, std::size_t v) const;

  friend bool operator==(const UGraph&, const UGraph&) = default;
};

/// Directed graph with an optional layer index per node (empty until
/// computed).
struct Dag {
  std::size_t n = 0;
  std::vector<Edge> arcs;  // sorted (from, to)
  std::vector<std::size_t> layer_index;

  std::vector<std::vector<std::size_t>> parents() const;
  std::vector<std::vector<std::size_t>> children() const;
  std::vector<std::size_t> sources() const;  // in-degree 0
  std::vector<std::size_t> sinks() const;    // out-degree 0
  std::size_t layer_count() const;           // 1 + max layer index
};

bool is_connected(const UGraph& g);

/// Ring lattice: every node joined to its k nearest neighbours (k/2 per side).
UGraph ring_lattice(std::size_t n, std::size_t k);

/// Watts-Strogatz: ring lattice, then each clockwise edge (u, u+j) is moved
/// to (u, w) for a uniform non-neighbour w with probability p. Redrawn from
/// fresh sub-seeds until connected. Needs n > k >= 2, k even, p in [0,1].
UGraph ws_generate(std::size_t n, std::size_t k, double p, Rng& rng);

/// Barabasi-Albert growth from a path on m+1 seed nodes; each new node links
/// to m distinct existing nodes drawn with probability proportional to
/// degree. Needs n > m+1, m >= 1.
UGraph ba_generate(std::size_t n, std::size_t m, Rng& rng);
inline std::size_t ba_seed_nodes(std::size_t m) { return m + 1; }

/// Orients each edge from the lower to the higher label.
Dag to_dag(const UGraph& g);

/// Layer of every node: 0 for nodes without parents, otherwise one more than
/// the deepest parent. Throws ContractViolation if the arcs contain a cycle.
std::vector<std::size_t> layer_index(const Dag& dag);

enum class Family { WattsStrogatz, BarabasiAlbert };
std::string_view to_string(Family family);
/// Accepts "ws"/"watts_strogatz" and "ba"/"barabasi_albert".
Family parse_family(std::string_view name);

struct FamilyParams {
  std::size_t k = 4;
  double p = 0.5;
  std::size_t m = 2;
};

/// A generated base graph with its oriented, layer-indexed DAG.
struct ArchGraph {
  Family family = Family::WattsStrogatz;
  UGraph base;
  Dag dag;
  FamilyParams params;
  std::uint64_t seed = 0;
};

/// Deterministic in (family, n, params, seed).
ArchGraph make_arch(Family family, std::size_t n, const FamilyParams& params, std::uint64_t seed);
/// Wraps an existing graph: orientation and layer indices.
ArchGraph arch_from(const UGraph& base, Family family = Family::WattsStrogatz,
                    std::uint64_t seed = 0);

// Edge-list files: "n" on the first data line, then "u v" per edge or arc.
// DAG files append "L v idx" lines with the layer index of each node.
std::string ug_text(const UGraph& g, const Provenance& prov = {});
std::string dag_text(const Dag& dag, const Provenance& prov = {});
/// Throw InputError on malformed text.
UGraph parse_ug(std::string_view text);
Dag parse_dag(std::string_view text);

}  // namespace srnn::graph
