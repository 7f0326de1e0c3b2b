// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "graph_oracles.hpp"
#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/graph.hpp"
#include "sparse_rnn/metrics.hpp"

using namespace srnn;
using namespace srnn::graph;

namespace {

UGraph table_graph() { return UGraph::from_edges(5, {{0, 2}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}}); }

double median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? static_cast<double>(v[n / 2]) : 0.5 * static_cast<double>(v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("UGraph construction rejects self-loops, duplicates and bad nodes") {
  CHECK_THROWS_AS(UGraph::from_edges(3, {{1, 1}}), DomainError);
  CHECK_THROWS_AS(UGraph::from_edges(3, {{0, 1}, {1, 0}}), DomainError);
  CHECK_THROWS_AS(UGraph::from_edges(3, {{0, 3}}), DomainError);
  auto g = UGraph::from_edges(3, {{2, 0}, {1, 0}});
  CHECK(g.edges == std::vector<Edge>{{0, 1}, {0, 2}});
  CHECK(g.has_edge(2, 0));
  CHECK_FALSE(g.has_edge(1, 2));
}

TEST_CASE("ring lattice") {
  auto g = ring_lattice(10, 4);
  CHECK(g.edges.size() == 20);
  for (auto d : g.degrees()) CHECK(d == 4);
  CHECK(g.has_edge(0, 9));
  CHECK(g.has_edge(0, 8));
  CHECK_FALSE(g.has_edge(0, 5));
  CHECK_THROWS_AS(ring_lattice(10, 3), DomainError);
  CHECK_THROWS_AS(ring_lattice(4, 4), DomainError);
  CHECK_THROWS_AS(ring_lattice(10, 0), DomainError);
}

TEST_CASE("watts-strogatz with p=0 is the ring lattice") {
  for (std::size_t n : {5, 12, 30}) {
    for (std::size_t k : {2, 4}) {
      Rng rng(n * 10 + k);
      auto g = ws_generate(n, k, 0.0, rng);
      CHECK(g == ring_lattice(n, k));
      CHECK(g.edges.size() == n * k / 2);
    }
  }
}

TEST_CASE("watts-strogatz edge count does not depend on p") {
  Rng rng(1);
  auto g = ws_generate(20, 4, 1.0, rng);
  CHECK(g.edges.size() == 40);
  for (double p = 0.0; p <= 1.0; p += 0.1) {
    for (int s = 0; s < 20; ++s) {
      auto h = ws_generate(25, 6, p, rng);
      CHECK(h.edges.size() == 75);
      CHECK(testing::connected_oracle(h));
    }
  }
}

TEST_CASE("watts-strogatz rewiring lowers clustering") {
  Rng lattice_rng(0);
  double lattice = metrics::average_clustering(ws_generate(30, 4, 0.0, lattice_rng));
  CHECK(lattice == doctest::Approx(0.5));
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(s);
    sum += metrics::average_clustering(ws_generate(30, 4, 0.5, rng));
  }
  CHECK(sum / 100.0 < lattice);
}

TEST_CASE("barabasi-albert counts follow the growth law") {
  for (std::size_t m : {1, 2, 3}) {
    for (std::size_t n : {m + 2, std::size_t{10}, std::size_t{50}}) {
      Rng rng(n * 7 + m);
      auto g = ba_generate(n, m, rng);
      std::size_t seed_nodes = ba_seed_nodes(m);
      std::size_t added = n - seed_nodes;
      CHECK(g.n == seed_nodes + added);
      CHECK(g.edges.size() - m == m * added);
      CHECK(testing::connected_oracle(g));
    }
  }
  Rng rng(3);
  auto tree = ba_generate(30, 1, rng);
  CHECK(tree.edges.size() == 29);
  CHECK_THROWS_AS(ba_generate(3, 2, rng), DomainError);
  CHECK_THROWS_AS(ba_generate(10, 0, rng), DomainError);
}

TEST_CASE("barabasi-albert degrees are heavy tailed") {
  double ratio = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(s);
    auto deg = ba_generate(50, 2, rng).degrees();
    ratio += static_cast<double>(*std::max_element(deg.begin(), deg.end())) / median(deg);
  }
  CHECK(ratio / 100.0 >= 3.0);
}

TEST_CASE("generated graphs are connected over a thousand seeds") {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    std::size_t n = 10 + rng.below(41);
    auto ws = ws_generate(n, 4, 0.5, rng);
    auto ba = ba_generate(n, 2, rng);
    REQUIRE(is_connected(ws));
    REQUIRE(is_connected(ba));
    REQUIRE(testing::connected_oracle(ws));
    REQUIRE(testing::connected_oracle(ba));
  }
}

TEST_CASE("generators are deterministic") {
  Rng a(9), b(9);
  CHECK(ws_generate(30, 4, 0.3, a) == ws_generate(30, 4, 0.3, b));
  CHECK(ba_generate(30, 2, a) == ba_generate(30, 2, b));
  auto x = make_arch(Family::BarabasiAlbert, 20, {}, 5);
  auto y = make_arch(Family::BarabasiAlbert, 20, {}, 5);
  CHECK(x.base == y.base);
  CHECK(x.dag.arcs == y.dag.arcs);
  CHECK(x.dag.layer_index == y.dag.layer_index);
}

TEST_CASE("to_dag orients edges from low to high label") {
  auto d = to_dag(UGraph::from_edges(4, {{3, 1}}));
  CHECK(d.arcs == std::vector<Edge>{{1, 3}});
  auto t = to_dag(table_graph());
  CHECK(t.arcs == std::vector<Edge>{{0, 2}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}});
}

TEST_CASE("layer index of the worked DAG") {
  auto d = to_dag(table_graph());
  d.layer_index = layer_index(d);
  CHECK(d.layer_index == std::vector<std::size_t>{0, 0, 1, 2, 3});
  CHECK(d.layer_count() == 4);
  CHECK(d.sources() == std::vector<std::size_t>{0, 1});
  CHECK(d.sinks() == std::vector<std::size_t>{4});
}

TEST_CASE("edgeless graph has every node in layer 0") {
  auto d = to_dag(UGraph::from_edges(4, {}));
  CHECK(layer_index(d) == std::vector<std::size_t>(4, 0));
}

TEST_CASE("layer index equals the longest path on every DAG with up to 6 nodes") {
  std::size_t count = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    testing::for_each_edge_subset(n, [&](const std::vector<Edge>& edges) {
      Dag d;
      d.n = n;
      d.arcs = edges;
      auto idx = layer_index(d);
      REQUIRE(idx == testing::longest_path_oracle(n, edges));
      for (auto [u, v] : edges) REQUIRE(idx[u] < idx[v]);
      ++count;
    });
  }
  CHECK(count == 1 + 2 + 8 + 64 + 1024 + 32768);
}

TEST_CASE("layer index does not rely on label order") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 2 + rng.below(7);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    Dag d;
    d.n = n;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (rng.bernoulli(0.4)) d.arcs.push_back({perm[u], perm[v]});
    std::sort(d.arcs.begin(), d.arcs.end());
    REQUIRE(layer_index(d) == testing::longest_path_oracle(n, d.arcs));
  }
}

TEST_CASE("cycles are contract violations") {
  Dag d;
  d.n = 3;
  d.arcs = {{0, 1}, {1, 2}, {2, 0}};
  CHECK_THROWS_AS(layer_index(d), ContractViolation);
}

TEST_CASE("generated architectures respect the DAG invariants") {
  for (Family f : {Family::WattsStrogatz, Family::BarabasiAlbert}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      auto arch = make_arch(f, 10 + s % 30, {}, s);
      const auto& idx = arch.dag.layer_index;
      auto parents = arch.dag.parents();
      for (auto [u, v] : arch.dag.arcs) {
        REQUIRE(u < v);
        REQUIRE(idx[u] < idx[v]);
      }
      for (std::size_t v = 0; v < arch.dag.n; ++v) {
        std::size_t expect = 0;
        for (auto p : parents[v]) expect = std::max(expect, idx[p] + 1);
        REQUIRE(idx[v] == expect);
      }
      REQUIRE(arch.dag.arcs.size() == arch.base.edges.size());
    }
  }
}

TEST_CASE("family names") {
  CHECK(parse_family("ws") == Family::WattsStrogatz);
  CHECK(parse_family("ba") == Family::BarabasiAlbert);
  CHECK(to_string(Family::BarabasiAlbert) == "ba");
  CHECK_THROWS(parse_family("er"));
}

TEST_CASE("graph files round-trip") {
  auto arch = make_arch(Family::WattsStrogatz, 15, {}, 3);
  auto ug = parse_ug(ug_text(arch.base, Provenance{"g"}));
  CHECK(ug == arch.base);
  auto dag = parse_dag(dag_text(arch.dag, Provenance{"g"}));
  CHECK(dag.arcs == arch.dag.arcs);
  CHECK(dag.layer_index == arch.dag.layer_index);
  CHECK(ug_text(arch.base).rfind("# sparse-rnn", 0) == 0);
  CHECK_THROWS_AS(parse_ug("3\n0 5\n"), InputError);
  CHECK_THROWS_AS(parse_ug("x\n"), InputError);
  CHECK_THROWS_AS(parse_dag("3\n0 1\nL 0\n"), InputError);
}
