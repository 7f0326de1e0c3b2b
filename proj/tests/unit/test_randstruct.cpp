// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradcheck.hpp"
#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/randstruct.hpp"
#include "sparse_rnn/training.hpp"

using namespace srnn;
using namespace srnn::randstruct;
using graph::UGraph;

namespace {

UGraph table_graph() { return UGraph::from_edges(5, {{0, 2}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}}); }

const CellKind kKinds[] = {CellKind::RnnTanh, CellKind::RnnRelu, CellKind::Lstm, CellKind::Gru};

// Column of node u inside the input of layer l (concatenation of layers 0..l-1).
std::size_t column_of(const RandStructModel& rs, std::size_t u) {
  auto [lu, iu] = rs.placement[u];
  std::size_t col = iu;
  for (std::size_t l = 0; l < lu; ++l) col += rs.model.layers[l].hidden_size;
  return col;
}

// Every input weight of layer(v) from node u is zero unless u -> v is an arc.
void check_structural_zeros(const RandStructModel& rs, const graph::Dag& dag) {
  std::set<graph::Edge> arcs(dag.arcs.begin(), dag.arcs.end());
  for (std::size_t v = 0; v < dag.n; ++v) {
    auto [lv, iv] = rs.placement[v];
    if (lv == 0) continue;
    const auto& layer = rs.model.layers[lv];
    for (std::size_t u = 0; u < dag.n; ++u) {
      if (rs.placement[u].first >= lv) continue;
      bool arc = arcs.count({u, v}) == 1;
      REQUIRE(layer.input_mask(iv, column_of(rs, u)) == (arc ? 1.0 : 0.0));
      for (const auto& w : layer.input_weights)
        if (!arc) REQUIRE(w(iv, column_of(rs, u)) == 0.0);
    }
  }
  auto sinks = dag.sinks();
  std::set<std::size_t> sink_set(sinks.begin(), sinks.end());
  for (std::size_t v = 0; v < dag.n; ++v) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      std::size_t col = column_of(rs, v);
      REQUIRE(rs.model.head_mask(c, col) == (sink_set.count(v) ? 1.0 : 0.0));
      if (!sink_set.count(v)) REQUIRE(rs.model.head_weights(c, col) == 0.0);
    }
  }
}

reber::Dataset tiny_data() {
  Rng rng(21);
  return reber::build_dataset(240, rng);
}

}  // namespace

TEST_CASE("worked graph yields four layers of sizes 2,1,1,1") {
  auto arch = graph::arch_from(table_graph());
  auto rs = build_model(arch, CellKind::Gru, 0, 1);
  REQUIRE(rs.model.layers.size() == 4);
  std::vector<std::size_t> sizes;
  for (const auto& l : rs.model.layers) sizes.push_back(l.hidden_size);
  CHECK(sizes == std::vector<std::size_t>{2, 1, 1, 1});
  CHECK(rs.model.embedding_dim() == 2);
  CHECK(rs.model.layers[0].sources == std::vector<int>{kEmbeddingSource});
  CHECK(rs.model.layers[3].sources == std::vector<int>{0, 1, 2});
  CHECK(rs.model.head_input_size() == 5);
  check_structural_zeros(rs, arch.dag);
  // node 3 reads nodes 1 and 2, the skip arc 1 -> 3 connects directly
  const auto& l2 = rs.model.layers[2];
  CHECK(l2.input_mask == Matrix{{0, 1, 1}});
}

TEST_CASE("sources read the embedding and sinks feed the head") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto arch = graph::make_arch(s % 2 ? graph::Family::BarabasiAlbert : graph::Family::WattsStrogatz,
                                 10 + 3 * s, {}, s);
    auto rs = build_model(arch, CellKind::Lstm, 0, s);
    auto sources = arch.dag.sources();
    CHECK(rs.model.layers[0].hidden_size == sources.size());
    for (auto v : sources) CHECK(rs.placement[v].first == 0);
    CHECK(rs.model.embedding_dim() == sources.size());
    check_structural_zeros(rs, arch.dag);
  }
}

TEST_CASE("single node graph") {
  auto arch = graph::arch_from(UGraph::from_edges(1, {}));
  auto rs = build_model(arch, CellKind::RnnTanh, 3, 2);
  REQUIRE(rs.model.layers.size() == 1);
  CHECK(rs.model.layers[0].hidden_size == 1);
  CHECK(rs.model.layers[0].hidden_weights[0].rows() == 1);
  CHECK(rs.model.embedding_dim() == 3);
  CHECK(rs.model.head_input_size() == 1);
  auto logits = predict_logits(rs.model, testing::batch_of({"BTSSXXTTVVE"}));
  CHECK(logits.rows() == 1);
  CHECK(all_finite(logits));
}

TEST_CASE("a zero arc weight matches the absent arc") {
  // Removing 1-3 keeps every layer index, so both models share shapes.
  auto with = graph::arch_from(table_graph());
  auto without = graph::arch_from(UGraph::from_edges(5, {{0, 2}, {1, 2}, {2, 3}, {2, 4}, {3, 4}}));
  REQUIRE(with.dag.layer_index == without.dag.layer_index);
  for (CellKind kind : kKinds) {
    auto a = build_model(with, kind, 0, 3);
    auto b = build_model(without, kind, 0, 3);
    auto pa = a.model.parameters();
    auto pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) *pb[i] = *pa[i];
    b.model.enforce_structure();
    const std::size_t col = column_of(a, 1);
    auto [lv, iv] = a.placement[3];
    for (auto& w : a.model.layers[lv].input_weights) w(iv, col) = 0.0;
    auto batch = testing::batch_of({"BTSSXXTTVVE", "BPVVE", "BTXXVPXTVVE"});
    CHECK(predict_logits(a.model, batch) == predict_logits(b.model, batch));
  }
}

TEST_CASE("structural zeros survive training") {
  auto data = tiny_data();
  for (CellKind kind : kKinds) {
    auto arch = graph::make_arch(graph::Family::WattsStrogatz, 14, {}, 5);
    auto rs = build_model(arch, kind, 0, 4);
    rs.model.hyper.batch_size = 16;
    rs.model.hyper.learning_rate = 0.01;
    TrainOptions opt;
    opt.epochs = 2;
    opt.seed = 1;
    opt.after_step = [&](RecurrentModel& m) {
      RandStructModel view{m, rs.placement};
      check_structural_zeros(view, arch.dag);
    };
    train(rs.model, data, opt);
    check_structural_zeros(rs, arch.dag);
  }
}

TEST_CASE("gradients of generated models match finite differences") {
  Rng rng(40);
  for (CellKind kind : kKinds) {
    CAPTURE(to_string(kind));
    auto arch = graph::make_arch(graph::Family::BarabasiAlbert, 7, {}, 8);
    auto rs = build_model(arch, kind, 2, 9);
    for (auto* p : rs.model.parameters())
      for (double& v : p->values()) v += 0.1 * rng.normal();
    rs.model.enforce_structure();
    auto texts = testing::random_texts(rng, 4, 2, 8);
    auto res = testing::grad_check(rs.model, testing::batch_of(texts), {0, 1, 1, 0});
    CAPTURE(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("record json round-trip and key set") {
  ExperimentRecord r;
  r.variant = CellKind::Lstm;
  r.family = graph::Family::BarabasiAlbert;
  r.seed = 18446744073709551557ull;
  r.properties = metrics::full_record(graph::make_arch(graph::Family::BarabasiAlbert, 12, {}, 2));
  r.test_acc = 0.8125;
  std::string line = record_json(r);
  CHECK(line.find('\n') == std::string::npos);
  auto j = nlohmann::json::parse(line);
  CHECK(j.size() == 27);
  for (auto name : metrics::GraphPropertyRecord::names()) CHECK(j.contains(std::string(name)));
  CHECK(j["variant"] == "lstm");
  CHECK(j["family"] == "ba");
  auto back = parse_record(line);
  CHECK(back.variant == r.variant);
  CHECK(back.family == r.family);
  CHECK(back.seed == r.seed);
  CHECK(back.properties == r.properties);
  CHECK(back.test_acc == r.test_acc);
  CHECK(record_json(back) == line);
  CHECK_THROWS_AS(parse_record("{\"variant\":\"gru\"}"), InputError);
  CHECK_THROWS_AS(parse_record("not json"), InputError);
}

TEST_CASE("partial trailing line is ignored") {
  ExperimentRecord r;
  r.properties.nodes = 10;
  std::string one = record_json(r) + "\n";
  std::string text = one + one + one.substr(0, one.size() / 2);
  CHECK(parse_records(text).size() == 2);
  CHECK(parse_records(one + one).size() == 2);
  CHECK(parse_records("").empty());
}

TEST_CASE("run seeds differ by family and index") {
  std::set<std::uint64_t> seen;
  for (auto f : {graph::Family::WattsStrogatz, graph::Family::BarabasiAlbert})
    for (std::size_t i = 0; i < 100; ++i) seen.insert(run_seed(7, f, i));
  CHECK(seen.size() == 200);
}

TEST_CASE("random experiments are ordered, deterministic and resumable") {
  auto data = tiny_data();
  ExperimentOptions opt;
  opt.count_per_family = 2;
  opt.epochs = 1;
  opt.batch_size = 64;
  opt.max_nodes = 14;
  opt.seed = 11;
  std::vector<std::uint64_t> emitted;
  auto recs = run_random_experiments(data, opt, {}, [&](const ExperimentRecord& r) { emitted.push_back(r.seed); });
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].family == graph::Family::WattsStrogatz);
  CHECK(recs[3].family == graph::Family::BarabasiAlbert);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(emitted[i] == recs[i].seed);
    CHECK(recs[i].seed == run_seed(11, recs[i].family, i % 2));
    CHECK((recs[i].test_acc >= 0.0 && recs[i].test_acc <= 1.0));
    CHECK((recs[i].properties.nodes >= 10 && recs[i].properties.nodes <= 14));
    for (double v : recs[i].properties.values()) CHECK(std::isfinite(v));
  }

  opt.jobs = 3;
  auto threaded = run_random_experiments(data, opt);
  REQUIRE(threaded.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(record_json(threaded[i]) == record_json(recs[i]));

  std::set<RunKey> done{{recs[0].family, recs[0].seed}, {recs[2].family, recs[2].seed}};
  auto rest = run_random_experiments(data, opt, done);
  REQUIRE(rest.size() == 2);
  CHECK(record_json(rest[0]) == record_json(recs[1]));
  CHECK(record_json(rest[1]) == record_json(recs[3]));
}
