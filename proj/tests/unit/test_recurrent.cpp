// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/recurrent.hpp"

using namespace srnn;
using srnn::testing::batch_of;
using srnn::testing::grad_check;
using srnn::testing::random_texts;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

const CellKind kKinds[] = {CellKind::RnnTanh, CellKind::RnnRelu, CellKind::Lstm, CellKind::Gru};

RecurrentModel small_model(CellKind kind, std::uint64_t seed, std::size_t emb = 4,
                           std::vector<std::size_t> sizes = {3, 3}) {
  Rng rng(seed);
  return make_stacked_model(kind, emb, sizes, rng);
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> out(n);
  for (int& y : out) y = static_cast<int>(rng.below(2));
  return out;
}

void set_scalar_gate(RecurrentLayer& layer, std::size_t gate, double wh, double wx, double b) {
  layer.hidden_weights[gate](0, 0) = wh;
  layer.input_weights[gate](0, 0) = wx;
  layer.biases[gate](0, 0) = b;
}

}  // namespace

TEST_CASE("cell kind names") {
  CHECK(parse_cell_kind("gru") == CellKind::Gru);
  CHECK(parse_cell_kind("lstm") == CellKind::Lstm);
  CHECK(parse_cell_kind("tanh") == CellKind::RnnTanh);
  CHECK(parse_cell_kind("rnn_relu") == CellKind::RnnRelu);
  CHECK_THROWS_AS(parse_cell_kind("transformer"), DomainError);
  CHECK(gate_count(CellKind::Lstm) == 4);
  CHECK(gate_count(CellKind::Gru) == 3);
  CHECK(gate_count(CellKind::RnnTanh) == 1);
}

TEST_CASE("rnn_step with zero parameters is zero") {
  for (CellKind kind : {CellKind::RnnTanh, CellKind::RnnRelu}) {
    auto layer = RecurrentLayer::zeros(kind, 2, 3);
    Matrix h = rnn_step(layer, Matrix{{1.0, -2.0}}, Matrix{{0.3, 0.1, -0.7}});
    for (double v : h.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("rnn_step relu clamps negative preactivations") {
  auto layer = RecurrentLayer::zeros(CellKind::RnnRelu, 2, 2);
  layer.biases[0] = Matrix{{-1.0, -0.5}};
  layer.input_weights[0] = Matrix{{0.1, 0.1}, {0.2, 0.0}};
  Matrix h = rnn_step(layer, Matrix{{1.0, 1.0}}, Matrix{{0.0, 0.0}});
  CHECK(h(0, 0) == 0.0);
  CHECK(h(0, 1) == 0.0);
}

TEST_CASE("rnn_step matches hand evaluation") {
  auto layer = RecurrentLayer::zeros(CellKind::RnnTanh, 2, 2);
  layer.input_weights[0] = Matrix{{0.5, -0.3}, {0.2, 0.1}};
  layer.hidden_weights[0] = Matrix{{0.1, 0.2}, {-0.4, 0.3}};
  layer.biases[0] = Matrix{{0.05, -0.1}};
  Matrix h = rnn_step(layer, Matrix{{1.0, 2.0}}, Matrix{{0.5, -0.5}});
  // 0.5 - 0.6 + 0.05 - 0.1 + 0.05 and 0.2 + 0.2 - 0.2 - 0.15 - 0.1
  CHECK(h(0, 0) == doctest::Approx(std::tanh(-0.1)).epsilon(1e-14));
  CHECK(h(0, 1) == doctest::Approx(std::tanh(-0.05)).epsilon(1e-14));
  CHECK_THROWS_AS(rnn_step(layer, Matrix{{1.0, 2.0, 3.0}}, Matrix{{0.5, -0.5}}), ShapeError);
}

TEST_CASE("lstm_step with zero parameters halves the cell") {
  auto layer = RecurrentLayer::zeros(CellKind::Lstm, 2, 3);
  Matrix c{{0.4, -1.0, 2.0}};
  auto s = lstm_step(layer, Matrix{{1.0, 1.0}}, Matrix{{0.2, 0.3, 0.4}}, c);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(s.c(0, j) == doctest::Approx(0.5 * c(0, j)));
    CHECK(s.h(0, j) == doctest::Approx(0.5 * std::tanh(0.5 * c(0, j))));
  }
  auto z = lstm_step(layer, Matrix{{1.0, 1.0}}, Matrix(1, 3), Matrix(1, 3));
  for (double v : z.h.values()) CHECK(v == 0.0);
  for (double v : z.c.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm_step matches scalar hand evaluation") {
  auto layer = RecurrentLayer::zeros(CellKind::Lstm, 1, 1);
  set_scalar_gate(layer, lstm_gate::kForget, 0.1, 0.4, 0.0);
  set_scalar_gate(layer, lstm_gate::kInput, -0.2, 0.3, 0.1);
  set_scalar_gate(layer, lstm_gate::kCandidate, 0.5, -0.6, 0.0);
  set_scalar_gate(layer, lstm_gate::kOutput, 0.3, 0.2, -0.1);
  auto s = lstm_step(layer, Matrix{{0.5}}, Matrix{{0.2}}, Matrix{{0.3}});
  double f = sigmoid(0.22), i = sigmoid(0.21), cand = std::tanh(-0.2), o = sigmoid(0.06);
  double c = f * 0.3 + i * cand;
  CHECK(s.c(0, 0) == doctest::Approx(c).epsilon(1e-14));
  CHECK(s.h(0, 0) == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
  CHECK(s.c(0, 0) == doctest::Approx(0.057420).epsilon(1e-4));
  CHECK(s.h(0, 0) == doctest::Approx(0.029539).epsilon(1e-4));
}

TEST_CASE("lstm with saturated forget and closed input carries the cell") {
  auto layer = RecurrentLayer::zeros(CellKind::Lstm, 2, 3);
  Rng rng(4);
  for (auto& w : layer.input_weights)
    for (double& v : w.values()) v = rng.uniform(-0.5, 0.5);
  for (auto& w : layer.hidden_weights)
    for (double& v : w.values()) v = rng.uniform(-0.5, 0.5);
  layer.biases[lstm_gate::kForget].fill(60.0);
  layer.biases[lstm_gate::kInput].fill(-60.0);
  Matrix c0{{0.7, -1.3, 0.25}};
  Matrix h(1, 3), c = c0;
  for (int t = 0; t < 500; ++t) {
    Matrix x{{rng.normal(), rng.normal()}};
    auto s = lstm_step(layer, x, h, c);
    h = s.h;
    c = s.c;
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(c(0, j) - c0(0, j)) <= 1e-9);
}

TEST_CASE("gru_step with zero parameters halves the state") {
  auto layer = RecurrentLayer::zeros(CellKind::Gru, 2, 2);
  Matrix h = gru_step(layer, Matrix{{1.0, -1.0}}, Matrix{{0.6, -0.2}});
  CHECK(h(0, 0) == doctest::Approx(0.3));
  CHECK(h(0, 1) == doctest::Approx(-0.1));
  Matrix z = gru_step(layer, Matrix{{1.0, -1.0}}, Matrix(1, 2));
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("gru_step matches scalar hand evaluation") {
  auto layer = RecurrentLayer::zeros(CellKind::Gru, 1, 1);
  set_scalar_gate(layer, gru_gate::kUpdate, 0.3, -0.2, 0.1);
  set_scalar_gate(layer, gru_gate::kReset, -0.5, 0.4, 0.0);
  set_scalar_gate(layer, gru_gate::kCandidate, 0.7, 0.6, -0.2);
  Matrix h = gru_step(layer, Matrix{{0.5}}, Matrix{{0.4}});
  // z pre 0.12, r pre 0, candidate pre 0.7 * 0.5 * 0.4 + 0.3 - 0.2
  double z = sigmoid(0.12), cand = std::tanh(0.24);
  CHECK(h(0, 0) == doctest::Approx((1 - z) * 0.4 + z * cand).epsilon(1e-14));
}

TEST_CASE("gru state is a convex combination of previous and candidate") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto layer = RecurrentLayer::zeros(CellKind::Gru, 3, 4);
    for (std::size_t g = 0; g < 3; ++g) {
      for (double& v : layer.input_weights[g].values()) v = rng.uniform(-2, 2);
      for (double& v : layer.hidden_weights[g].values()) v = rng.uniform(-2, 2);
      for (double& v : layer.biases[g].values()) v = rng.uniform(-1, 1);
    }
    Matrix x(1, 3), hp(1, 4);
    for (double& v : x.values()) v = rng.normal();
    for (double& v : hp.values()) v = rng.uniform(-1, 1);
    Matrix h = gru_step(layer, x, hp);
    for (std::size_t j = 0; j < 4; ++j) {
      // the candidate sees the reset of every unit
      std::vector<double> r(4);
      for (std::size_t u = 0; u < 4; ++u) {
        double pre = layer.biases[1](0, u);
        for (std::size_t k = 0; k < 3; ++k) pre += layer.input_weights[1](u, k) * x(0, k);
        for (std::size_t k = 0; k < 4; ++k) pre += layer.hidden_weights[1](u, k) * hp(0, k);
        r[u] = sigmoid(pre);
      }
      double c_pre = layer.biases[2](0, j);
      for (std::size_t k = 0; k < 3; ++k) c_pre += layer.input_weights[2](j, k) * x(0, k);
      for (std::size_t k = 0; k < 4; ++k) c_pre += layer.hidden_weights[2](j, k) * r[k] * hp(0, k);
      double cand = std::tanh(c_pre);
      double lo = std::min(hp(0, j), cand), hi = std::max(hp(0, j), cand);
      CHECK(h(0, j) >= lo - 1e-15);
      CHECK(h(0, j) <= hi + 1e-15);
    }
  }
}

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(Matrix{{0.0, 0.0}}, std::vector<int>{1}) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(Matrix{{1000.0, 0.0}}, std::vector<int>{0}) == doctest::Approx(0.0));
  CHECK(cross_entropy(Matrix{{2.0, 1.0}}, std::vector<int>{1}) == doctest::Approx(1.313262).epsilon(1e-6));
  CHECK_THROWS_AS(cross_entropy(Matrix{{2.0, 1.0}}, std::vector<int>{2}), InputError);
}

TEST_CASE("zero model emits the head bias") {
  RecurrentModel m = zeros_like(small_model(CellKind::Lstm, 1));
  m.head_bias = Matrix{{-0.8169, 1.3229}};
  auto logits = predict_logits(m, batch_of({"BPE", "BTSSXSE", "B"}));
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(logits(r, 0) == -0.8169);
    CHECK(logits(r, 1) == 1.3229);
  }
}

TEST_CASE("repeated sequence gives identical rows") {
  for (CellKind kind : kKinds) {
    auto m = small_model(kind, 3);
    auto logits = predict_logits(m, batch_of({"BTSXSE", "BTSXSE"}));
    CHECK(logits(0, 0) == logits(1, 0));
    CHECK(logits(0, 1) == logits(1, 1));
  }
}

TEST_CASE("out-of-range token ids are rejected") {
  std::vector<std::vector<int>> ids{{66, 200}};
  std::vector<std::size_t> lengths{2};
  CHECK_THROWS_AS(Batch::from_padded(ids, lengths), InputError);
  ids = {{66, -1}};
  CHECK_THROWS_AS(Batch::from_padded(ids, lengths), InputError);
}

TEST_CASE("logits do not depend on batch companions or padding") {
  Rng rng(8);
  for (CellKind kind : kKinds) {
    auto m = small_model(kind, 5);
    auto texts = random_texts(rng, 6, 1, 9);
    auto together = predict_logits(m, batch_of(texts));
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto alone = predict_logits(m, batch_of({texts[i]}));
      CHECK(alone(0, 0) == doctest::Approx(together(i, 0)).epsilon(1e-13));
      CHECK(alone(0, 1) == doctest::Approx(together(i, 1)).epsilon(1e-13));
    }
    std::vector<std::vector<int>> padded(texts.size());
    std::vector<std::size_t> lengths(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (char c : texts[i]) padded[i].push_back(c);
      lengths[i] = texts[i].size();
      for (int k = 0; k < 5; ++k) padded[i].push_back(static_cast<int>(rng.below(128)));
    }
    Batch pb = Batch::from_padded(padded, lengths);
    auto with_pads = predict_logits(m, pb);
    CHECK(with_pads == together);
    std::vector<int> labels = random_labels(rng, texts.size());
    auto g1 = backward(m, forward(m, pb), labels);
    auto g2 = backward(m, forward(m, batch_of(texts)), labels);
    for (std::size_t p = 0; p < g1.size(); ++p) CHECK(g1[p] == g2[p]);
  }
}

TEST_CASE("hidden state shapes are constant over time") {
  auto m = small_model(CellKind::Lstm, 2, 5, {3, 4});
  auto trace = forward(m, batch_of({"BTSSSSSXSE", "BPE", "BPTTVVE"}));
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& lt = trace.layers[l];
    for (std::size_t t = 0; t < lt.hidden.size(); ++t) {
      CHECK(lt.hidden[t].rows() == trace.batch.active(t));
      CHECK(lt.hidden[t].cols() == m.layers[l].hidden_size);
      CHECK(lt.cell[t].same_shape(lt.hidden[t]));
    }
  }
}

TEST_CASE("analytic gradients match finite differences for every cell kind") {
  for (CellKind kind : kKinds) {
    CAPTURE(to_string(kind));
    Rng rng(100 + static_cast<int>(kind));
    for (int b = 0; b < 5; ++b) {
      auto m = small_model(kind, rng.next_u64());
      for (auto* p : m.parameters())
        for (double& v : p->values()) v += 0.1 * rng.normal();
      auto texts = random_texts(rng, 4, 1, 8);
      auto labels = random_labels(rng, texts.size());
      auto res = grad_check(m, batch_of(texts), labels);
      CAPTURE(res.worst);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("gradients of a masked multi-source model match finite differences") {
  for (CellKind kind : kKinds) {
    CAPTURE(to_string(kind));
    Rng rng(7);
    RecurrentModel m;
    m.embedding = Matrix(kVocabSize, 2);
    m.layers.push_back(RecurrentLayer::zeros(kind, 2, 2));
    auto l1 = RecurrentLayer::zeros(kind, 2, 1);
    l1.sources = {0};
    m.layers.push_back(l1);
    auto l2 = RecurrentLayer::zeros(kind, 3, 2);
    l2.sources = {0, 1};
    l2.input_mask = Matrix{{1, 0, 1}, {0, 1, 1}};
    m.layers.push_back(l2);
    m.head_sources = {0, 1, 2};
    m.head_weights = Matrix(kNumClasses, 5);
    m.head_bias = Matrix(1, kNumClasses);
    m.head_mask = Matrix{{0, 1, 0, 1, 1}, {0, 1, 0, 1, 1}};
    m.validate();
    initialize(m, rng);
    for (auto* p : m.parameters())
      for (double& v : p->values()) v += 0.1 * rng.normal();
    m.enforce_structure();
    auto texts = random_texts(rng, 5, 2, 8);
    auto labels = random_labels(rng, texts.size());
    auto res = grad_check(m, batch_of(texts), labels);
    CAPTURE(res.worst);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("saturated correct predictions give zero gradients") {
  auto m = small_model(CellKind::Gru, 9);
  m.head_bias = Matrix{{1000.0, 0.0}};
  auto trace = forward(m, batch_of({"BPE", "BTXSE"}));
  auto g = backward(m, trace, std::vector<int>{0, 0});
  for (const auto& mat : g)
    for (double v : mat.values()) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("duplicating the batch leaves gradients unchanged") {
  Rng rng(15);
  for (CellKind kind : kKinds) {
    auto m = small_model(kind, 6);
    auto texts = random_texts(rng, 4, 2, 8);
    auto labels = random_labels(rng, 4);
    auto g1 = backward(m, forward(m, batch_of(texts)), labels);
    auto texts2 = texts;
    texts2.insert(texts2.end(), texts.begin(), texts.end());
    auto labels2 = labels;
    labels2.insert(labels2.end(), labels.begin(), labels.end());
    auto g2 = backward(m, forward(m, batch_of(texts2)), labels2);
    for (std::size_t p = 0; p < g1.size(); ++p)
      for (std::size_t i = 0; i < g1[p].size(); ++i)
        CHECK(g2[p].values()[i] == doctest::Approx(g1[p].values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("stale trace is a contract violation") {
  auto m = small_model(CellKind::RnnTanh, 1);
  auto trace = forward(m, batch_of({"BPE"}));
  m.head_bias(0, 0) += 1.0;
  CHECK_THROWS_AS(backward(m, trace, std::vector<int>{1}), ContractViolation);
}

TEST_CASE("model validation and parameter layout") {
  auto m = small_model(CellKind::Lstm, 1, 4, {3, 5});
  CHECK(m.embedding.rows() == 128);
  CHECK(m.head_weights.rows() == 2);
  CHECK(m.layers[1].input_size == 3);
  CHECK(m.layers[0].input_size == 4);
  CHECK(m.parameters().size() == m.parameter_names().size());
  CHECK(m.parameters().size() == 1 + 2 * 4 * 3 + 2);
  m.validate();
  m.layers[1].input_weights[2] = Matrix(5, 4);
  CHECK_THROWS_AS(m.validate(), ShapeError);
}

TEST_CASE("initialization ranges") {
  auto m = small_model(CellKind::Gru, 3, 8, {16, 4});
  for (const auto& layer : m.layers) {
    double bound = 1.0 / std::sqrt(static_cast<double>(layer.hidden_size));
    for (std::size_t g = 0; g < 3; ++g) {
      for (double v : layer.input_weights[g].values()) CHECK(std::abs(v) <= bound);
      for (double v : layer.hidden_weights[g].values()) CHECK(std::abs(v) <= bound);
      for (double v : layer.biases[g].values()) CHECK(v == 0.0);
    }
  }
  double bound = 1.0 / std::sqrt(4.0);
  for (double v : m.head_weights.values()) CHECK(std::abs(v) <= bound);
}
