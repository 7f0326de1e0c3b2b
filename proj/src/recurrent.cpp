// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/recurrent.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include "sparse_rnn/errors.hpp"

namespace srnn {

namespace {

constexpr std::array<std::string_view, 1> kRnnGates{"h"};
constexpr std::array<std::string_view, 4> kLstmGates{"f", "i", "c", "o"};
constexpr std::array<std::string_view, 3> kGruGates{"z", "r", "h"};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
void map_in_place(Matrix& m, F f) {
  for (double& v : m.values()) v = f(v);
}

Matrix preactivation(const RecurrentLayer& layer, std::size_t gate, const Matrix& x,
                     const Matrix& h) {
  Matrix a(x.rows(), layer.hidden_size);
  add_matmul_nt(x, layer.input_weights[gate], a);
  add_matmul_nt(h, layer.hidden_weights[gate], a);
  add_row_broadcast(layer.biases[gate], a);
  return a;
}

struct StepResult {
  Matrix h;
  Matrix c;
  std::vector<Matrix> gates;
};

StepResult step_impl(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev,
                     const Matrix& c_prev) {
  StepResult out;
  switch (layer.kind) {
    case CellKind::RnnTanh:
    case CellKind::RnnRelu: {
      out.h = preactivation(layer, 0, x, h_prev);
      if (layer.kind == CellKind::RnnTanh) {
        map_in_place(out.h, [](double v) { return std::tanh(v); });
      } else {
        map_in_place(out.h, [](double v) { return v > 0.0 ? v : 0.0; });
      }
      break;
    }
    case CellKind::Lstm: {
      using namespace lstm_gate;
      out.gates.resize(4);
      for (std::size_t g = 0; g < 4; ++g) {
        out.gates[g] = preactivation(layer, g, x, h_prev);
        if (g == kCandidate) {
          map_in_place(out.gates[g], [](double v) { return std::tanh(v); });
        } else {
          map_in_place(out.gates[g], sigmoid);
        }
      }
      const auto f = out.gates[kForget].values();
      const auto i = out.gates[kInput].values();
      const auto cand = out.gates[kCandidate].values();
      const auto o = out.gates[kOutput].values();
      const auto cp = c_prev.values();
      out.c = Matrix(x.rows(), layer.hidden_size);
      out.h = Matrix(x.rows(), layer.hidden_size);
      auto c = out.c.values();
      auto h = out.h.values();
      for (std::size_t k = 0; k < c.size(); ++k) {
        c[k] = f[k] * cp[k] + i[k] * cand[k];
        h[k] = o[k] * std::tanh(c[k]);
      }
      break;
    }
    case CellKind::Gru: {
      using namespace gru_gate;
      out.gates.resize(3);
      out.gates[kUpdate] = preactivation(layer, kUpdate, x, h_prev);
      out.gates[kReset] = preactivation(layer, kReset, x, h_prev);
      map_in_place(out.gates[kUpdate], sigmoid);
      map_in_place(out.gates[kReset], sigmoid);
      Matrix reset_h = elementwise_mul(out.gates[kReset], h_prev);
      out.gates[kCandidate] = preactivation(layer, kCandidate, x, reset_h);
      map_in_place(out.gates[kCandidate], [](double v) { return std::tanh(v); });
      const auto z = out.gates[kUpdate].values();
      const auto cand = out.gates[kCandidate].values();
      const auto hp = h_prev.values();
      out.h = Matrix(x.rows(), layer.hidden_size);
      auto h = out.h.values();
      for (std::size_t k = 0; k < h.size(); ++k) h[k] = (1.0 - z[k]) * hp[k] + z[k] * cand[k];
      break;
    }
  }
  return out;
}

void check_step_shapes(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev) {
  if (x.cols() != layer.input_size || h_prev.cols() != layer.hidden_size ||
      x.rows() != h_prev.rows()) {
    throw ShapeError("step: x " + x.shape_string() + " and h " + h_prev.shape_string() +
                     " do not fit a layer of input " + std::to_string(layer.input_size) +
                     ", hidden " + std::to_string(layer.hidden_size));
  }
}

void check_layer_kind(const RecurrentLayer& layer, std::initializer_list<CellKind> allowed,
                      const char* op) {
  if (std::find(allowed.begin(), allowed.end(), layer.kind) == allowed.end()) {
    throw ContractViolation(std::string(op) + " called on a " + std::string(to_string(layer.kind)) +
                            " layer");
  }
}

}  // namespace

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::RnnTanh: return "rnn_tanh";
    case CellKind::RnnRelu: return "rnn_relu";
    case CellKind::Lstm: return "lstm";
    case CellKind::Gru: return "gru";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "rnn_tanh" || name == "tanh") return CellKind::RnnTanh;
  if (name == "rnn_relu" || name == "relu") return CellKind::RnnRelu;
  if (name == "lstm") return CellKind::Lstm;
  if (name == "gru") return CellKind::Gru;
  throw DomainError("unknown cell kind '" + std::string(name) + "'");
}

std::size_t gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::Lstm: return 4;
    case CellKind::Gru: return 3;
    default: return 1;
  }
}

std::string_view gate_name(CellKind kind, std::size_t gate) {
  switch (kind) {
    case CellKind::Lstm: return kLstmGates.at(gate);
    case CellKind::Gru: return kGruGates.at(gate);
    default: return kRnnGates.at(gate);
  }
}

RecurrentLayer RecurrentLayer::zeros(CellKind kind, std::size_t input_size,
                                     std::size_t hidden_size) {
  if (input_size == 0 || hidden_size == 0) throw ShapeError("layer sizes must be positive");
  RecurrentLayer layer;
  layer.kind = kind;
  layer.input_size = input_size;
  layer.hidden_size = hidden_size;
  for (std::size_t g = 0; g < gate_count(kind); ++g) {
    layer.input_weights.emplace_back(hidden_size, input_size);
    layer.hidden_weights.emplace_back(hidden_size, hidden_size);
    layer.biases.emplace_back(1, hidden_size);
  }
  return layer;
}

Matrix RecurrentLayer::gate_matrix(std::size_t gate) const {
  Matrix out(hidden_size, hidden_size + input_size);
  for (std::size_t r = 0; r < hidden_size; ++r) {
    auto dst = out.row(r);
    auto h = hidden_weights.at(gate).row(r);
    auto x = input_weights.at(gate).row(r);
    std::copy(h.begin(), h.end(), dst.begin());
    std::copy(x.begin(), x.end(), dst.begin() + static_cast<std::ptrdiff_t>(hidden_size));
  }
  return out;
}

CellKind RecurrentModel::kind() const {
  if (layers.empty()) throw ContractViolation("model has no recurrent layers");
  return layers.front().kind;
}

std::size_t RecurrentModel::source_width(int source) const {
  if (source == kEmbeddingSource) return embedding.cols();
  return layers.at(static_cast<std::size_t>(source)).hidden_size;
}

std::size_t RecurrentModel::head_input_size() const {
  std::size_t n = 0;
  for (int s : head_sources) n += source_width(s);
  return n;
}

std::vector<Matrix*> RecurrentModel::parameters() {
  std::vector<Matrix*> out{&embedding};
  for (auto& layer : layers) {
    for (std::size_t g = 0; g < layer.input_weights.size(); ++g) {
      out.push_back(&layer.input_weights[g]);
      out.push_back(&layer.hidden_weights[g]);
      out.push_back(&layer.biases[g]);
    }
  }
  out.push_back(&head_weights);
  out.push_back(&head_bias);
  return out;
}

std::vector<const Matrix*> RecurrentModel::parameters() const {
  auto mutable_ptrs = const_cast<RecurrentModel*>(this)->parameters();
  return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

std::vector<std::string> RecurrentModel::parameter_names() const {
  std::vector<std::string> names{"embedding"};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    for (std::size_t g = 0; g < layer.input_weights.size(); ++g) {
      const std::string prefix = "layer" + std::to_string(l) + "." + std::string(gate_name(layer.kind, g));
      names.push_back(prefix + ".input_weights");
      names.push_back(prefix + ".hidden_weights");
      names.push_back(prefix + ".bias");
    }
  }
  names.emplace_back("head.weights");
  names.emplace_back("head.bias");
  return names;
}

std::size_t RecurrentModel::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += p->size();
  return n;
}

void RecurrentModel::enforce_structure() {
  for (auto& layer : layers) {
    if (layer.input_mask.empty()) continue;
    for (auto& w : layer.input_weights) apply_mask_in_place(w, layer.input_mask);
  }
  if (!head_mask.empty()) apply_mask_in_place(head_weights, head_mask);
}

void RecurrentModel::validate() const {
  auto fail = [](const std::string& what) { throw ShapeError("model: " + what); };
  if (embedding.rows() != kVocabSize || embedding.cols() == 0) {
    fail("embedding must be 128 x d, got " + embedding.shape_string());
  }
  if (layers.empty()) fail("no recurrent layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::size_t gates = gate_count(layer.kind);
    if (layer.kind != layers.front().kind) fail("mixed cell kinds");
    std::size_t width = 0;
    for (int s : layer.sources) {
      if (s != kEmbeddingSource && (s < 0 || static_cast<std::size_t>(s) >= l)) {
        fail("layer " + std::to_string(l) + " reads from a later layer");
      }
      width += source_width(s);
    }
    if (layer.sources.empty() || width != layer.input_size) {
      fail("layer " + std::to_string(l) + " input size does not match its sources");
    }
    if (layer.input_weights.size() != gates || layer.hidden_weights.size() != gates ||
        layer.biases.size() != gates) {
      fail("layer " + std::to_string(l) + " has the wrong number of gates");
    }
    for (std::size_t g = 0; g < gates; ++g) {
      if (layer.input_weights[g].rows() != layer.hidden_size ||
          layer.input_weights[g].cols() != layer.input_size ||
          layer.hidden_weights[g].rows() != layer.hidden_size ||
          layer.hidden_weights[g].cols() != layer.hidden_size ||
          layer.biases[g].rows() != 1 || layer.biases[g].cols() != layer.hidden_size) {
        fail("layer " + std::to_string(l) + " gate " + std::to_string(g) + " has bad shapes");
      }
    }
    if (!layer.input_mask.empty() &&
        (layer.input_mask.rows() != layer.hidden_size || layer.input_mask.cols() != layer.input_size)) {
      fail("layer " + std::to_string(l) + " input mask shape");
    }
  }
  if (head_sources.empty()) fail("head has no sources");
  for (int s : head_sources) {
    if (s < 0 || static_cast<std::size_t>(s) >= layers.size()) fail("head source out of range");
  }
  if (head_weights.rows() != kNumClasses || head_weights.cols() != head_input_size()) {
    fail("head weights " + head_weights.shape_string());
  }
  if (head_bias.rows() != 1 || head_bias.cols() != kNumClasses) fail("head bias");
  if (!head_mask.empty() && !head_mask.same_shape(head_weights)) fail("head mask shape");
}

std::uint64_t RecurrentModel::fingerprint() const {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (const Matrix* p : parameters()) {
    h = mix64(h ^ p->size());
    for (double v : p->values()) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

RecurrentModel zeros_like(const RecurrentModel& model) {
  RecurrentModel out = model;
  for (Matrix* p : out.parameters()) p->fill(0.0);
  return out;
}

void initialize(RecurrentModel& model, Rng& rng) {
  for (double& v : model.embedding.values()) v = rng.normal();
  for (auto& layer : model.layers) {
    const double k = 1.0 / std::sqrt(static_cast<double>(layer.hidden_size));
    for (std::size_t g = 0; g < layer.input_weights.size(); ++g) {
      for (double& v : layer.input_weights[g].values()) v = rng.uniform(-k, k);
      for (double& v : layer.hidden_weights[g].values()) v = rng.uniform(-k, k);
      layer.biases[g].fill(0.0);
    }
  }
  const double k = 1.0 / std::sqrt(static_cast<double>(model.head_weights.cols()));
  for (double& v : model.head_weights.values()) v = rng.uniform(-k, k);
  model.head_bias.fill(0.0);
  model.enforce_structure();
}

RecurrentModel make_stacked_model(CellKind kind, std::size_t embedding_dim,
                                  std::span<const std::size_t> hidden_sizes, Rng& rng) {
  if (hidden_sizes.empty()) throw ShapeError("make_stacked_model: no layers");
  RecurrentModel model;
  model.embedding = Matrix(kVocabSize, embedding_dim);
  std::size_t input = embedding_dim;
  for (std::size_t l = 0; l < hidden_sizes.size(); ++l) {
    auto layer = RecurrentLayer::zeros(kind, input, hidden_sizes[l]);
    layer.sources = {l == 0 ? kEmbeddingSource : static_cast<int>(l - 1)};
    model.layers.push_back(std::move(layer));
    input = hidden_sizes[l];
  }
  model.head_sources = {static_cast<int>(hidden_sizes.size() - 1)};
  model.head_weights = Matrix(kNumClasses, input);
  model.head_bias = Matrix(1, kNumClasses);
  initialize(model, rng);
  return model;
}

Matrix rnn_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev) {
  check_layer_kind(layer, {CellKind::RnnTanh, CellKind::RnnRelu}, "rnn_step");
  check_step_shapes(layer, x, h_prev);
  return step_impl(layer, x, h_prev, Matrix{}).h;
}

LstmState lstm_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev,
                    const Matrix& c_prev) {
  check_layer_kind(layer, {CellKind::Lstm}, "lstm_step");
  check_step_shapes(layer, x, h_prev);
  if (!c_prev.same_shape(h_prev)) throw ShapeError("lstm_step: cell state " + c_prev.shape_string());
  auto r = step_impl(layer, x, h_prev, c_prev);
  return {std::move(r.h), std::move(r.c)};
}

Matrix gru_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev) {
  check_layer_kind(layer, {CellKind::Gru}, "gru_step");
  check_step_shapes(layer, x, h_prev);
  return step_impl(layer, x, h_prev, Matrix{}).h;
}

// ---------------------------------------------------------------------------
// Batches

Batch Batch::from_padded(std::span<const std::vector<int>> ids,
                         std::span<const std::size_t> lengths) {
  if (ids.size() != lengths.size()) throw ShapeError("Batch: ids and lengths differ in count");
  if (ids.empty()) throw DomainError("Batch: empty batch");
  Batch b;
  b.order_.resize(ids.size());
  std::iota(b.order_.begin(), b.order_.end(), std::size_t{0});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (lengths[i] == 0 || lengths[i] > ids[i].size()) {
      throw InputError("Batch: sequence " + std::to_string(i) + " has invalid length");
    }
    for (std::size_t t = 0; t < lengths[i]; ++t) {
      if (ids[i][t] < 0 || ids[i][t] >= static_cast<int>(kVocabSize)) {
        throw InputError("Batch: token id " + std::to_string(ids[i][t]) + " outside [0,127]");
      }
    }
  }
  std::stable_sort(b.order_.begin(), b.order_.end(),
                   [&](std::size_t a, std::size_t c) { return lengths[a] > lengths[c]; });
  b.lengths_.resize(ids.size());
  for (std::size_t s = 0; s < ids.size(); ++s) b.lengths_[s] = lengths[b.order_[s]];
  b.tokens_.resize(b.lengths_.front());
  for (std::size_t t = 0; t < b.tokens_.size(); ++t) {
    for (std::size_t s = 0; s < ids.size() && b.lengths_[s] > t; ++s) {
      b.tokens_[t].push_back(static_cast<std::uint8_t>(ids[b.order_[s]][t]));
    }
  }
  return b;
}

Batch Batch::from_texts(std::span<const std::string_view> texts) {
  std::vector<std::vector<int>> ids(texts.size());
  std::vector<std::size_t> lengths(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (char c : texts[i]) ids[i].push_back(static_cast<unsigned char>(c));
    lengths[i] = texts[i].size();
  }
  return from_padded(ids, lengths);
}

// ---------------------------------------------------------------------------
// Forward

namespace {

Matrix assemble_input(const RecurrentModel& model, const RecurrentLayer& layer, const Batch& batch,
                      const std::vector<LayerTrace>& traces, std::size_t t) {
  const std::size_t n = batch.active(t);
  Matrix x(n, layer.input_size);
  std::size_t offset = 0;
  for (int src : layer.sources) {
    const std::size_t width = model.source_width(src);
    for (std::size_t r = 0; r < n; ++r) {
      auto from = src == kEmbeddingSource
                      ? model.embedding.row(batch.tokens_at(t)[r])
                      : traces[static_cast<std::size_t>(src)].hidden[t].row(r);
      std::copy(from.begin(), from.end(), x.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += width;
  }
  return x;
}

ForwardTrace run_forward(const RecurrentModel& model, const Batch& batch, bool record) {
  model.validate();
  ForwardTrace trace;
  trace.batch = batch;
  trace.model_fingerprint = record ? model.fingerprint() : 0;
  const std::size_t steps = batch.steps();
  const std::size_t bsz = batch.size();
  trace.layers.resize(model.layers.size());

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    auto& lt = trace.layers[l];
    lt.hidden.resize(steps);
    if (record) {
      lt.inputs.resize(steps);
      lt.gates.resize(steps);
      if (layer.kind == CellKind::Lstm) lt.cell.resize(steps);
    }
    Matrix c_state;
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t n = batch.active(t);
      Matrix x = assemble_input(model, layer, batch, trace.layers, t);
      Matrix h_prev = t == 0 ? Matrix(n, layer.hidden_size) : top_rows(lt.hidden[t - 1], n);
      Matrix c_prev;
      if (layer.kind == CellKind::Lstm) {
        c_prev = t == 0 ? Matrix(n, layer.hidden_size) : top_rows(c_state, n);
      }
      auto step = step_impl(layer, x, h_prev, c_prev);
      lt.hidden[t] = std::move(step.h);
      if (layer.kind == CellKind::Lstm) c_state = step.c;
      if (record) {
        lt.inputs[t] = std::move(x);
        lt.gates[t] = std::move(step.gates);
        if (layer.kind == CellKind::Lstm) lt.cell[t] = std::move(step.c);
      }
    }
    lt.final_hidden = Matrix(bsz, layer.hidden_size);
    for (std::size_t s = 0; s < bsz; ++s) {
      auto from = lt.hidden[batch.length(s) - 1].row(s);
      std::copy(from.begin(), from.end(), lt.final_hidden.row(s).begin());
    }
  }

  trace.head_input = Matrix(bsz, model.head_input_size());
  std::size_t offset = 0;
  for (int src : model.head_sources) {
    const auto& fh = trace.layers[static_cast<std::size_t>(src)].final_hidden;
    for (std::size_t s = 0; s < bsz; ++s) {
      auto from = fh.row(s);
      std::copy(from.begin(), from.end(),
                trace.head_input.row(s).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += fh.cols();
  }
  Matrix sorted_logits(bsz, kNumClasses);
  add_matmul_nt(trace.head_input, model.head_weights, sorted_logits);
  add_row_broadcast(model.head_bias, sorted_logits);
  trace.logits = Matrix(bsz, kNumClasses);
  for (std::size_t s = 0; s < bsz; ++s) {
    auto from = sorted_logits.row(s);
    std::copy(from.begin(), from.end(), trace.logits.row(batch.original(s)).begin());
  }
  return trace;
}

}  // namespace

ForwardTrace forward(const RecurrentModel& model, const Batch& batch) {
  return run_forward(model, batch, true);
}

Matrix predict_logits(const RecurrentModel& model, const Batch& batch) {
  return run_forward(model, batch, false).logits;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.cols() != kNumClasses) throw ShapeError("cross_entropy: logits " + logits.shape_string());
  if (labels.size() != logits.rows() || labels.empty()) {
    throw InputError("cross_entropy: label count does not match logits");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || y >= static_cast<int>(kNumClasses)) throw InputError("cross_entropy: label out of range");
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    total += -(row[static_cast<std::size_t>(y)] - mx - std::log(sum));
  }
  return total / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// Backward

namespace {

void accumulate_gate(RecurrentLayer& grads, std::size_t gate, const Matrix& d_pre,
                     const Matrix& x, const Matrix* h_used) {
  add_matmul_tn(d_pre, x, grads.input_weights[gate]);
  if (h_used != nullptr) add_matmul_tn(d_pre, *h_used, grads.hidden_weights[gate]);
  add_column_sums(d_pre, grads.biases[gate]);
}

Matrix hadamard(const Matrix& a, const Matrix& b) { return elementwise_mul(a, b); }

/// Runs one layer backward through time. `d_hidden[t]` holds dL/dh_t coming
/// from the head and from later layers; `scatter(t, dx)` receives dL/dx_t.
template <typename Scatter>
void layer_backward(const RecurrentLayer& layer, const LayerTrace& lt,
                    std::vector<Matrix>& d_hidden, RecurrentLayer& grads, Scatter&& scatter) {
  const std::size_t steps = lt.hidden.size();
  const std::size_t hs = layer.hidden_size;
  Matrix dh_carry;  // dL/dh_t arriving through the recurrence from step t+1
  Matrix dc_carry;  // dL/dC_t arriving from step t+1 (LSTM)
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix& x = lt.inputs[t];
    const std::size_t n = x.rows();
    Matrix dh = std::move(d_hidden[t]);
    if (!dh_carry.empty()) add_in_place(dh, dh_carry);
    const bool has_prev = t > 0;
    const Matrix h_prev = has_prev ? top_rows(lt.hidden[t - 1], n) : Matrix(n, hs);
    Matrix dx(n, layer.input_size);
    Matrix dh_prev(n, hs);

    switch (layer.kind) {
      case CellKind::RnnTanh:
      case CellKind::RnnRelu: {
        Matrix d_pre = dh;
        auto d = d_pre.values();
        auto h = lt.hidden[t].values();
        if (layer.kind == CellKind::RnnTanh) {
          for (std::size_t k = 0; k < d.size(); ++k) d[k] *= 1.0 - h[k] * h[k];
        } else {
          for (std::size_t k = 0; k < d.size(); ++k) d[k] = h[k] > 0.0 ? d[k] : 0.0;
        }
        accumulate_gate(grads, 0, d_pre, x, has_prev ? &h_prev : nullptr);
        add_matmul(d_pre, layer.input_weights[0], dx);
        add_matmul(d_pre, layer.hidden_weights[0], dh_prev);
        break;
      }
      case CellKind::Lstm: {
        using namespace lstm_gate;
        const auto& gates = lt.gates[t];
        const auto f = gates[kForget].values();
        const auto i = gates[kInput].values();
        const auto g = gates[kCandidate].values();
        const auto o = gates[kOutput].values();
        const auto c = lt.cell[t].values();
        const Matrix c_prev = has_prev ? top_rows(lt.cell[t - 1], n) : Matrix(n, hs);
        const auto cp = c_prev.values();
        Matrix dc(n, hs);
        if (!dc_carry.empty()) add_in_place(dc, dc_carry);
        std::array<Matrix, 4> d_pre{Matrix(n, hs), Matrix(n, hs), Matrix(n, hs), Matrix(n, hs)};
        auto dcv = dc.values();
        const auto dhv = dh.values();
        Matrix dc_next(n, hs);
        auto dcn = dc_next.values();
        for (std::size_t k = 0; k < dcv.size(); ++k) {
          const double tc = std::tanh(c[k]);
          dcv[k] += dhv[k] * o[k] * (1.0 - tc * tc);
          d_pre[kOutput].values()[k] = dhv[k] * tc * o[k] * (1.0 - o[k]);
          d_pre[kForget].values()[k] = dcv[k] * cp[k] * f[k] * (1.0 - f[k]);
          d_pre[kInput].values()[k] = dcv[k] * g[k] * i[k] * (1.0 - i[k]);
          d_pre[kCandidate].values()[k] = dcv[k] * i[k] * (1.0 - g[k] * g[k]);
          dcn[k] = dcv[k] * f[k];
        }
        for (std::size_t gi = 0; gi < 4; ++gi) {
          accumulate_gate(grads, gi, d_pre[gi], x, has_prev ? &h_prev : nullptr);
          add_matmul(d_pre[gi], layer.input_weights[gi], dx);
          add_matmul(d_pre[gi], layer.hidden_weights[gi], dh_prev);
        }
        dc_carry = std::move(dc_next);
        break;
      }
      case CellKind::Gru: {
        using namespace gru_gate;
        const auto& gates = lt.gates[t];
        const auto z = gates[kUpdate].values();
        const auto r = gates[kReset].values();
        const auto cand = gates[kCandidate].values();
        const auto hp = h_prev.values();
        const auto dhv = dh.values();
        Matrix d_update(n, hs), d_cand(n, hs);
        auto dz = d_update.values();
        auto dcand = d_cand.values();
        auto dhp = dh_prev.values();
        for (std::size_t k = 0; k < dz.size(); ++k) {
          dz[k] = dhv[k] * (cand[k] - hp[k]) * z[k] * (1.0 - z[k]);
          dcand[k] = dhv[k] * z[k] * (1.0 - cand[k] * cand[k]);
          dhp[k] = dhv[k] * (1.0 - z[k]);
        }
        const Matrix reset_h = hadamard(gates[kReset], h_prev);
        accumulate_gate(grads, kCandidate, d_cand, x, has_prev ? &reset_h : nullptr);
        Matrix d_reset_h(n, hs);
        add_matmul(d_cand, layer.hidden_weights[kCandidate], d_reset_h);
        Matrix d_reset(n, hs);
        auto dr = d_reset.values();
        const auto drh = d_reset_h.values();
        for (std::size_t k = 0; k < dr.size(); ++k) {
          dr[k] = drh[k] * hp[k] * r[k] * (1.0 - r[k]);
          dhp[k] += drh[k] * r[k];
        }
        accumulate_gate(grads, kUpdate, d_update, x, has_prev ? &h_prev : nullptr);
        accumulate_gate(grads, kReset, d_reset, x, has_prev ? &h_prev : nullptr);
        add_matmul(d_update, layer.input_weights[kUpdate], dx);
        add_matmul(d_reset, layer.input_weights[kReset], dx);
        add_matmul(d_cand, layer.input_weights[kCandidate], dx);
        add_matmul(d_update, layer.hidden_weights[kUpdate], dh_prev);
        add_matmul(d_reset, layer.hidden_weights[kReset], dh_prev);
        break;
      }
    }
    scatter(t, dx);
    dh_carry = has_prev ? std::move(dh_prev) : Matrix{};
  }
}

}  // namespace

Gradients backward(const RecurrentModel& model, const ForwardTrace& trace,
                   std::span<const int> labels) {
  if (trace.model_fingerprint != model.fingerprint()) {
    throw ContractViolation("backward: trace was computed with different parameters");
  }
  const Batch& batch = trace.batch;
  const std::size_t bsz = batch.size();
  if (labels.size() != bsz) throw InputError("backward: label count does not match batch");
  if (trace.layers.size() != model.layers.size() ||
      (!trace.layers.empty() && trace.layers.front().inputs.size() != batch.steps())) {
    throw ContractViolation("backward: trace does not match the model");
  }

  RecurrentModel grads = zeros_like(model);

  // dL/dlogits for the mean loss, in sorted slot order.
  Matrix d_logits(bsz, kNumClasses);
  for (std::size_t s = 0; s < bsz; ++s) {
    const std::size_t orig = batch.original(s);
    const int y = labels[orig];
    if (y < 0 || y >= static_cast<int>(kNumClasses)) throw InputError("backward: label out of range");
    const auto row = trace.logits.row(orig);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double p = std::exp(row[k] - mx) / sum;
      d_logits(s, k) = (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) / static_cast<double>(bsz);
    }
  }
  add_matmul_tn(d_logits, trace.head_input, grads.head_weights);
  add_column_sums(d_logits, grads.head_bias);
  Matrix d_head_input(bsz, model.head_input_size());
  add_matmul(d_logits, model.head_weights, d_head_input);

  std::vector<std::vector<Matrix>> d_hidden(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    d_hidden[l].reserve(batch.steps());
    for (std::size_t t = 0; t < batch.steps(); ++t) {
      d_hidden[l].emplace_back(batch.active(t), model.layers[l].hidden_size);
    }
  }
  std::size_t offset = 0;
  for (int src : model.head_sources) {
    const auto l = static_cast<std::size_t>(src);
    const std::size_t hs = model.layers[l].hidden_size;
    for (std::size_t s = 0; s < bsz; ++s) {
      auto dst = d_hidden[l][batch.length(s) - 1].row(s);
      auto from = d_head_input.row(s);
      for (std::size_t k = 0; k < hs; ++k) dst[k] += from[offset + k];
    }
    offset += hs;
  }

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    auto scatter = [&](std::size_t t, const Matrix& dx) {
      std::size_t off = 0;
      for (int src : layer.sources) {
        const std::size_t width = model.source_width(src);
        for (std::size_t r = 0; r < dx.rows(); ++r) {
          auto dst = src == kEmbeddingSource
                         ? grads.embedding.row(batch.tokens_at(t)[r])
                         : d_hidden[static_cast<std::size_t>(src)][t].row(r);
          auto from = dx.row(r);
          for (std::size_t k = 0; k < width; ++k) dst[k] += from[off + k];
        }
        off += width;
      }
    };
    layer_backward(layer, trace.layers[l], d_hidden[l], grads.layers[l], scatter);
  }

  Gradients out;
  for (Matrix* p : grads.parameters()) out.push_back(std::move(*p));
  return out;
}

}  // namespace srnn
