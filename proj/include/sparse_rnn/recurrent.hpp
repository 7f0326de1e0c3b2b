// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparse_rnn/numerics.hpp"
#include "sparse_rnn/rng.hpp"

namespace srnn {

enum class CellKind { RnnTanh, RnnRelu, Lstm, Gru };

std::string_view to_string(CellKind kind);
/// Accepts "rnn_tanh"/"tanh", "rnn_relu"/"relu", "lstm", "gru".
CellKind parse_cell_kind(std::string_view name);

/// Number of gate blocks: 1 for plain RNNs, 4 for LSTM (f, i, C, o), 3 for
/// GRU (z, r, h).
std::size_t gate_count(CellKind kind);
std::string_view gate_name(CellKind kind, std::size_t gate);

inline constexpr std::size_t kVocabSize = 128;
inline constexpr std::size_t kNumClasses = 2;
inline constexpr int kEmbeddingSource = -1;

namespace lstm_gate {
inline constexpr std::size_t kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3;
}
namespace gru_gate {
inline constexpr std::size_t kUpdate = 0, kReset = 1, kCandidate = 2;
}

/// One recurrent layer. Each gate's weight acting on [h_{t-1}, x_t] is kept
/// as two blocks: `hidden_weights[g]` (the h columns) and `input_weights[g]`
/// (the x columns). For plain RNNs the single gate holds U, W and b_h.
struct RecurrentLayer {
  CellKind kind = CellKind::RnnTanh;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::vector<Matrix> input_weights;   // per gate: hidden x input
  std::vector<Matrix> hidden_weights;  // per gate: hidden x hidden
  std::vector<Matrix> biases;          // per gate: 1 x hidden
  /// Concatenated to form x_t: kEmbeddingSource or the index of an earlier layer.
  std::vector<int> sources{kEmbeddingSource};
  /// Optional 0/1 mask over input_weights (same for every gate). Empty = dense.
  Matrix input_mask;

  static RecurrentLayer zeros(CellKind kind, std::size_t input_size, std::size_t hidden_size);

  /// The full gate matrix [W_h | W_x] of shape hidden x (hidden + input).
  Matrix gate_matrix(std::size_t gate) const;
};

struct Hyper {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
};

/// Embedding -> recurrent layers -> linear head over the final hidden state.
struct RecurrentModel {
  Matrix embedding;  // kVocabSize x embedding_dim
  std::vector<RecurrentLayer> layers;
  /// Layers whose final states are concatenated into the head input.
  std::vector<int> head_sources;
  Matrix head_weights;  // kNumClasses x head_input_size
  Matrix head_bias;     // 1 x kNumClasses
  /// Optional 0/1 mask over head_weights. Empty = dense.
  Matrix head_mask;
  Hyper hyper;

  CellKind kind() const;
  std::size_t embedding_dim() const { return embedding.cols(); }
  std::size_t source_width(int source) const;
  std::size_t head_input_size() const;

  /// Every trainable matrix in a fixed order: embedding, then per layer and
  /// gate (input weights, hidden weights, bias), then head weights and bias.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  /// Multiplies structural masks into their weights.
  void enforce_structure();
  /// Throws ShapeError on any inconsistent shape.
  void validate() const;
  /// Hash of all parameter bits; detects traces computed on stale weights.
  std::uint64_t fingerprint() const;
};

/// Same layout as RecurrentModel::parameters().
using Gradients = std::vector<Matrix>;

/// A copy of `model` with every parameter set to zero.
RecurrentModel zeros_like(const RecurrentModel& model);

/// Embedding N(0,1); recurrent weights U(-1/sqrt(H), 1/sqrt(H)) with H the
/// layer's hidden size; head U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0.
void initialize(RecurrentModel& model, Rng& rng);

/// Embedding -> stacked layers of the given sizes -> head on the last layer.
RecurrentModel make_stacked_model(CellKind kind, std::size_t embedding_dim,
                                  std::span<const std::size_t> hidden_sizes, Rng& rng);

// Single time steps. Rows of x and h are batch entries.
Matrix rnn_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev);

struct LstmState {
  Matrix h;
  Matrix c;
};
LstmState lstm_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev,
                    const Matrix& c_prev);

Matrix gru_step(const RecurrentLayer& layer, const Matrix& x, const Matrix& h_prev);

/// A batch of id sequences stored time-major with rows sorted by descending
/// length, so the rows active at step t are always a prefix.
class Batch {
 public:
  /// `ids[i]` is a padded row; only its first `lengths[i]` entries are used.
  static Batch from_padded(std::span<const std::vector<int>> ids,
                           std::span<const std::size_t> lengths);
  static Batch from_texts(std::span<const std::string_view> texts);

  std::size_t size() const { return order_.size(); }
  std::size_t steps() const { return tokens_.size(); }
  std::size_t active(std::size_t t) const { return tokens_[t].size(); }
  /// Original row index of sorted slot `slot`.
  std::size_t original(std::size_t slot) const { return order_[slot]; }
  std::size_t length(std::size_t slot) const { return lengths_[slot]; }
  const std::vector<std::uint8_t>& tokens_at(std::size_t t) const { return tokens_[t]; }

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> lengths_;
  std::vector<std::vector<std::uint8_t>> tokens_;
};

struct LayerTrace {
  std::vector<Matrix> inputs;               // x_t, active rows only
  std::vector<Matrix> hidden;               // h_t
  std::vector<Matrix> cell;                 // C_t (LSTM only)
  std::vector<std::vector<Matrix>> gates;   // activated gates per step
  Matrix final_hidden;                      // batch x hidden, sorted slots
};

/// Everything backward() needs; produced by forward().
struct ForwardTrace {
  Batch batch;
  std::vector<LayerTrace> layers;
  Matrix head_input;  // batch x head_input_size, sorted slots
  Matrix logits;      // batch x kNumClasses, original row order
  std::uint64_t model_fingerprint = 0;
};

ForwardTrace forward(const RecurrentModel& model, const Batch& batch);
/// Logits only; skips the gate caches.
Matrix predict_logits(const RecurrentModel& model, const Batch& batch);

/// Mean over rows of -log softmax(logits)[label].
double cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Exact gradients of the mean cross-entropy with respect to every parameter.
/// Throws ContractViolation when the model changed since `trace` was made.
Gradients backward(const RecurrentModel& model, const ForwardTrace& trace,
                   std::span<const int> labels);

}  // namespace srnn
