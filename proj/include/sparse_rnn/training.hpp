// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/reber.hpp"
#include "sparse_rnn/recurrent.hpp"

namespace srnn {

/// First and second moment estimates, one pair per parameter matrix.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update. Initializes `state` on first use.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double learning_rate);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};
using History = std::vector<EpochRecord>;

struct TrainOptions {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  /// Called after every optimizer step (after structural masks are enforced).
  std::function<void(RecurrentModel&)> after_step;
  /// Called after each epoch; returning true stops training.
  std::function<bool(const EpochRecord&)> stop_after;
  /// Batches are drawn from length-sorted buckets of this many batches.
  std::size_t bucket_batches = 16;
};

/// Mini-batch Adam on mean cross-entropy using model.hyper's learning rate
/// and batch size; test accuracy measured after each full epoch.
History train(RecurrentModel& model, const reber::Dataset& data, const TrainOptions& options);

/// Same as `train`, continuing from an existing optimizer state.
History train(RecurrentModel& model, const reber::Dataset& data, const TrainOptions& options,
              AdamState& optimizer);

/// Predicted class per sequence (argmax of the logits, ties to class 0).
std::vector<int> predict(const RecurrentModel& model, std::span<const reber::LabeledSequence> seqs);

/// Fraction of correct predictions. Throws DomainError on an empty split.
double evaluate(const RecurrentModel& model, std::span<const reber::LabeledSequence> split);

Batch make_batch(std::span<const reber::LabeledSequence> seqs, std::span<const std::size_t> indices);

/// "epoch,train_loss,test_accuracy" CSV.
std::string history_csv(const History& history, const Provenance& prov);

}  // namespace srnn
