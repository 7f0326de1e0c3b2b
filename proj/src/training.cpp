// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sparse_rnn/errors.hpp"

namespace srnn {

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double learning_rate) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.m[i])) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

Batch make_batch(std::span<const reber::LabeledSequence> seqs, std::span<const std::size_t> indices) {
  std::vector<std::string_view> texts;
  texts.reserve(indices.size());
  for (std::size_t i : indices) texts.push_back(seqs[i].text);
  return Batch::from_texts(texts);
}

namespace {

constexpr std::size_t kEvalBatch = 256;

// Shuffled order grouped into length-sorted buckets, then cut into batches
// whose order is shuffled again.
std::vector<std::vector<std::size_t>> epoch_batches(std::span<const reber::LabeledSequence> seqs,
                                                    std::size_t batch_size,
                                                    std::size_t bucket_batches, Rng& rng) {
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  const std::size_t bucket = batch_size * std::max<std::size_t>(bucket_batches, 1);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += bucket) {
    const std::size_t end = std::min(order.size(), begin + bucket);
    auto first = order.begin() + static_cast<std::ptrdiff_t>(begin);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(end);
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return seqs[a].text.size() > seqs[b].text.size();
    });
    for (std::size_t b = begin; b < end; b += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(end, b + batch_size)));
    }
  }
  rng.shuffle(std::span(batches));
  return batches;
}

}  // namespace

History train(RecurrentModel& model, const reber::Dataset& data, const TrainOptions& options) {
  AdamState optimizer;
  return train(model, data, options, optimizer);
}

History train(RecurrentModel& model, const reber::Dataset& data, const TrainOptions& options,
              AdamState& optimizer) {
  History history;
  if (options.epochs == 0) return history;
  if (data.train.empty()) throw DomainError("train: empty training split");
  if (model.hyper.batch_size == 0) throw DomainError("train: batch size must be positive");
  Rng rng(options.seed);
  std::vector<int> labels;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& indices :
         epoch_batches(data.train, model.hyper.batch_size, options.bucket_batches, rng)) {
      Batch batch = make_batch(data.train, indices);
      labels.clear();
      for (std::size_t i : indices) labels.push_back(data.train[i].label);
      ForwardTrace trace = forward(model, batch);
      loss_sum += cross_entropy(trace.logits, labels) * static_cast<double>(indices.size());
      seen += indices.size();
      Gradients grads = backward(model, trace, labels);
      auto params = model.parameters();
      adam_step(params, grads, optimizer, model.hyper.learning_rate);
      model.enforce_structure();
      if (options.after_step) options.after_step(model);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen),
                    data.test.empty() ? 0.0 : evaluate(model, data.test)};
    history.push_back(rec);
    if (options.stop_after && options.stop_after(rec)) break;
  }
  return history;
}

std::vector<int> predict(const RecurrentModel& model, std::span<const reber::LabeledSequence> seqs) {
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return seqs[a].text.size() > seqs[b].text.size();
  });
  std::vector<int> out(seqs.size());
  for (std::size_t begin = 0; begin < order.size(); begin += kEvalBatch) {
    std::span<const std::size_t> idx(order.data() + begin, std::min(kEvalBatch, order.size() - begin));
    Matrix logits = predict_logits(model, make_batch(seqs, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) out[idx[r]] = logits(r, 1) > logits(r, 0) ? 1 : 0;
  }
  return out;
}

double evaluate(const RecurrentModel& model, std::span<const reber::LabeledSequence> split) {
  if (split.empty()) throw DomainError("evaluate: empty split");
  auto predicted = predict(model, split);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) correct += predicted[i] == split[i].label;
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

std::string history_csv(const History& history, const Provenance& prov) {
  std::string out = prov.comment_line() + "\nepoch,train_loss,test_accuracy\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.train_loss, r.test_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace srnn
