// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/pruning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "sparse_rnn/checkpoint.hpp"
#include "sparse_rnn/errors.hpp"

namespace srnn::pruning {

namespace {

constexpr std::string_view kMaskFormat = "sparse-rnn-masks";

bool selects(PruneTarget target, bool hidden) {
  switch (target) {
    case PruneTarget::InputToHidden: return !hidden;
    case PruneTarget::HiddenToHidden: return hidden;
    case PruneTarget::Both: return true;
  }
  return false;
}

void check_percent(double percent) {
  if (!std::isfinite(percent) || percent < 1.0 || percent > 100.0) {
    throw DomainError("prune percent must lie in [1, 100], got " + std::to_string(percent));
  }
}

std::vector<const Matrix*> matrices_for(const RecurrentModel& model,
                                        std::span<const WeightRef> refs) {
  std::vector<const Matrix*> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) out.push_back(&weight(model, ref));
  return out;
}

MatrixSparsity count_zeros(std::string name, const Matrix& w) {
  MatrixSparsity s{std::move(name), 0, w.size()};
  for (double v : w.values()) s.zeros += (v == 0.0);
  return s;
}

void check_mask_shapes(const RecurrentModel& model, const MaskSet& masks) {
  if (masks.refs.size() != masks.masks.size()) {
    throw ShapeError("mask set has " + std::to_string(masks.masks.size()) + " masks for " +
                     std::to_string(masks.refs.size()) + " weights");
  }
  for (std::size_t i = 0; i < masks.refs.size(); ++i) {
    const WeightRef& ref = masks.refs[i];
    if (ref.layer >= model.layers.size() || ref.gate >= model.layers[ref.layer].input_weights.size()) {
      throw ShapeError("mask refers to a weight the model does not have");
    }
    const Matrix& w = weight(model, ref);
    if (!w.same_shape(masks.masks[i])) {
      throw ShapeError("mask " + masks.masks[i].shape_string() + " does not match " +
                       weight_name(model, ref) + " " + w.shape_string());
    }
  }
}

}  // namespace

std::string_view to_string(PruneTarget target) {
  switch (target) {
    case PruneTarget::InputToHidden: return "i2h";
    case PruneTarget::HiddenToHidden: return "h2h";
    case PruneTarget::Both: return "both";
  }
  return "?";
}

PruneTarget parse_prune_target(std::string_view name) {
  if (name == "i2h" || name == "input") return PruneTarget::InputToHidden;
  if (name == "h2h" || name == "hidden") return PruneTarget::HiddenToHidden;
  if (name == "both") return PruneTarget::Both;
  throw InputError("unknown prune target '" + std::string(name) + "' (expected i2h, h2h or both)");
}

std::vector<WeightRef> targeted_weights(const RecurrentModel& model, PruneTarget target) {
  std::vector<WeightRef> refs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t g = 0; g < model.layers[l].input_weights.size(); ++g) {
      if (selects(target, false)) refs.push_back({l, g, false});
      if (selects(target, true)) refs.push_back({l, g, true});
    }
  }
  return refs;
}

const Matrix& weight(const RecurrentModel& model, const WeightRef& ref) {
  const auto& layer = model.layers.at(ref.layer);
  return ref.hidden ? layer.hidden_weights.at(ref.gate) : layer.input_weights.at(ref.gate);
}

Matrix& weight(RecurrentModel& model, const WeightRef& ref) {
  auto& layer = model.layers.at(ref.layer);
  return ref.hidden ? layer.hidden_weights.at(ref.gate) : layer.input_weights.at(ref.gate);
}

std::string weight_name(const RecurrentModel& model, const WeightRef& ref) {
  const auto& layer = model.layers.at(ref.layer);
  return "layer" + std::to_string(ref.layer) + "." + std::string(gate_name(layer.kind, ref.gate)) +
         (ref.hidden ? ".hidden_weights" : ".input_weights");
}

double pooled_threshold(std::span<const Matrix* const> weights, double percent) {
  std::vector<double> magnitudes;
  for (const Matrix* w : weights) {
    for (double v : w->values()) magnitudes.push_back(std::fabs(v));
  }
  if (magnitudes.empty()) throw DomainError("no weights to threshold");
  return percentile(magnitudes, percent);
}

Matrix threshold_mask(const Matrix& w, double threshold) {
  Matrix mask(w.rows(), w.cols(), 1.0);
  auto out = mask.values();
  auto in = w.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (std::fabs(in[i]) < threshold) out[i] = 0.0;
  }
  return mask;
}

double compute_threshold(const RecurrentModel& model, double percent, PruneTarget target) {
  check_percent(percent);
  const auto refs = targeted_weights(model, target);
  if (refs.empty()) throw DomainError("model has no targeted weights");
  const auto mats = matrices_for(model, refs);
  return pooled_threshold(mats, percent);
}

std::vector<double> compute_layer_thresholds(const RecurrentModel& model, double percent,
                                             PruneTarget target) {
  check_percent(percent);
  const auto refs = targeted_weights(model, target);
  if (refs.empty()) throw DomainError("model has no targeted weights");
  std::vector<double> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    std::vector<WeightRef> mine;
    for (const auto& r : refs) {
      if (r.layer == l) mine.push_back(r);
    }
    out.push_back(pooled_threshold(matrices_for(model, mine), percent));
  }
  return out;
}

MaskSet build_masks(const RecurrentModel& model, double threshold, PruneTarget target) {
  const std::vector<double> per_layer(model.layers.size(), threshold);
  MaskSet set = build_layer_masks(model, per_layer, target);
  set.thresholds = {threshold};
  return set;
}

MaskSet build_layer_masks(const RecurrentModel& model, std::span<const double> thresholds,
                          PruneTarget target) {
  if (thresholds.size() != model.layers.size()) {
    throw ShapeError("need one threshold per layer: got " + std::to_string(thresholds.size()) +
                     " for " + std::to_string(model.layers.size()) + " layers");
  }
  for (double t : thresholds) {
    if (std::isnan(t) || t < 0.0) throw DomainError("threshold must be non-negative");
  }
  MaskSet set;
  set.target = target;
  set.thresholds.assign(thresholds.begin(), thresholds.end());
  set.refs = targeted_weights(model, target);
  for (const auto& ref : set.refs) {
    set.masks.push_back(threshold_mask(weight(model, ref), thresholds[ref.layer]));
  }
  return set;
}

std::size_t SparsityReport::zeros() const {
  std::size_t n = 0;
  for (const auto& m : matrices) n += m.zeros;
  return n;
}

std::size_t SparsityReport::total() const {
  std::size_t n = 0;
  for (const auto& m : matrices) n += m.total;
  return n;
}

double SparsityReport::pooled_fraction() const {
  const std::size_t t = total();
  return t == 0 ? 0.0 : static_cast<double>(zeros()) / static_cast<double>(t);
}

SparsityReport apply_masks(RecurrentModel& model, const MaskSet& masks) {
  check_mask_shapes(model, masks);
  for (std::size_t i = 0; i < masks.refs.size(); ++i) {
    apply_mask_in_place(weight(model, masks.refs[i]), masks.masks[i]);
  }
  return measure_sparsity(model, masks);
}

SparsityReport measure_sparsity(const RecurrentModel& model, const MaskSet& masks) {
  check_mask_shapes(model, masks);
  SparsityReport report;
  for (const auto& ref : masks.refs) {
    report.matrices.push_back(count_zeros(weight_name(model, ref), weight(model, ref)));
  }
  return report;
}

RegainResult retrain_masked(RecurrentModel& model, const MaskSet& masks,
                            const reber::Dataset& data, const RetrainOptions& options) {
  check_mask_shapes(model, masks);
  RegainResult result;
  if (evaluate(model, data.test) >= options.target_accuracy) {
    result.regained = true;
    return result;
  }
  TrainOptions train_options;
  train_options.epochs = options.max_epochs;
  train_options.seed = options.seed;
  train_options.after_step = [&masks](RecurrentModel& m) {
    for (std::size_t i = 0; i < masks.refs.size(); ++i) {
      apply_mask_in_place(weight(m, masks.refs[i]), masks.masks[i]);
    }
  };
  train_options.stop_after = [&](const EpochRecord& rec) {
    if (options.on_epoch) options.on_epoch(model, rec);
    return rec.test_accuracy >= options.target_accuracy;
  };
  // A fresh optimizer: stale moments from dense training would push pruned
  // weights around before the mask catches them.
  AdamState optimizer;
  result.history = train(model, data, train_options, optimizer);
  result.epochs_used = result.history.size();
  result.regained = !result.history.empty() &&
                    result.history.back().test_accuracy >= options.target_accuracy;
  return result;
}

std::vector<SweepRow> prune_sweep(const RecurrentModel& trained, const reber::Dataset& data,
                                  PruneTarget target, const SweepOptions& options) {
  for (double p : options.percents) check_percent(p);
  const double acc_before = evaluate(trained, data.test);
  std::vector<SweepRow> rows(options.percents.size());

  auto run_row = [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.variant = trained.kind();
    row.target = target;
    row.percent = options.percents[i];
    row.acc_before = acc_before;

    RecurrentModel model = trained;
    MaskSet masks;
    if (options.per_layer) {
      const auto thresholds = compute_layer_thresholds(model, row.percent, target);
      masks = build_layer_masks(model, thresholds, target);
      row.threshold = *std::max_element(thresholds.begin(), thresholds.end());
    } else {
      row.threshold = compute_threshold(model, row.percent, target);
      masks = build_masks(model, row.threshold, target);
    }
    masks.percent = row.percent;
    row.zero_fraction = apply_masks(model, masks).pooled_fraction();
    row.acc_after = evaluate(model, data.test);

    RetrainOptions retrain;
    retrain.max_epochs = options.max_regain_epochs;
    retrain.target_accuracy = acc_before - options.regain_tolerance;
    retrain.seed = derive_seed(options.seed, i);
    const RegainResult regain = retrain_masked(model, masks, data, retrain);
    row.epochs_to_regain = regain.regained ? static_cast<long>(regain.epochs_used) : -1;
    row.retrain_history = regain.history;
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, rows.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) run_row(i);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) {
        try {
          run_row(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows, const Provenance& prov) {
  std::string out = prov.comment_line() + "\n";
  out += "variant,target,percent,threshold,zero_fraction,acc_before,acc_after,epochs_to_regain\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n",
                  std::string(to_string(r.variant)).c_str(), std::string(to_string(r.target)).c_str(),
                  r.percent, r.threshold, r.zero_fraction, r.acc_before, r.acc_after,
                  r.epochs_to_regain);
    out += buf;
  }
  return out;
}

std::string masks_json(const RecurrentModel& model, const MaskSet& masks, const Provenance& prov) {
  check_mask_shapes(model, masks);
  NamedMatrices tensors;
  for (std::size_t i = 0; i < masks.refs.size(); ++i) {
    tensors.emplace_back(weight_name(model, masks.refs[i]), masks.masks[i]);
  }
  Matrix meta = Matrix::row_vector(masks.thresholds);
  tensors.emplace_back("thresholds", meta);
  tensors.emplace_back("percent", Matrix(1, 1, masks.percent));
  return matrices_json(kMaskFormat, tensors, prov);
}

MaskSet parse_masks(const RecurrentModel& model, std::string_view text) {
  const NamedMatrices tensors = parse_matrices(text, kMaskFormat);
  const auto all = targeted_weights(model, PruneTarget::Both);
  MaskSet set;
  bool any_input = false, any_hidden = false;
  for (const auto& [name, m] : tensors) {
    if (name == "thresholds") {
      set.thresholds.assign(m.values().begin(), m.values().end());
      continue;
    }
    if (name == "percent") {
      if (m.size() != 1) throw InputError("mask file: percent must be a scalar");
      set.percent = m.values()[0];
      continue;
    }
    auto it = std::find_if(all.begin(), all.end(),
                           [&](const WeightRef& r) { return weight_name(model, r) == name; });
    if (it == all.end()) throw InputError("mask file: no weight named '" + name + "' in model");
    for (double v : m.values()) {
      if (v != 0.0 && v != 1.0) throw InputError("mask file: '" + name + "' is not binary");
    }
    if (!m.same_shape(weight(model, *it))) {
      throw InputError("mask file: '" + name + "' has shape " + m.shape_string());
    }
    (it->hidden ? any_hidden : any_input) = true;
    set.refs.push_back(*it);
    set.masks.push_back(m);
  }
  set.target = any_input && any_hidden ? PruneTarget::Both
               : any_hidden            ? PruneTarget::HiddenToHidden
                                       : PruneTarget::InputToHidden;
  return set;
}

}  // namespace srnn::pruning
