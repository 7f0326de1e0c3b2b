// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/reber.hpp"
#include "sparse_rnn/recurrent.hpp"
#include "sparse_rnn/training.hpp"

namespace srnn::pruning {

/// Which weight role is pruned. For gated cells input-to-hidden is the
/// x-column block and hidden-to-hidden the h-column block of every gate.
enum class PruneTarget { InputToHidden, HiddenToHidden, Both };

std::string_view to_string(PruneTarget target);
/// Accepts "i2h", "h2h", "both".
PruneTarget parse_prune_target(std::string_view name);

/// Names one weight matrix of a recurrent layer.
struct WeightRef {
  std::size_t layer = 0;
  std::size_t gate = 0;
  bool hidden = false;  // true: hidden_weights, false: input_weights

  friend bool operator==(const WeightRef&, const WeightRef&) = default;
};

std::vector<WeightRef> targeted_weights(const RecurrentModel& model, PruneTarget target);
const Matrix& weight(const RecurrentModel& model, const WeightRef& ref);
Matrix& weight(RecurrentModel& model, const WeightRef& ref);
std::string weight_name(const RecurrentModel& model, const WeightRef& ref);

/// Percentile of |w| pooled over all given matrices.
double pooled_threshold(std::span<const Matrix* const> weights, double percent);
/// 0 where |w| < threshold, 1 elsewhere (ties are kept).
Matrix threshold_mask(const Matrix& w, double threshold);

struct MaskSet {
  PruneTarget target = PruneTarget::Both;
  double percent = 0.0;
  /// One pooled threshold, or one per layer in per-layer mode.
  std::vector<double> thresholds;
  std::vector<WeightRef> refs;
  std::vector<Matrix> masks;  // aligned with refs
};

/// Pooled threshold over every targeted matrix of every layer. `percent`
/// must lie in [1, 100].
double compute_threshold(const RecurrentModel& model, double percent, PruneTarget target);
/// One threshold per recurrent layer, each over that layer's targeted matrices.
std::vector<double> compute_layer_thresholds(const RecurrentModel& model, double percent,
                                             PruneTarget target);

MaskSet build_masks(const RecurrentModel& model, double threshold, PruneTarget target);
MaskSet build_layer_masks(const RecurrentModel& model, std::span<const double> thresholds,
                          PruneTarget target);

struct MatrixSparsity {
  std::string name;
  std::size_t zeros = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total); }
};

struct SparsityReport {
  std::vector<MatrixSparsity> matrices;
  std::size_t zeros() const;
  std::size_t total() const;
  double pooled_fraction() const;
};

/// Multiplies every mask into its weight. Throws ShapeError when a mask does
/// not match the model.
SparsityReport apply_masks(RecurrentModel& model, const MaskSet& masks);
/// Zero fraction of the masked matrices without changing anything.
SparsityReport measure_sparsity(const RecurrentModel& model, const MaskSet& masks);

struct RegainResult {
  std::size_t epochs_used = 0;
  bool regained = false;
  History history;
};

struct RetrainOptions {
  std::size_t max_epochs = 10;
  double target_accuracy = 1.0;
  std::uint64_t seed = 0;
  /// Invoked after each retraining epoch.
  std::function<void(const RecurrentModel&, const EpochRecord&)> on_epoch;
};

/// Retrains with a fresh optimizer, re-applying the masks after every step
/// so pruned weights stay exactly zero. Stops at the first epoch whose test
/// accuracy reaches the target; epochs_used is 0 if the model already does.
RegainResult retrain_masked(RecurrentModel& model, const MaskSet& masks,
                            const reber::Dataset& data, const RetrainOptions& options);

struct SweepOptions {
  std::vector<double> percents{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t max_regain_epochs = 10;
  /// Regain target is acc_before minus this.
  double regain_tolerance = 0.01;
  bool per_layer = false;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

struct SweepRow {
  CellKind variant = CellKind::Gru;
  PruneTarget target = PruneTarget::Both;
  double percent = 0.0;
  double threshold = 0.0;  // pooled threshold, or the largest per-layer one
  double zero_fraction = 0.0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  /// Epochs until accuracy regained; -1 when it never did.
  long epochs_to_regain = -1;
  History retrain_history;
};

/// For each percent: clone the trained model, threshold, mask, evaluate,
/// then retrain with the mask held fixed. Rows ordered by percent.
std::vector<SweepRow> prune_sweep(const RecurrentModel& trained, const reber::Dataset& data,
                                  PruneTarget target, const SweepOptions& options);

/// variant,target,percent,threshold,zero_fraction,acc_before,acc_after,epochs_to_regain
std::string sweep_csv(std::span<const SweepRow> rows, const Provenance& prov);

std::string masks_json(const RecurrentModel& model, const MaskSet& masks, const Provenance& prov = {});
MaskSet parse_masks(const RecurrentModel& model, std::string_view text);

}  // namespace srnn::pruning
