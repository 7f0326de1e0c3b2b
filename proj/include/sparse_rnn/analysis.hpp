// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparse_rnn/numerics.hpp"
#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/randstruct.hpp"
#include "sparse_rnn/rng.hpp"

namespace srnn::analysis {

/// Named feature columns plus a target column.
struct FeatureTable {
  std::vector<std::string> columns;
  Matrix features;  // rows x columns
  std::vector<double> target;

  std::size_t rows() const { return target.size(); }
  std::vector<double> column(std::size_t c) const;
  /// Index of `name`; throws InputError if absent.
  std::size_t column_index(std::string_view name) const;
  /// Keeps the named columns, in the given order.
  FeatureTable select(std::span<const std::string> names) const;
  FeatureTable take_rows(std::span<const std::size_t> rows) const;
  /// Throws ShapeError if the pieces disagree.
  void validate() const;
};

/// Properties as features, test_acc as target.
FeatureTable table_from_records(std::span<const randstruct::ExperimentRecord> records);

/// Product-moment correlation. Needs equal lengths >= 2; DomainError when
/// either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Each feature column mapped to (v - min) / (max - min); constant columns
/// become 0. The target is untouched.
FeatureTable minmax_scale(const FeatureTable& table);

/// Shuffled split with round(ratio * n) training rows. Needs n >= 10.
std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double ratio, Rng& rng);

/// 1 - SS_res / SS_tot. DomainError when `actual` is constant.
double r_squared(std::span<const double> predicted, std::span<const double> actual);

struct RidgeModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  double predict(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;
};

/// Minimizes |X b + c - y|^2 + lambda |b|^2; the intercept c is not penalized.
RidgeModel fit_ridge(const FeatureTable& train, double lambda);

inline constexpr double kRidgeLambdas[] = {1e-3, 1e-2, 1e-1, 1.0, 10.0};

/// Lambda chosen by k-fold cross-validated squared error over kRidgeLambdas
/// (smallest lambda wins ties), then refit on all of `train`.
RidgeModel fit_ridge_cv(const FeatureTable& train, Rng& rng, std::size_t folds = 5);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;
  int left = -1;
  int right = -1;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 2;
  /// Features tried per split; 0 means round(sqrt(features)).
  std::size_t max_features = 0;
  bool bootstrap = true;
};

struct RandomForest {
  std::vector<std::vector<TreeNode>> trees;
  /// Mean impurity decrease per feature, normalized to sum to 1.
  std::vector<double> importances;
  double predict(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;
};

/// Variance-reduction regression trees on bootstrap samples. Each tree draws
/// from its own sub-seed, so the result does not depend on tree order.
RandomForest fit_random_forest(const FeatureTable& train, const ForestOptions& options, Rng& rng);

struct Correlation {
  std::string property;
  double r = 0.0;
};

/// Pearson r of every non-constant feature column against the target, in
/// column order. Constant columns are omitted.
std::vector<Correlation> correlation_report(const FeatureTable& table);

struct Circumstance {
  std::string name;
  std::vector<std::string> columns;
};

/// The four column subsets used for importance studies: all properties,
/// only node and edge counts, everything except those counts, only the
/// variances.
const std::vector<Circumstance>& circumstances();

struct CircumstanceResult {
  std::string name;
  double ridge_r2 = 0.0;
  double forest_r2 = 0.0;
  std::vector<std::pair<std::string, double>> importances;
};

/// For each circumstance: min-max scale, split 0.9/0.1, fit ridge (CV) and
/// a forest, report test R^2 and forest importances. Needs >= 20 rows.
std::vector<CircumstanceResult> importance_circumstances(const FeatureTable& table, Rng& rng,
                                                         const ForestOptions& forest = {});

std::string correlation_csv(std::span<const Correlation> rows, const Provenance& prov);
/// regressor,subset,r_squared
std::string r2_csv(std::span<const CircumstanceResult> results, const Provenance& prov);
/// property,importance
std::string importance_csv(const CircumstanceResult& result, const Provenance& prov);
/// x,y pairs of one property against the target.
std::string scatter_csv(const FeatureTable& table, std::string_view property, const Provenance& prov);

}  // namespace srnn::analysis
