// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/metrics.hpp"

namespace srnn::analysis {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// One regression tree grown by exhaustive threshold search on a random
// feature subset at every node.
class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& t, const ForestOptions& o, std::size_t mtry, Rng& rng)
      : table_(t), options_(o), mtry_(mtry), rng_(rng), gain_(t.columns.size(), 0.0) {}

  std::vector<TreeNode> build(std::vector<std::size_t> samples) {
    grow(samples, 0);
    return std::move(nodes_);
  }
  const std::vector<double>& gain() const { return gain_; }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double decrease = 0.0;
    std::size_t left_count = 0;
  };

  int grow(std::vector<std::size_t>& samples, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    for (std::size_t s : samples) sum += table_.target[s];
    nodes_[id].value = sum / static_cast<double>(samples.size());
    if (depth >= options_.max_depth || samples.size() < 2 * options_.min_samples_leaf) return id;

    const Split best = find_split(samples);
    if (best.feature < 0) return id;
    gain_[static_cast<std::size_t>(best.feature)] += best.decrease;

    const auto f = static_cast<std::size_t>(best.feature);
    auto mid = std::stable_partition(samples.begin(), samples.end(), [&](std::size_t s) {
      return table_.features(s, f) <= best.threshold;
    });
    std::vector<std::size_t> left(samples.begin(), mid), right(mid, samples.end());
    nodes_[id].feature = best.feature;
    nodes_[id].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& samples) {
    const std::size_t n_features = table_.columns.size();
    std::vector<std::size_t> features(n_features);
    std::iota(features.begin(), features.end(), 0);
    rng_.shuffle(std::span<std::size_t>(features));
    features.resize(std::min(mtry_, n_features));
    std::sort(features.begin(), features.end());

    const std::size_t n = samples.size();
    double total = 0.0, total_sq = 0.0;
    for (std::size_t s : samples) {
      total += table_.target[s];
      total_sq += table_.target[s] * table_.target[s];
    }
    const double parent_sse = total_sq - total * total / static_cast<double>(n);

    Split best;
    std::vector<std::pair<double, double>> column(n);
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < n; ++i) column[i] = {table_.features(samples[i], f), table_.target[samples[i]]};
      std::sort(column.begin(), column.end());
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += column[i].second;
        left_sq += column[i].second * column[i].second;
        const std::size_t nl = i + 1, nr = n - nl;
        if (column[i].first == column[i + 1].first) continue;
        if (nl < options_.min_samples_leaf || nr < options_.min_samples_leaf) continue;
        const double right_sum = total - left_sum, right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                           (right_sq - right_sum * right_sum / static_cast<double>(nr));
        const double decrease = parent_sse - sse;
        if (decrease > best.decrease + 1e-12 * std::max(1.0, parent_sse)) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (column[i].first + column[i + 1].first);
          best.decrease = decrease;
          best.left_count = nl;
        }
      }
    }
    return best;
  }

  const FeatureTable& table_;
  const ForestOptions& options_;
  std::size_t mtry_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
  std::vector<double> gain_;
};

double tree_predict(const std::vector<TreeNode>& tree, std::span<const double> row) {
  int id = 0;
  while (tree[static_cast<std::size_t>(id)].feature >= 0) {
    const TreeNode& node = tree[static_cast<std::size_t>(id)];
    id = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return tree[static_cast<std::size_t>(id)].value;
}

}  // namespace

std::vector<double> FeatureTable::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = features(r, c);
  return out;
}

std::size_t FeatureTable::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  throw InputError("no column named '" + std::string(name) + "'");
}

FeatureTable FeatureTable::select(std::span<const std::string> names) const {
  FeatureTable out;
  out.columns.assign(names.begin(), names.end());
  out.features = Matrix(rows(), names.size());
  out.target = target;
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::size_t c = column_index(names[j]);
    for (std::size_t r = 0; r < rows(); ++r) out.features(r, j) = features(r, c);
  }
  return out;
}

FeatureTable FeatureTable::take_rows(std::span<const std::size_t> picks) const {
  FeatureTable out;
  out.columns = columns;
  out.features = Matrix(picks.size(), columns.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto src = features.row(picks[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.target.push_back(target[picks[i]]);
  }
  return out;
}

void FeatureTable::validate() const {
  if (features.rows() != target.size() || features.cols() != columns.size()) {
    throw ShapeError("feature table: " + features.shape_string() + " for " +
                     std::to_string(target.size()) + " targets and " +
                     std::to_string(columns.size()) + " columns");
  }
}

FeatureTable table_from_records(std::span<const randstruct::ExperimentRecord> records) {
  FeatureTable t;
  for (auto name : metrics::GraphPropertyRecord::names()) t.columns.emplace_back(name);
  t.features = Matrix(records.size(), t.columns.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto v = records[r].properties.values();
    std::copy(v.begin(), v.end(), t.features.row(r).begin());
    t.target.push_back(records[r].test_acc);
  }
  return t;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: lengths differ");
  if (x.size() < 2) throw DomainError("pearson needs at least 2 points");
  if (is_constant(x) || is_constant(y)) throw DomainError("pearson is undefined for a constant input");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

FeatureTable minmax_scale(const FeatureTable& table) {
  table.validate();
  FeatureTable out = table;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = 0; r < table.rows(); ++r) {
      lo = std::min(lo, table.features(r, c));
      hi = std::max(hi, table.features(r, c));
    }
    for (std::size_t r = 0; r < table.rows(); ++r) {
      out.features(r, c) = hi > lo ? (table.features(r, c) - lo) / (hi - lo) : 0.0;
    }
  }
  return out;
}

std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double ratio, Rng& rng) {
  table.validate();
  if (table.rows() < 10) throw DomainError("split needs at least 10 rows, got " + std::to_string(table.rows()));
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> idx(table.rows());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(std::span<std::size_t>(idx));
  const auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(table.rows())));
  const std::span<const std::size_t> all(idx);
  return {table.take_rows(all.first(n_train)), table.take_rows(all.subspan(n_train))};
}

double r_squared(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ShapeError("r_squared: lengths differ");
  if (actual.size() < 2) throw DomainError("r_squared needs at least 2 points");
  if (is_constant(actual)) throw DomainError("r_squared is undefined for a constant target");
  const double m = mean_of(actual);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    ss_tot += (actual[i] - m) * (actual[i] - m);
  }
  return 1.0 - ss_res / ss_tot;
}

double RidgeModel::predict(std::span<const double> row) const {
  double y = intercept;
  for (std::size_t j = 0; j < coefficients.size(); ++j) y += coefficients[j] * row[j];
  return y;
}

std::vector<double> RidgeModel::predict(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
  return out;
}

RidgeModel fit_ridge(const FeatureTable& train, double lambda) {
  train.validate();
  if (!(lambda >= 0.0)) throw DomainError("ridge lambda must be non-negative");
  if (train.rows() == 0) throw DomainError("ridge needs at least one row");
  const std::size_t n = train.rows(), p = train.columns.size();
  std::vector<double> mx(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) mx[j] = mean_of(train.column(j));
  const double my = mean_of(train.target);

  Matrix gram(p, p);
  std::vector<double> rhs(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double yc = train.target[r] - my;
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = train.features(r, i) - mx[i];
      rhs[i] += xi * yc;
      for (std::size_t j = 0; j <= i; ++j) gram(i, j) += xi * (train.features(r, j) - mx[j]);
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < i; ++j) gram(j, i) = gram(i, j);
    gram(i, i) += lambda;
  }
  RidgeModel model;
  model.lambda = lambda;
  model.coefficients = p == 0 ? std::vector<double>{} : solve_spd(gram, rhs);
  model.intercept = my;
  for (std::size_t j = 0; j < p; ++j) model.intercept -= model.coefficients[j] * mx[j];
  return model;
}

RidgeModel fit_ridge_cv(const FeatureTable& train, Rng& rng, std::size_t folds) {
  train.validate();
  if (folds < 2 || train.rows() < folds) {
    throw DomainError("cross-validation needs at least " + std::to_string(folds) + " rows");
  }
  std::vector<std::size_t> idx(train.rows());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(std::span<std::size_t>(idx));

  double best_lambda = kRidgeLambdas[0];
  double best_error = std::numeric_limits<double>::infinity();
  for (double lambda : kRidgeLambdas) {
    double error = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::size_t> fit_rows, held;
      for (std::size_t i = 0; i < idx.size(); ++i) (i % folds == f ? held : fit_rows).push_back(idx[i]);
      const FeatureTable held_out = train.take_rows(held);
      const RidgeModel m = fit_ridge(train.take_rows(fit_rows), lambda);
      const auto pred = m.predict(held_out.features);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        error += (pred[i] - held_out.target[i]) * (pred[i] - held_out.target[i]);
      }
    }
    if (error < best_error) {
      best_error = error;
      best_lambda = lambda;
    }
  }
  return fit_ridge(train, best_lambda);
}

double RandomForest::predict(std::span<const double> row) const {
  double sum = 0.0;
  for (const auto& tree : trees) sum += tree_predict(tree, row);
  return sum / static_cast<double>(trees.size());
}

std::vector<double> RandomForest::predict(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
  return out;
}

RandomForest fit_random_forest(const FeatureTable& train, const ForestOptions& options, Rng& rng) {
  train.validate();
  if (options.n_trees < 1) throw DomainError("a forest needs at least one tree");
  if (train.rows() == 0) throw DomainError("a forest needs at least one row");
  if (options.min_samples_leaf < 1) throw DomainError("min_samples_leaf must be positive");
  const std::size_t p = train.columns.size();
  const std::size_t mtry =
      options.max_features != 0
          ? options.max_features
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(p)))));

  RandomForest forest;
  std::vector<double> importance(p, 0.0);
  const std::uint64_t base = rng.next_u64();
  for (std::size_t t = 0; t < options.n_trees; ++t) {
    Rng tree_rng(derive_seed(base, t));
    std::vector<std::size_t> samples(train.rows());
    if (options.bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(tree_rng.below(train.rows()));
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(train, options, mtry, tree_rng);
    forest.trees.push_back(builder.build(std::move(samples)));
    const auto& gain = builder.gain();
    const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
    if (total > 0.0) {
      for (std::size_t j = 0; j < p; ++j) importance[j] += gain[j] / total;
    }
  }
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  forest.importances.assign(p, p == 0 ? 0.0 : 1.0 / static_cast<double>(p));
  if (total > 0.0) {
    for (std::size_t j = 0; j < p; ++j) forest.importances[j] = importance[j] / total;
  }
  return forest;
}

std::vector<Correlation> correlation_report(const FeatureTable& table) {
  table.validate();
  if (table.rows() == 0) throw DomainError("correlation report of an empty table");
  std::vector<Correlation> out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    const auto col = table.column(c);
    if (is_constant(col)) continue;
    out.push_back({table.columns[c], pearson(col, table.target)});
  }
  return out;
}

const std::vector<Circumstance>& circumstances() {
  static const std::vector<Circumstance> kSets = [] {
    const auto& names = metrics::GraphPropertyRecord::names();
    std::vector<std::string> all(names.begin(), names.end());
    const std::vector<std::string> counts{"nodes", "edges", "source_nodes", "sink_nodes"};
    std::vector<std::string> without, variances;
    for (const auto& n : all) {
      if (std::find(counts.begin(), counts.end(), n) == counts.end()) without.push_back(n);
      if (n.size() > 4 && n.compare(n.size() - 4, 4, "_var") == 0) variances.push_back(n);
    }
    return std::vector<Circumstance>{{"all", all},
                                     {"only_nodes_edges", counts},
                                     {"without_nodes_edges", without},
                                     {"only_variances", variances}};
  }();
  return kSets;
}

std::vector<CircumstanceResult> importance_circumstances(const FeatureTable& table, Rng& rng,
                                                         const ForestOptions& forest) {
  table.validate();
  if (table.rows() < 20) throw DomainError("importance study needs at least 20 rows");
  const FeatureTable scaled = minmax_scale(table);
  auto [train_all, test_all] = split(scaled, 0.9, rng);
  const std::uint64_t base = rng.next_u64();
  std::vector<CircumstanceResult> out;
  for (std::size_t i = 0; i < circumstances().size(); ++i) {
    const Circumstance& c = circumstances()[i];
    const FeatureTable train = train_all.select(c.columns);
    const FeatureTable test = test_all.select(c.columns);
    Rng ridge_rng(derive_seed(base, 2 * i));
    Rng forest_rng(derive_seed(base, 2 * i + 1));
    const RidgeModel ridge = fit_ridge_cv(train, ridge_rng);
    const RandomForest rf = fit_random_forest(train, forest, forest_rng);
    CircumstanceResult res;
    res.name = c.name;
    res.ridge_r2 = r_squared(ridge.predict(test.features), test.target);
    res.forest_r2 = r_squared(rf.predict(test.features), test.target);
    for (std::size_t j = 0; j < c.columns.size(); ++j) res.importances.emplace_back(c.columns[j], rf.importances[j]);
    out.push_back(std::move(res));
  }
  return out;
}

std::string correlation_csv(std::span<const Correlation> rows, const Provenance& prov) {
  std::string out = prov.comment_line() + "\nproperty,pearson_r\n";
  for (const auto& r : rows) out += r.property + "," + fmt(r.r) + "\n";
  return out;
}

std::string r2_csv(std::span<const CircumstanceResult> results, const Provenance& prov) {
  std::string out = prov.comment_line() + "\nregressor,subset,r_squared\n";
  for (const auto& r : results) out += "ridge," + r.name + "," + fmt(r.ridge_r2) + "\n";
  for (const auto& r : results) out += "random_forest," + r.name + "," + fmt(r.forest_r2) + "\n";
  return out;
}

std::string importance_csv(const CircumstanceResult& result, const Provenance& prov) {
  std::string out = prov.comment_line() + "\nproperty,importance\n";
  for (const auto& [name, v] : result.importances) out += name + "," + fmt(v) + "\n";
  return out;
}

std::string scatter_csv(const FeatureTable& table, std::string_view property, const Provenance& prov) {
  const std::size_t c = table.column_index(property);
  std::string out = prov.comment_line() + "\nx,y\n";
  for (std::size_t r = 0; r < table.rows(); ++r) out += fmt(table.features(r, c)) + "," + fmt(table.target[r]) + "\n";
  return out;
}

}  // namespace srnn::analysis
