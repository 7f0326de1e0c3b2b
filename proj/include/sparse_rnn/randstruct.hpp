// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparse_rnn/graph.hpp"
#include "sparse_rnn/metrics.hpp"
#include "sparse_rnn/reber.hpp"
#include "sparse_rnn/recurrent.hpp"

namespace srnn::randstruct {

/// A recurrent model wired from a layer-indexed DAG. Every graph node is one
/// hidden unit; nodes sharing a layer index form one recurrent layer with
/// full recurrence inside it.
struct RandStructModel {
  RecurrentModel model;
  /// node -> (layer, unit within layer)
  std::vector<std::pair<std::size_t, std::size_t>> placement;
};

/// Layer 0 reads the embedding. Layer l > 0 reads every earlier layer through
/// an input mask that is 1 exactly on DAG arcs, so skip-level arcs connect
/// directly. The head reads every layer through a mask selecting the sink
/// nodes. `embedding_dim` 0 means "number of source nodes".
RandStructModel build_model(const graph::ArchGraph& arch, CellKind kind,
                            std::size_t embedding_dim, std::uint64_t init_seed);

struct ExperimentRecord {
  CellKind variant = CellKind::Gru;
  graph::Family family = graph::Family::WattsStrogatz;
  std::uint64_t seed = 0;
  metrics::GraphPropertyRecord properties;
  double test_acc = 0.0;
};

/// One JSON object per line: the 23 property names plus variant, family,
/// seed and test_acc.
std::string record_json(const ExperimentRecord& record);
/// Throws InputError on missing keys or wrong types.
ExperimentRecord parse_record(std::string_view line);
/// Parses every complete line; a trailing line without its newline is
/// ignored (an interrupted append).
std::vector<ExperimentRecord> parse_records(std::string_view text);

struct ExperimentOptions {
  std::size_t count_per_family = 100;
  CellKind kind = CellKind::Gru;
  graph::FamilyParams params;
  std::size_t min_nodes = 10;
  std::size_t max_nodes = 50;  // inclusive
  std::size_t epochs = 15;
  std::size_t batch_size = 128;
  double learning_rate = 0.001;
  std::size_t embedding_dim = 0;
  metrics::BetweennessScale betweenness = metrics::BetweennessScale::Raw;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

/// Seed of run `index` of a family; records are identified by (family, seed).
std::uint64_t run_seed(std::uint64_t base, graph::Family family, std::size_t index);

/// Builds, trains and evaluates a single architecture.
ExperimentRecord run_one(graph::Family family, std::uint64_t seed, const reber::Dataset& data,
                         const ExperimentOptions& options);

using RunKey = std::pair<graph::Family, std::uint64_t>;

/// All WS runs then all BA runs, in index order. Runs whose key is in `done`
/// are skipped. `on_record` is called in that same order, even with jobs > 1.
std::vector<ExperimentRecord> run_random_experiments(
    const reber::Dataset& data, const ExperimentOptions& options,
    const std::set<RunKey>& done = {},
    const std::function<void(const ExperimentRecord&)>& on_record = {});

}  // namespace srnn::randstruct
