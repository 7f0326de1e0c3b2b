// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/randstruct.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/training.hpp"

namespace srnn::randstruct {

using json = nlohmann::json;

RandStructModel build_model(const graph::ArchGraph& arch, CellKind kind,
                            std::size_t embedding_dim, std::uint64_t init_seed) {
  const graph::Dag& dag = arch.dag;
  if (dag.n == 0) throw DomainError("cannot build a model from an empty graph");
  const std::vector<std::size_t> index =
      dag.layer_index.size() == dag.n ? dag.layer_index : graph::layer_index(dag);
  const std::size_t n_layers = 1 + *std::max_element(index.begin(), index.end());

  RandStructModel out;
  out.placement.resize(dag.n);
  std::vector<std::size_t> sizes(n_layers, 0);
  for (std::size_t v = 0; v < dag.n; ++v) out.placement[v] = {index[v], sizes[index[v]]++};

  // Column offset of each layer inside the concatenation of layers 0..l-1.
  std::vector<std::size_t> offset(n_layers + 1, 0);
  for (std::size_t l = 0; l < n_layers; ++l) offset[l + 1] = offset[l] + sizes[l];

  if (embedding_dim == 0) embedding_dim = sizes[0];
  RecurrentModel& model = out.model;
  model.embedding = Matrix(kVocabSize, embedding_dim);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t input = l == 0 ? embedding_dim : offset[l];
    RecurrentLayer layer = RecurrentLayer::zeros(kind, input, sizes[l]);
    if (l == 0) {
      layer.sources = {kEmbeddingSource};
    } else {
      layer.sources.clear();
      for (std::size_t s = 0; s < l; ++s) layer.sources.push_back(static_cast<int>(s));
      layer.input_mask = Matrix(sizes[l], input, 0.0);
    }
    model.layers.push_back(std::move(layer));
  }
  for (const auto& [u, v] : dag.arcs) {
    const auto [lu, iu] = out.placement[u];
    const auto [lv, iv] = out.placement[v];
    if (lu >= lv) throw ContractViolation("arc does not go to a deeper layer");
    model.layers[lv].input_mask(iv, offset[lu] + iu) = 1.0;
  }

  for (std::size_t l = 0; l < n_layers; ++l) model.head_sources.push_back(static_cast<int>(l));
  model.head_weights = Matrix(kNumClasses, offset[n_layers]);
  model.head_bias = Matrix(1, kNumClasses);
  model.head_mask = Matrix(kNumClasses, offset[n_layers], 0.0);
  for (std::size_t v : dag.sinks()) {
    const auto [l, i] = out.placement[v];
    for (std::size_t c = 0; c < kNumClasses; ++c) model.head_mask(c, offset[l] + i) = 1.0;
  }
  model.validate();
  Rng rng(init_seed);
  initialize(model, rng);
  return out;
}

std::string record_json(const ExperimentRecord& record) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const auto& names = metrics::GraphPropertyRecord::names();
  const auto values = record.properties.values();
  for (std::size_t i = 0; i < names.size(); ++i) j[std::string(names[i])] = values[i];
  j["variant"] = std::string(to_string(record.variant));
  j["family"] = std::string(graph::to_string(record.family));
  j["seed"] = record.seed;
  j["test_acc"] = record.test_acc;
  return j.dump();
}

ExperimentRecord parse_record(std::string_view line) {
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw InputError("record is not a JSON object");
    ExperimentRecord r;
    std::array<double, metrics::kPropertyCount> values{};
    const auto& names = metrics::GraphPropertyRecord::names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& v = j.at(std::string(names[i]));
      if (!v.is_number()) throw InputError("record field '" + std::string(names[i]) + "' is not a number");
      values[i] = v.get<double>();
    }
    r.properties = metrics::GraphPropertyRecord::from_values(values);
    r.variant = parse_cell_kind(j.at("variant").get<std::string>());
    r.family = graph::parse_family(j.at("family").get<std::string>());
    if (!j.at("seed").is_number_unsigned()) throw InputError("record seed must be an unsigned integer");
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("test_acc").is_number()) throw InputError("record test_acc is not a number");
    r.test_acc = j.at("test_acc").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad record: ") + e.what());
  }
}

std::vector<ExperimentRecord> parse_records(std::string_view text) {
  std::vector<ExperimentRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) break;  // partial trailing line
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#') out.push_back(parse_record(line));
    start = end + 1;
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t base, graph::Family family, std::size_t index) {
  const std::uint64_t stream = family == graph::Family::WattsStrogatz ? 0x5753u : 0x4241u;
  return derive_seed(derive_seed(base, stream), index);
}

ExperimentRecord run_one(graph::Family family, std::uint64_t seed, const reber::Dataset& data,
                         const ExperimentOptions& options) {
  if (options.min_nodes < 2 || options.max_nodes < options.min_nodes) {
    throw DomainError("node range must satisfy 2 <= min <= max");
  }
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(options.min_nodes),
                                                    static_cast<std::int64_t>(options.max_nodes)));
  const graph::ArchGraph arch = graph::make_arch(family, n, options.params, derive_seed(seed, 1));
  RandStructModel built = build_model(arch, options.kind, options.embedding_dim, derive_seed(seed, 2));
  RecurrentModel& model = built.model;
  model.hyper.learning_rate = options.learning_rate;
  model.hyper.batch_size = options.batch_size;
  model.hyper.epochs = options.epochs;

  TrainOptions train_options;
  train_options.epochs = options.epochs;
  train_options.seed = derive_seed(seed, 3);
  const History history = train(model, data, train_options);

  ExperimentRecord record;
  record.variant = options.kind;
  record.family = family;
  record.seed = seed;
  record.properties = metrics::full_record(arch, options.betweenness);
  record.test_acc = history.empty() ? evaluate(model, data.test) : history.back().test_accuracy;
  return record;
}

std::vector<ExperimentRecord> run_random_experiments(
    const reber::Dataset& data, const ExperimentOptions& options, const std::set<RunKey>& done,
    const std::function<void(const ExperimentRecord&)>& on_record) {
  std::vector<RunKey> todo;
  for (graph::Family family : {graph::Family::WattsStrogatz, graph::Family::BarabasiAlbert}) {
    for (std::size_t i = 0; i < options.count_per_family; ++i) {
      RunKey key{family, run_seed(options.seed, family, i)};
      if (done.count(key) == 0) todo.push_back(key);
    }
  }

  std::vector<std::optional<ExperimentRecord>> results(todo.size());
  std::vector<ExperimentRecord> out;
  out.reserve(todo.size());
  std::mutex mutex;
  std::size_t emitted = 0;
  // Hands finished records to the caller strictly in run order.
  auto flush_ready = [&] {
    while (emitted < results.size() && results[emitted]) {
      out.push_back(*results[emitted]);
      if (on_record) on_record(out.back());
      ++emitted;
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, todo.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < todo.size(); ++i) {
      results[i] = run_one(todo[i].first, todo[i].second, data, options);
      flush_ready();
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < todo.size(); i = next++) {
        try {
          ExperimentRecord r = run_one(todo[i].first, todo[i].second, data, options);
          std::lock_guard lock(mutex);
          if (failure) return;
          results[i] = std::move(r);
          flush_ready();
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace srnn::randstruct
