// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sparse_rnn/analysis.hpp"
#include "sparse_rnn/checkpoint.hpp"
#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/graph.hpp"
#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/pruning.hpp"
#include "sparse_rnn/randstruct.hpp"
#include "sparse_rnn/reber.hpp"
#include "sparse_rnn/training.hpp"

namespace srnn::cli {

namespace fs = std::filesystem;

namespace {

// Options that name files or control parallelism do not change results, so
// they stay out of the configuration hash.
const std::vector<std::string> kUnhashedKeys{"config", "out", "data", "checkpoint",
                                             "records", "graphs", "jobs"};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Provenance provenance_of(const CLI::App& sub) {
  std::istringstream in(sub.config_to_str(true, false));
  std::string line, kept;
  while (std::getline(in, line)) {
    const std::string key = line.substr(0, line.find('='));
    bool skip = line.empty() || line.front() == '[' || line.front() == '#';
    for (const auto& k : kUnhashedKeys) skip = skip || key == k;
    if (!skip) kept += line + "\n";
  }
  return Provenance{hex64(fnv1a64(std::string(sub.get_name()) + "\n" + kept))};
}

void add_common(CLI::App& sub, std::uint64_t& seed) {
  // Read by expand_config() before parsing; registered so it is accepted and documented.
  sub.add_option("--config", "Flat key=value file; flags on the command line take precedence");
  sub.add_option("--seed", seed, "Random seed")->envname("SPARSE_RNN_SEED");
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Turns "<sub> ... --config FILE ..." into "<sub> --key value ... <original args>",
// leaving out keys that the command line sets itself.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::FileError& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty()) {
      throw ConfigError(path + ": sections are not supported, use flat key=value lines");
    }
    const std::string flag = "--" + item.name;
    if (given_on_command_line(args, flag)) continue;
    for (const auto& value : item.inputs) injected.push_back(flag + "=" + value);
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

const std::vector<std::string> kVariants{"rnn_tanh", "rnn_relu", "lstm", "gru"};

void log(const std::string& msg) { std::cerr << msg << '\n'; }

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- gen-data -------------------------------------------------------------

struct GenData {
  std::uint64_t seed = 0;
  std::size_t total = 25000;
  int min_len = reber::kDefaultMinLength;
  std::string out;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-data", "Generate a balanced Reber grammar dataset");
    add_common(*sub, seed);
    sub->add_option("--total", total, "Number of sequences (half valid, half invalid)")
        ->check(CLI::Range(std::size_t{4}, std::size_t{100000000}));
    sub->add_option("--min-len", min_len, "Minimum sequence length")->check(CLI::Range(5, 1000));
    sub->add_option("--out", out, "Output stem: <stem>.train.csv, <stem>.test.csv, <stem>.meta.json")
        ->required();
    sub->final_callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (total % 2 != 0) throw ConfigError("--total must be even");
    Rng rng(seed);
    const reber::Dataset data = reber::build_dataset(total, rng, min_len);
    reber::write_dataset(data, out, provenance_of(sub));
    log("wrote " + std::to_string(data.train.size()) + " train / " +
        std::to_string(data.test.size()) + " test sequences to " + out + ".*");
  }
};

// ---- train ----------------------------------------------------------------

struct Train {
  std::uint64_t seed = 0;
  std::string data, out, variant = "gru";
  std::size_t layers = 3, hidden = 50, embedding_dim = 50, batch = 32, epochs = 50;
  double lr = 0.001;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train a stacked recurrent classifier");
    add_common(*sub, seed);
    sub->add_option("--data", data, "Dataset stem written by gen-data")->required();
    sub->add_option("--variant", variant, "Cell kind")->check(CLI::IsMember(kVariants));
    sub->add_option("--layers", layers, "Recurrent layers")->check(CLI::Range(1, 64));
    sub->add_option("--hidden", hidden, "Units per recurrent layer")->check(CLI::Range(1, 4096));
    sub->add_option("--embedding-dim", embedding_dim, "Embedding width")->check(CLI::Range(1, 4096));
    sub->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--batch", batch, "Batch size")->check(CLI::Range(1, 1 << 20));
    sub->add_option("--epochs", epochs, "Training epochs")->check(CLI::Range(0, 100000));
    sub->add_option("--out", out, "Output stem: <stem>.ckpt.json and <stem>.history.csv")->required();
    sub->final_callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    const Provenance prov = provenance_of(sub);
    const reber::Dataset dataset = reber::read_dataset(data);
    Rng init(derive_seed(seed, 1));
    const std::vector<std::size_t> sizes(layers, hidden);
    RecurrentModel model = make_stacked_model(parse_cell_kind(variant), embedding_dim, sizes, init);
    model.hyper = {lr, batch, epochs};
    TrainOptions options;
    options.epochs = epochs;
    options.seed = derive_seed(seed, 2);
    options.stop_after = [](const EpochRecord& r) {
      log("epoch " + std::to_string(r.epoch) + " loss " + fmt(r.train_loss) + " test_acc " +
          fmt(r.test_accuracy));
      return false;
    };
    const History history = train(model, dataset, options);
    save_checkpoint(model, out + ".ckpt.json", prov);
    write_file_atomic(out + ".history.csv", history_csv(history, prov));
  }
};

// ---- prune ----------------------------------------------------------------

struct Prune {
  std::uint64_t seed = 0;
  std::string data, checkpoint, out, target = "both";
  std::vector<double> percents{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t max_regain_epochs = 10, jobs = 1;
  double tolerance = 0.01;
  bool per_layer = false;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("prune", "Magnitude-prune a trained model and measure recovery");
    add_common(*sub, seed);
    sub->add_option("--data", data, "Dataset stem written by gen-data")->required();
    sub->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    sub->add_option("--target", target, "Weights to prune")->check(CLI::IsMember({"i2h", "h2h", "both"}));
    sub->add_option("--percent", percents, "Prune percents (repeatable)")->check(CLI::Range(1.0, 100.0));
    sub->add_option("--max-regain-epochs", max_regain_epochs, "Retraining budget per row")
        ->check(CLI::Range(0, 100000));
    sub->add_option("--tolerance", tolerance, "Regain target is acc_before minus this")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--per-layer", per_layer, "One threshold per layer instead of one pooled threshold");
    sub->add_option("--jobs", jobs, "Rows processed in parallel")->check(CLI::Range(1, 1024));
    sub->add_option("--out", out, "Sweep CSV path")->required();
    sub->final_callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    const Provenance prov = provenance_of(sub);
    const reber::Dataset dataset = reber::read_dataset(data);
    const RecurrentModel model = load_checkpoint(checkpoint);
    pruning::SweepOptions options;
    options.percents = percents;
    options.max_regain_epochs = max_regain_epochs;
    options.regain_tolerance = tolerance;
    options.per_layer = per_layer;
    options.jobs = jobs;
    options.seed = seed;
    const auto rows = pruning::prune_sweep(model, dataset, pruning::parse_prune_target(target), options);
    for (const auto& r : rows) {
      log("p=" + fmt(r.percent, "%g") + " acc_after " + fmt(r.acc_after) + " epochs_to_regain " +
          std::to_string(r.epochs_to_regain));
    }
    write_file_atomic(out, pruning::sweep_csv(rows, prov));
  }
};

// ---- randstruct -----------------------------------------------------------

struct RandStruct {
  std::uint64_t seed = 0;
  std::string data, out, graphs, variant = "gru", betweenness = "raw";
  randstruct::ExperimentOptions options;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("randstruct", "Train recurrent models wired from random graphs");
    add_common(*sub, seed);
    sub->add_option("--data", data, "Dataset stem written by gen-data")->required();
    sub->add_option("--variant", variant, "Cell kind")->check(CLI::IsMember(kVariants));
    sub->add_option("--per-family", options.count_per_family, "Graphs per family (WS and BA)")
        ->check(CLI::Range(1, 1000000));
    sub->add_option("--ws-k", options.params.k, "Watts-Strogatz neighbours (even)")->check(CLI::Range(2, 1000));
    sub->add_option("--ws-p", options.params.p, "Watts-Strogatz rewiring probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--ba-m", options.params.m, "Barabasi-Albert edges per new node")->check(CLI::Range(1, 1000));
    sub->add_option("--min-nodes", options.min_nodes, "Smallest node count")->check(CLI::Range(2, 100000));
    sub->add_option("--max-nodes", options.max_nodes, "Largest node count (inclusive)")->check(CLI::Range(2, 100000));
    sub->add_option("--epochs", options.epochs, "Training epochs per graph")->check(CLI::Range(0, 100000));
    sub->add_option("--batch", options.batch_size, "Batch size")->check(CLI::Range(1, 1 << 20));
    sub->add_option("--lr", options.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--embedding-dim", options.embedding_dim, "Embedding width; 0 = number of source nodes")
        ->check(CLI::Range(0, 4096));
    sub->add_option("--betweenness", betweenness, "Betweenness scale in the records")
        ->check(CLI::IsMember({"raw", "pair_fraction"}));
    sub->add_option("--jobs", options.jobs, "Graphs trained in parallel")->check(CLI::Range(1, 1024));
    sub->add_option("--graphs", graphs, "Directory for .ug/.dag files of every graph");
    sub->add_option("--out", out, "JSONL records path (appended; resumes by family and seed)")->required();
    sub->final_callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (options.params.k % 2 != 0) throw ConfigError("--ws-k must be even");
    if (options.max_nodes < options.min_nodes) throw ConfigError("--max-nodes must be >= --min-nodes");
    if (options.min_nodes <= options.params.k || options.min_nodes <= options.params.m + 1) {
      throw ConfigError("--min-nodes must exceed --ws-k and --ba-m + 1");
    }
    options.kind = parse_cell_kind(variant);
    options.betweenness = metrics::parse_betweenness_scale(betweenness);
    options.seed = seed;
    const Provenance prov = provenance_of(sub);
    const reber::Dataset dataset = reber::read_dataset(data);

    // The sidecar ties the JSONL file to one configuration.
    const fs::path meta = out + ".meta.json";
    nlohmann::json info{{"tool", kToolName}, {"version", kToolVersion}, {"config_hash", prov.config_hash},
                        {"variant", variant}, {"seed", seed}};
    if (fs::exists(meta)) {
      const auto existing = nlohmann::json::parse(read_text_file(meta), nullptr, false);
      if (existing.is_discarded() || existing.value("config_hash", "") != prov.config_hash) {
        throw ConfigError("existing " + out + " was written with a different configuration");
      }
    }

    std::set<randstruct::RunKey> done;
    if (fs::exists(out)) {
      std::string text = read_text_file(out);
      const std::size_t keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
      if (keep != text.size()) {
        log("dropping an incomplete trailing record");
        text.resize(keep);
        write_file_atomic(out, text);
      }
      for (const auto& r : randstruct::parse_records(text)) done.insert({r.family, r.seed});
      if (!done.empty()) log("resuming: " + std::to_string(done.size()) + " runs already recorded");
    }
    write_file_atomic(meta, info.dump(2) + "\n");
    if (!graphs.empty()) fs::create_directories(graphs);

    std::ofstream stream(out, std::ios::app | std::ios::binary);
    if (!stream) throw IoError("cannot open " + out + " for appending");
    std::size_t count = done.size();
    randstruct::run_random_experiments(dataset, options, done, [&](const randstruct::ExperimentRecord& r) {
      stream << randstruct::record_json(r) << '\n';
      stream.flush();
      if (!stream) throw IoError("write to " + out + " failed");
      if (!graphs.empty()) write_graphs(r);
      log(std::to_string(++count) + " " + std::string(graph::to_string(r.family)) + " nodes " +
          fmt(r.properties.nodes, "%.0f") + " test_acc " + fmt(r.test_acc));
    });
  }

  void write_graphs(const randstruct::ExperimentRecord& r) const {
    Rng rng(r.seed);
    const auto n = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(options.min_nodes),
                                                      static_cast<std::int64_t>(options.max_nodes)));
    const auto arch = graph::make_arch(r.family, n, options.params, derive_seed(r.seed, 1));
    const std::string stem = (fs::path(graphs) / (std::string(graph::to_string(r.family)) + "_" +
                                                   hex64(r.seed))).string();
    write_file_atomic(stem + ".ug", graph::ug_text(arch.base));
    write_file_atomic(stem + ".dag", graph::dag_text(arch.dag));
  }
};

// ---- analyze --------------------------------------------------------------

struct Analyze {
  std::uint64_t seed = 0;
  std::string records, out;
  analysis::ForestOptions forest;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("analyze", "Correlations, regressions and importances over records");
    add_common(*sub, seed);
    sub->add_option("--records", records, "JSONL written by randstruct")->required();
    sub->add_option("--trees", forest.n_trees, "Random forest size")->check(CLI::Range(1, 100000));
    sub->add_option("--max-depth", forest.max_depth, "Random forest depth")->check(CLI::Range(1, 64));
    sub->add_option("--min-leaf", forest.min_samples_leaf, "Minimum samples per leaf")->check(CLI::Range(1, 100000));
    sub->add_option("--out", out, "Output directory")->required();
    sub->final_callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    const Provenance prov = provenance_of(sub);
    const auto all = randstruct::parse_records(read_text_file(records));
    if (all.empty()) throw InputError(records + " holds no records");
    std::map<std::string, std::vector<randstruct::ExperimentRecord>> by_variant;
    for (const auto& r : all) by_variant[std::string(to_string(r.variant))].push_back(r);

    fs::create_directories(fs::path(out) / "scatter");
    for (const auto& [variant, recs] : by_variant) {
      const analysis::FeatureTable table = analysis::table_from_records(recs);
      const fs::path dir(out);
      write_file_atomic(dir / ("correlation_" + variant + ".csv"),
                        analysis::correlation_csv(analysis::correlation_report(table), prov));
      for (const auto& name : table.columns) {
        write_file_atomic(dir / "scatter" / (variant + "_" + name + ".csv"),
                          analysis::scatter_csv(table, name, prov));
      }
      if (table.rows() < 20) {
        log(variant + ": " + std::to_string(table.rows()) + " records; regressions need at least 20, skipped");
        continue;
      }
      Rng rng(derive_seed(seed, fnv1a64(variant)));
      const auto results = analysis::importance_circumstances(table, rng, forest);
      write_file_atomic(dir / ("r2_" + variant + ".csv"), analysis::r2_csv(results, prov));
      for (const auto& r : results) {
        write_file_atomic(dir / ("importance_" + variant + "_" + r.name + ".csv"),
                          analysis::importance_csv(r, prov));
      }
    }
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Sparse and randomly structured recurrent networks on the Reber grammar", "sparse-rnn"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  GenData gen_data;
  Train train_cmd;
  Prune prune;
  RandStruct rand_struct;
  Analyze analyze;
  gen_data.attach(app);
  train_cmd.attach(app);
  prune.attach(app);
  rand_struct.attach(app);
  analyze.attach(app);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty()) args = expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kIoError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kContractError;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kContractError;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kContractError;
  }
  return kOk;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sparse-rnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace srnn::cli
