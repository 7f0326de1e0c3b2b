// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/checkpoint.hpp"

#include <json.hpp>

#include "sparse_rnn/errors.hpp"

namespace srnn {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kCheckpointFormat = "sparse-rnn-checkpoint";

ordered_json tensor_entry(const std::string& name, const Matrix& m) {
  ordered_json t;
  t["name"] = name;
  t["shape"] = {m.rows(), m.cols()};
  t["data"] = std::vector<double>(m.values().begin(), m.values().end());
  return t;
}

Matrix tensor_from(const json& t) {
  const auto shape = t.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw InputError("tensor '" + t.value("name", std::string{}) + "': shape must be 2-D");
  const auto data = t.at("data").get<std::vector<double>>();
  if (data.size() != shape[0] * shape[1]) {
    throw InputError("tensor '" + t.value("name", std::string{}) + "': payload length does not match shape");
  }
  Matrix m(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), m.values().begin());
  if (!all_finite(m)) throw InputError("tensor '" + t.value("name", std::string{}) + "': non-finite value");
  return m;
}

ordered_json header(std::string_view format, const Provenance& prov) {
  ordered_json j;
  j["format"] = std::string(format);
  j["version"] = 1;
  j["tool"] = std::string(kToolName) + " " + std::string(kToolVersion);
  j["config_hash"] = prov.config_hash;
  return j;
}

}  // namespace

std::string checkpoint_json(const RecurrentModel& model, const Provenance& prov) {
  model.validate();
  ordered_json j = header(kCheckpointFormat, prov);
  j["kind"] = std::string(to_string(model.kind()));
  j["embedding_dim"] = model.embedding_dim();
  j["hyper"] = {{"learning_rate", model.hyper.learning_rate},
                {"batch_size", model.hyper.batch_size},
                {"epochs", model.hyper.epochs}};
  ordered_json layers = ordered_json::array();
  for (const auto& layer : model.layers) {
    layers.push_back({{"input_size", layer.input_size},
                      {"hidden_size", layer.hidden_size},
                      {"sources", layer.sources},
                      {"has_input_mask", !layer.input_mask.empty()}});
  }
  j["layers"] = layers;
  j["head_sources"] = model.head_sources;
  j["has_head_mask"] = !model.head_mask.empty();

  ordered_json tensors = ordered_json::array();
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) tensors.push_back(tensor_entry(names[i], *params[i]));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!model.layers[l].input_mask.empty()) {
      tensors.push_back(tensor_entry("layer" + std::to_string(l) + ".input_mask", model.layers[l].input_mask));
    }
  }
  if (!model.head_mask.empty()) tensors.push_back(tensor_entry("head.mask", model.head_mask));
  j["tensors"] = tensors;
  return j.dump() + "\n";
}

RecurrentModel parse_checkpoint(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw InputError("not a sparse-rnn checkpoint");
    const CellKind kind = parse_cell_kind(j.at("kind").get<std::string>());
    RecurrentModel model;
    model.embedding = Matrix(kVocabSize, j.at("embedding_dim").get<std::size_t>());
    const auto& hyper = j.at("hyper");
    model.hyper.learning_rate = hyper.at("learning_rate").get<double>();
    model.hyper.batch_size = hyper.at("batch_size").get<std::size_t>();
    model.hyper.epochs = hyper.at("epochs").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
      auto layer = RecurrentLayer::zeros(kind, lj.at("input_size").get<std::size_t>(),
                                         lj.at("hidden_size").get<std::size_t>());
      layer.sources = lj.at("sources").get<std::vector<int>>();
      if (lj.value("has_input_mask", false)) layer.input_mask = Matrix(layer.hidden_size, layer.input_size);
      model.layers.push_back(std::move(layer));
    }
    model.head_sources = j.at("head_sources").get<std::vector<int>>();
    model.head_weights = Matrix(kNumClasses, model.head_input_size());
    model.head_bias = Matrix(1, kNumClasses);
    if (j.value("has_head_mask", false)) model.head_mask = Matrix(kNumClasses, model.head_input_size());

    const auto& tensors = j.at("tensors");
    const auto names = model.parameter_names();
    auto params = model.parameters();
    std::size_t next = 0;
    for (const auto& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      Matrix value = tensor_from(t);
      Matrix* target = nullptr;
      if (next < names.size()) {
        if (name != names[next]) throw InputError("checkpoint: expected tensor '" + names[next] + "', got '" + name + "'");
        target = params[next++];
      } else if (name == "head.mask") {
        target = &model.head_mask;
      } else if (name.starts_with("layer") && name.ends_with(".input_mask")) {
        const auto l = std::stoul(name.substr(5, name.find('.') - 5));
        if (l >= model.layers.size()) throw InputError("checkpoint: mask for unknown layer");
        target = &model.layers[l].input_mask;
      } else {
        throw InputError("checkpoint: unexpected tensor '" + name + "'");
      }
      if (!target->same_shape(value)) {
        throw InputError("checkpoint: tensor '" + name + "' has shape " + value.shape_string() +
                         ", expected " + target->shape_string());
      }
      *target = std::move(value);
    }
    if (next != names.size()) throw InputError("checkpoint: missing parameter tensors");
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const RecurrentModel& model, const std::filesystem::path& path,
                     const Provenance& prov) {
  write_file_atomic(path, checkpoint_json(model, prov));
}

RecurrentModel load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path));
}

std::string matrices_json(std::string_view format, const NamedMatrices& tensors,
                          const Provenance& prov) {
  ordered_json j = header(format, prov);
  ordered_json arr = ordered_json::array();
  for (const auto& [name, m] : tensors) arr.push_back(tensor_entry(name, m));
  j["tensors"] = arr;
  return j.dump() + "\n";
}

NamedMatrices parse_matrices(std::string_view text, std::string_view expected_format) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != expected_format) {
      throw InputError("expected format '" + std::string(expected_format) + "'");
    }
    NamedMatrices out;
    for (const auto& t : j.at("tensors")) out.emplace_back(t.at("name").get<std::string>(), tensor_from(t));
    return out;
  } catch (const json::exception& e) {
    throw InputError(e.what());
  }
}

}  // namespace srnn
