// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/recurrent.hpp"

namespace srnn {

/// A list of named matrices with explicit shapes; the payload format shared
/// by checkpoints and mask files.
using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

/// JSON checkpoint: kind, sizes, wiring, hyper-parameters and every
/// parameter (plus structural masks) with its shape. Doubles are written in
/// shortest round-trip form, so save/load is bit-exact.
std::string checkpoint_json(const RecurrentModel& model, const Provenance& prov = {});
RecurrentModel parse_checkpoint(std::string_view text);

void save_checkpoint(const RecurrentModel& model, const std::filesystem::path& path,
                     const Provenance& prov = {});
RecurrentModel load_checkpoint(const std::filesystem::path& path);

std::string matrices_json(std::string_view format, const NamedMatrices& tensors,
                          const Provenance& prov = {});
NamedMatrices parse_matrices(std::string_view text, std::string_view expected_format);

}  // namespace srnn
