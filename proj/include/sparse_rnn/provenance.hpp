// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace srnn {

inline constexpr std::string_view kToolName = "sparse-rnn";
inline constexpr std::string_view kToolVersion = "1.0.0";

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Identifies the tool build and the configuration that produced a file.
struct Provenance {
  std::string config_hash = "none";

  /// "# sparse-rnn <version> config=<hash>"; first line of every text output.
  std::string comment_line() const;
};

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

/// Lines of a text file with provenance comments ('#' prefix) and blank
/// lines dropped.
std::vector<std::string> read_data_lines(const std::filesystem::path& path);
std::vector<std::string> data_lines(std::string_view text);

}  // namespace srnn
