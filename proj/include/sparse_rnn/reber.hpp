// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparse_rnn/provenance.hpp"
#include "sparse_rnn/rng.hpp"

namespace srnn::reber {

inline constexpr std::string_view kAlphabet = "BEPSTVX";
inline constexpr int kStartState = 0;
inline constexpr int kAcceptState = 7;
inline constexpr int kDefaultMinLength = 11;
/// Longest run of one self-loop during generation.
inline constexpr int kMaxLoopRepeats = 20;

struct Transition {
  char symbol;
  int target;
};

/// Outgoing transitions of a state (empty for the accept state).
std::span<const Transition> transitions(int state);

/// Next state, or nullopt when `symbol` has no transition from `state`.
std::optional<int> step(int state, char symbol);

/// True iff the whole string is a walk from the start to the accept state.
bool validate(std::string_view text);

struct LabeledSequence {
  std::string text;
  int label = 0;  // 1 = valid Reber string

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct Dataset {
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> test;
  std::uint64_t seed = 0;
  int min_len = kDefaultMinLength;

  std::size_t total() const { return train.size() + test.size(); }
};

/// Random walk through the grammar, resampled until it is at least
/// `min_len` characters long.
std::string generate_true(Rng& rng, int min_len = kDefaultMinLength);

/// Substitutes `positions` distinct interior characters with random A-Z
/// letters, redrawing until the result is rejected by the grammar. The first
/// and last characters are kept.
std::string corrupt(std::string_view text, int positions, Rng& rng);

/// A true string corrupted at 1-3 interior positions.
std::string generate_false(Rng& rng, int min_len = kDefaultMinLength);

/// n_total/2 true and n_total/2 false sequences, shuffled, then split 3:1
/// by index into train/test.
Dataset build_dataset(std::size_t n_total, Rng& rng, int min_len = kDefaultMinLength);

std::map<std::size_t, std::size_t> length_histogram(std::span<const LabeledSequence> seqs);

struct ClassCounts {
  std::size_t valid = 0;
  std::size_t invalid = 0;
};
ClassCounts class_counts(std::span<const LabeledSequence> seqs);

/// Writes <stem>.train.csv, <stem>.test.csv and <stem>.meta.json.
void write_dataset(const Dataset& data, const std::filesystem::path& stem,
                   const Provenance& prov = {});
/// Reads the files written by write_dataset. Characters outside 7-bit ASCII
/// are rejected with InputError.
Dataset read_dataset(const std::filesystem::path& stem);

std::vector<LabeledSequence> read_split_csv(const std::filesystem::path& path);
std::string split_csv(std::span<const LabeledSequence> seqs, const Provenance& prov);

}  // namespace srnn::reber
