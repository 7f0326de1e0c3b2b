// SPDX-License-Identifier: Apache-2.0
#include "sparse_rnn/reber.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sparse_rnn/errors.hpp"

namespace srnn::reber {

namespace {

// 0-B->1; 1-T->2, 1-P->3; 2-S->2, 2-X->4; 3-T->3, 3-V->5; 4-X->3, 4-S->6;
// 5-P->4, 5-V->6; 6-E->accept.
constexpr std::array<std::array<Transition, 2>, 7> kTable{{
    {{{'B', 1}, {'\0', -1}}},
    {{{'T', 2}, {'P', 3}}},
    {{{'S', 2}, {'X', 4}}},
    {{{'T', 3}, {'V', 5}}},
    {{{'X', 3}, {'S', 6}}},
    {{{'P', 4}, {'V', 6}}},
    {{{'E', kAcceptState}, {'\0', -1}}},
}};

constexpr std::array<std::size_t, 7> kOutDegree{1, 2, 2, 2, 2, 2, 1};

std::string random_walk(Rng& rng) {
  std::string out;
  int state = kStartState;
  int loop_run = 0;
  while (state != kAcceptState) {
    auto options = transitions(state);
    std::size_t pick = options.size() == 1 ? 0 : static_cast<std::size_t>(rng.below(options.size()));
    if (options[pick].target == state && loop_run >= kMaxLoopRepeats) {
      pick = 1 - pick;
    }
    loop_run = options[pick].target == state ? loop_run + 1 : 0;
    out.push_back(options[pick].symbol);
    state = options[pick].target;
  }
  return out;
}

}  // namespace

std::span<const Transition> transitions(int state) {
  if (state < 0 || state >= static_cast<int>(kTable.size())) return {};
  return {kTable[static_cast<std::size_t>(state)].data(), kOutDegree[static_cast<std::size_t>(state)]};
}

std::optional<int> step(int state, char symbol) {
  for (const auto& t : transitions(state)) {
    if (t.symbol == symbol) return t.target;
  }
  return std::nullopt;
}

bool validate(std::string_view text) {
  int state = kStartState;
  for (char c : text) {
    auto next = step(state, c);
    if (!next) return false;
    state = *next;
  }
  return state == kAcceptState;
}

std::string generate_true(Rng& rng, int min_len) {
  if (min_len < 5) throw DomainError("generate_true: min_len must be >= 5");
  for (;;) {
    std::string s = random_walk(rng);
    if (static_cast<int>(s.size()) >= min_len) return s;
  }
}

std::string corrupt(std::string_view text, int positions, Rng& rng) {
  if (text.size() < 3) throw DomainError("corrupt: string has no interior");
  const std::size_t interior = text.size() - 2;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(positions, 1)), interior);
  std::vector<std::size_t> slots(interior);
  for (;;) {
    std::iota(slots.begin(), slots.end(), std::size_t{1});
    std::string out(text);
    for (std::size_t i = 0; i < k; ++i) {
      // Partial Fisher-Yates: slots[i] becomes a distinct random interior index.
      std::size_t j = i + static_cast<std::size_t>(rng.below(interior - i));
      std::swap(slots[i], slots[j]);
      out[slots[i]] = static_cast<char>('A' + rng.below(26));
    }
    if (!validate(out)) return out;
  }
}

std::string generate_false(Rng& rng, int min_len) {
  std::string base = generate_true(rng, min_len);
  const int k = static_cast<int>(rng.range(1, 3));
  return corrupt(base, k, rng);
}

Dataset build_dataset(std::size_t n_total, Rng& rng, int min_len) {
  if (n_total < 2 || n_total % 2 != 0) throw DomainError("build_dataset: n_total must be even and >= 2");
  std::vector<LabeledSequence> pool;
  pool.reserve(n_total);
  for (std::size_t i = 0; i < n_total / 2; ++i) pool.push_back({generate_true(rng, min_len), 1});
  for (std::size_t i = 0; i < n_total / 2; ++i) pool.push_back({generate_false(rng, min_len), 0});
  rng.shuffle(std::span(pool));

  Dataset data;
  data.seed = rng.seed();
  data.min_len = min_len;
  const std::size_t n_train = n_total * 3 / 4;
  data.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.test.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
  return data;
}

std::map<std::size_t, std::size_t> length_histogram(std::span<const LabeledSequence> seqs) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& s : seqs) ++hist[s.text.size()];
  return hist;
}

ClassCounts class_counts(std::span<const LabeledSequence> seqs) {
  ClassCounts c;
  for (const auto& s : seqs) (s.label == 1 ? c.valid : c.invalid)++;
  return c;
}

std::string split_csv(std::span<const LabeledSequence> seqs, const Provenance& prov) {
  std::string out = prov.comment_line() + "\nlabel,sequence\n";
  for (const auto& s : seqs) {
    out += std::to_string(s.label);
    out += ',';
    out += s.text;
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& data, const std::filesystem::path& stem, const Provenance& prov) {
  auto with_suffix = [&](const char* suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  const auto train_counts = class_counts(data.train);
  const auto test_counts = class_counts(data.test);
  nlohmann::ordered_json meta;
  meta["tool"] = std::string(kToolName) + " " + std::string(kToolVersion);
  meta["config_hash"] = prov.config_hash;
  meta["seed"] = data.seed;
  meta["n_total"] = data.total();
  meta["min_len"] = data.min_len;
  meta["train"] = {{"valid", train_counts.valid}, {"invalid", train_counts.invalid}};
  meta["test"] = {{"valid", test_counts.valid}, {"invalid", test_counts.invalid}};

  write_file_atomic(with_suffix(".train.csv"), split_csv(data.train, prov));
  write_file_atomic(with_suffix(".test.csv"), split_csv(data.test, prov));
  write_file_atomic(with_suffix(".meta.json"), meta.dump(2) + "\n");
}

std::vector<LabeledSequence> read_split_csv(const std::filesystem::path& path) {
  auto lines = read_data_lines(path);
  if (lines.empty() || lines.front() != "label,sequence") {
    throw InputError(path.string() + ": missing 'label,sequence' header");
  }
  std::vector<LabeledSequence> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.size() < 2 || (line[0] != '0' && line[0] != '1') || line[1] != ',') {
      throw InputError(path.string() + ":" + std::to_string(i + 1) + ": malformed row");
    }
    std::string text = line.substr(2);
    for (unsigned char c : text) {
      if (c >= 128) {
        throw InputError(path.string() + ":" + std::to_string(i + 1) + ": non-ASCII character");
      }
    }
    out.push_back({std::move(text), line[0] - '0'});
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& stem) {
  auto with_suffix = [&](const char* suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  Dataset data;
  data.train = read_split_csv(with_suffix(".train.csv"));
  data.test = read_split_csv(with_suffix(".test.csv"));
  const auto meta_path = with_suffix(".meta.json");
  if (std::filesystem::exists(meta_path)) {
    try {
      auto meta = nlohmann::json::parse(read_text_file(meta_path));
      data.seed = meta.value("seed", std::uint64_t{0});
      data.min_len = meta.value("min_len", kDefaultMinLength);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(meta_path.string() + ": " + e.what());
    }
  }
  return data;
}

}  // namespace srnn::reber
