// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tokenization, vocabulary, dataset ingestion, synthetic corpora and the
// alternating round scheduler.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mtl/error.hpp"
#include "mtl/types.hpp"

namespace mtl {

/// Lowercases, splits on whitespace runs and strips leading/trailing ASCII
/// punctuation from each token. Tokens that become empty are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Token text <-> id bijection with fixed reserved ids 0..3.
class Vocabulary {
 public:
  /// Only the reserved entries.
  Vocabulary();
  /// Reserved entries followed by `words` (ids 4..). Throws ContractError on
  /// duplicates or a reserved text.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return texts_.size(); }
  bool contains(std::string_view word) const;
  /// UNK for unknown words.
  TokenId id(std::string_view word) const;
  /// Throws IndexError for ids >= size().
  const std::string& text(TokenId id) const;
  std::vector<TokenId> encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  /// All entries in id order, reserved ones included.
  const std::vector<std::string>& texts() const { return texts_; }

  /// JSON list of entries in id order. Writes atomically.
  void save(const std::filesystem::path& path) const;
  /// Throws IoError / FormatError.
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.texts_ == b.texts_; }

 private:
  std::vector<std::string> texts_;
  std::unordered_map<std::string, TokenId> ids_;
};

inline constexpr std::string_view kReservedTexts[kNumReserved] = {"<pad>", "<unk>", "<bos>", "<eos>"};

/// Tokens with frequency >= min_count get ids 4.. by descending frequency,
/// ties lexicographic. Throws ContractError if min_count < 1.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count = 1);

/// Class index | token sequence ending in EOS | real score.
using Target = std::variant<std::size_t, std::vector<TokenId>, double>;

struct Example {
  std::string uid;
  int task_id = 0;
  std::vector<TokenId> tokens;
  Target target;

  std::size_t label() const { return std::get<std::size_t>(target); }
  const std::vector<TokenId>& sequence() const { return std::get<std::vector<TokenId>>(target); }
  double score() const { return std::get<double>(target); }

  friend bool operator==(const Example&, const Example&) = default;
};

/// Throws ContractError when the target variant does not match `kind` or the
/// example is otherwise malformed (empty tokens, sequence without final EOS).
void validate_example(const Example& ex, const TaskSpec& task);

struct TaskData {
  TaskSpec spec;
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

struct Corpus {
  std::vector<TaskData> tasks;
  Vocabulary vocab;
};

struct SyntheticSpec {
  std::uint64_t seed = 17;
  std::size_t n_examples = 1000;  // per task
  std::size_t n_polar = 8;        // half positive, half negative
  std::size_t n_keywords = 12;
  std::size_t n_filler = 40;
  std::size_t min_length = 6;
  std::size_t max_length = 12;
  std::size_t min_polar = 1;  // polar tokens per sentence
  std::size_t max_polar = 3;
  double rho = 0.9;
  std::size_t max_summary = 3;  // K
};

/// Throws ConfigError for an impossible spec.
void validate(const SyntheticSpec& spec);

/// Polarity assigned to keyword `k` (0 = negative, 1 = positive) for this seed.
std::vector<int> keyword_polarities(const SyntheticSpec& spec);

/// Two tasks: 1 = "cls" (binary sentiment), 2 = "gen" (keyword extraction),
/// each split 80/10/10. Deterministic per spec.
Corpus generate_synthetic(const SyntheticSpec& spec);

struct RowError {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

/// Records: {"task": name, "text" | "tokens", "label" | "summary" | "score",
/// optional "id"}. Blank lines are skipped. Malformed rows are logged and
/// appended to `rejects`; more than 10% malformed raises FormatError.
std::vector<Example> load_jsonl(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::span<const TaskSpec> tasks, std::vector<RowError>* rejects = nullptr);

/// Column roles of a GLUE-style TSV with a header row.
struct TsvFormat {
  std::string text_a = "sentence";
  std::optional<std::string> text_b;  // appended after an EOS separator
  std::string label = "label";
};

std::vector<Example> load_glue_tsv(const std::filesystem::path& path, const TsvFormat& format, const Vocabulary& vocab,
                                   const TaskSpec& task, std::vector<RowError>* rejects = nullptr);

/// Inverse of load_jsonl for examples whose tokens are in `vocab`. Writes atomically.
void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples, const Vocabulary& vocab,
                 std::span<const TaskSpec> tasks);

struct Batch {
  int task_id = 0;
  std::vector<Example> examples;
};

/// One batch per task, in task order.
struct Round {
  std::vector<Batch> batches;
};

/// Shuffles each task with Rng(seed ^ epoch); ceil(max_t n_t / batch_size)
/// rounds. Tasks of maximal size are consumed exactly once; smaller tasks
/// wrap around with a fresh shuffle. `datasets[i]` belongs to task_ids[i].
std::vector<Round> make_rounds(std::span<const std::vector<Example>> datasets, std::span<const int> task_ids,
                               std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

}  // namespace mtl
