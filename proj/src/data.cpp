// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mtl/error.hpp"
#include "mtl/io.hpp"
#include "mtl/log.hpp"
#include "mtl/rng.hpp"

namespace mtl {

using json = nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t b = i, e = j;
    while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b < e) {
      std::string tok(text.substr(b, e - b));
      for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  texts_.reserve(kNumReserved + words.size());
  for (std::string_view r : kReservedTexts) texts_.emplace_back(r);
  for (std::string& w : words) texts_.push_back(std::move(w));
  for (TokenId i = 0; i < texts_.size(); ++i) {
    if (texts_[i].empty()) throw ContractError("vocabulary entry " + std::to_string(i) + " is empty");
    if (!ids_.emplace(texts_[i], i).second) {
      throw ContractError("duplicate vocabulary entry '" + texts_[i] + "' at id " + std::to_string(i));
    }
  }
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

TokenId Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::text(TokenId id) const {
  if (id >= texts_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                     std::to_string(texts_.size()));
  }
  return texts_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(text(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, json(texts_).dump(1) + "\n"); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> entries;
  try {
    entries = json::parse(text).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("vocabulary " + path.string() + ": " + e.what());
  }
  if (entries.size() < kNumReserved) throw FormatError("vocabulary " + path.string() + " lacks the reserved entries");
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (entries[i] != kReservedTexts[i]) {
      throw FormatError("vocabulary " + path.string() + ": id " + std::to_string(i) + " must be " +
                        std::string(kReservedTexts[i]));
    }
  }
  try {
    return Vocabulary(std::vector<std::string>(entries.begin() + kNumReserved, entries.end()));
  } catch (const ContractError& e) {
    throw FormatError("vocabulary " + path.string() + ": " + e.what());
  }
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const std::string& w : sentence) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    const bool reserved = std::find(std::begin(kReservedTexts), std::end(kReservedTexts), w) != std::end(kReservedTexts);
    if (c >= min_count && !reserved && !w.empty()) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary(std::move(words));
}

// ---------------------------------------------------------------------------
// Examples

void validate_example(const Example& ex, const TaskSpec& task) {
  if (ex.task_id != task.id) {
    throw ContractError("example " + ex.uid + " has task id " + std::to_string(ex.task_id) + ", expected " +
                        std::to_string(task.id));
  }
  if (ex.tokens.empty()) throw ContractError("example " + ex.uid + " has no tokens");
  switch (task.kind) {
    case TaskKind::Classification:
      if (!std::holds_alternative<std::size_t>(ex.target)) throw ContractError("example " + ex.uid + " needs a class label");
      if (ex.label() >= task.num_classes) {
        throw ContractError("example " + ex.uid + " label " + std::to_string(ex.label()) + " >= " +
                            std::to_string(task.num_classes) + " classes");
      }
      break;
    case TaskKind::Generation:
      if (!std::holds_alternative<std::vector<TokenId>>(ex.target)) {
        throw ContractError("example " + ex.uid + " needs a token sequence target");
      }
      if (ex.sequence().empty() || ex.sequence().back() != kEos) {
        throw ContractError("example " + ex.uid + " target must end with EOS");
      }
      break;
    case TaskKind::Regression:
      if (!std::holds_alternative<double>(ex.target)) throw ContractError("example " + ex.uid + " needs a score");
      break;
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ (0x9E3779B97F4A7C15ull * (stream + 1));
}

std::string numbered(std::string_view prefix, std::size_t i) { return std::string(prefix) + std::to_string(i); }

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

struct RawExample {
  std::vector<std::string> words;
  Target target;  // class label, or keyword words are kept in `summary`
  std::vector<std::string> summary;
};

std::size_t n_positive(const SyntheticSpec& spec) { return (spec.n_polar + 1) / 2; }

RawExample synth_sentence(const SyntheticSpec& spec, const std::vector<int>& kw_polarity, Rng& rng, bool summarize) {
  const std::size_t length = draw_between(rng, spec.min_length, spec.max_length);
  const std::size_t n_kw = summarize ? draw_between(rng, 1, spec.max_summary) : 1;
  const std::size_t n_pol = draw_between(rng, spec.min_polar, spec.max_polar);

  std::vector<std::size_t> kw_pool(spec.n_keywords);
  std::iota(kw_pool.begin(), kw_pool.end(), 0);
  for (std::size_t i = 0; i < n_kw; ++i) std::swap(kw_pool[i], kw_pool[i + rng.below(spec.n_keywords - i)]);
  std::vector<std::size_t> keywords(kw_pool.begin(), kw_pool.begin() + static_cast<std::ptrdiff_t>(n_kw));
  const int anchor = kw_polarity[keywords[0]];

  const std::size_t n_pos_words = n_positive(spec), n_neg_words = spec.n_polar - n_pos_words;
  std::vector<std::string> words;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n_pol; ++i) {
    const int polarity = rng.bernoulli(spec.rho) ? anchor : static_cast<int>(rng.below(2));
    if (polarity == 1) {
      ++positives;
      words.push_back(numbered("pos", rng.below(n_pos_words)));
    } else {
      words.push_back(numbered("neg", rng.below(n_neg_words)));
    }
  }
  for (std::size_t i = n_kw + n_pol; i < length; ++i) words.push_back(numbered("w", rng.below(spec.n_filler)));
  for (std::size_t i = 0; i < n_kw; ++i) words.push_back("");  // keyword slots
  rng.shuffle(words);

  // keywords occupy their slots in ascending index order
  std::sort(keywords.begin(), keywords.end());
  RawExample ex;
  std::size_t next_kw = 0;
  for (std::string& w : words) {
    if (w.empty()) {
      w = numbered("kw", keywords[next_kw++]);
      ex.summary.push_back(w);
    }
  }
  ex.words = std::move(words);
  if (!summarize) ex.target = static_cast<std::size_t>(2 * positives > n_pol ? 1 : 0);
  return ex;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic spec: " + m); };
  if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) fail("rho must be in [0, 1]");
  if (spec.n_examples < 10) fail("n_examples must be >= 10 so every split is non-empty");
  if (spec.n_polar < 2) fail("n_polar must be >= 2");
  if (spec.n_keywords < 1 || spec.n_filler < 1) fail("n_keywords and n_filler must be >= 1");
  if (spec.min_length < 1 || spec.min_length > spec.max_length) fail("need 1 <= min_length <= max_length");
  if (spec.min_polar < 1 || spec.min_polar > spec.max_polar) fail("need 1 <= min_polar <= max_polar");
  if (spec.max_summary < 1) fail("max_summary must be >= 1");
  if (spec.max_summary > spec.n_keywords) fail("max_summary exceeds the number of keywords");
  if (spec.max_summary + spec.max_polar > spec.min_length) {
    fail("max_summary (" + std::to_string(spec.max_summary) + ") plus max_polar (" + std::to_string(spec.max_polar) +
         ") exceeds min_length (" + std::to_string(spec.min_length) + ")");
  }
}

std::vector<int> keyword_polarities(const SyntheticSpec& spec) {
  Rng rng(substream(spec.seed, 0));
  std::vector<int> out(spec.n_keywords);
  for (int& p : out) p = static_cast<int>(rng.below(2));
  return out;
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const std::vector<int> polarity = keyword_polarities(spec);
  const TaskSpec specs[2] = {
      TaskSpec{1, "cls", TaskKind::Classification, LossKind::CrossEntropy, 1.0, 0.1, 2},
      TaskSpec{2, "gen", TaskKind::Generation, LossKind::SequenceCrossEntropy, 1.0, 0.1, 2},
  };

  std::vector<RawExample> raw[2];
  std::vector<std::vector<std::string>> all_words;
  for (int t = 0; t < 2; ++t) {
    Rng rng(substream(spec.seed, 1 + static_cast<std::uint64_t>(t)));
    for (std::size_t i = 0; i < spec.n_examples; ++i) {
      raw[t].push_back(synth_sentence(spec, polarity, rng, t == 1));
      all_words.push_back(raw[t].back().words);
    }
  }

  Corpus corpus;
  corpus.vocab = build_vocab(all_words, 1);
  for (int t = 0; t < 2; ++t) {
    std::vector<Example> examples;
    for (std::size_t i = 0; i < raw[t].size(); ++i) {
      Example ex;
      ex.uid = specs[t].name + "-" + std::to_string(i);
      ex.task_id = specs[t].id;
      ex.tokens = corpus.vocab.encode(raw[t][i].words);
      if (t == 0) {
        ex.target = raw[t][i].target;
      } else {
        std::vector<TokenId> seq = corpus.vocab.encode(raw[t][i].summary);
        seq.push_back(kEos);
        ex.target = std::move(seq);
      }
      examples.push_back(std::move(ex));
    }
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(substream(spec.seed, 10 + static_cast<std::uint64_t>(t)));
    split_rng.shuffle(order);
    const std::size_t n = examples.size(), n_train = n * 8 / 10, n_valid = n / 10;
    TaskData data;
    data.spec = specs[t];
    for (std::size_t k = 0; k < n; ++k) {
      Example& ex = examples[order[k]];
      (k < n_train ? data.train : k < n_train + n_valid ? data.valid : data.test).push_back(std::move(ex));
    }
    corpus.tasks.push_back(std::move(data));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

const TaskSpec* find_task(std::span<const TaskSpec> tasks, std::string_view name) {
  for (const TaskSpec& t : tasks) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void finish_load(const std::filesystem::path& path, std::size_t records, std::vector<RowError>& errors,
                 std::vector<RowError>* rejects) {
  for (const RowError& e : errors) log_warn(path.string() + ":" + std::to_string(e.line) + ": " + e.reason);
  if (records == 0) log_warn(path.string() + ": no records");
  if (records > 0 && 10 * errors.size() > records) {
    std::ostringstream msg;
    msg << path.string() << ": " << errors.size() << " of " << records << " rows are malformed (lines";
    for (std::size_t i = 0; i < errors.size() && i < 10; ++i) msg << ' ' << errors[i].line;
    if (errors.size() > 10) msg << " ...";
    msg << ")";
    throw FormatError(msg.str());
  }
  if (rejects != nullptr) rejects->insert(rejects->end(), errors.begin(), errors.end());
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

Example parse_jsonl_record(const json& j, const Vocabulary& vocab, std::span<const TaskSpec> tasks,
                           const std::string& fallback_uid) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  if (!j.contains("task") || !j["task"].is_string()) throw std::invalid_argument("missing \"task\"");
  const TaskSpec* task = find_task(tasks, j["task"].get<std::string>());
  if (task == nullptr) throw std::invalid_argument("unknown task '" + j["task"].get<std::string>() + "'");

  Example ex;
  ex.task_id = task->id;
  ex.uid = fallback_uid;
  if (j.contains("id")) ex.uid = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (j.contains("tokens")) {
    ex.tokens = vocab.encode(j["tokens"].get<std::vector<std::string>>());
  } else if (j.contains("text") && j["text"].is_string()) {
    ex.tokens = vocab.encode(tokenize(j["text"].get<std::string>()));
  } else {
    throw std::invalid_argument("missing \"text\" or \"tokens\"");
  }
  if (ex.tokens.empty()) throw std::invalid_argument("no tokens");

  switch (task->kind) {
    case TaskKind::Classification: {
      if (!j.contains("label") || !j["label"].is_number_integer()) throw std::invalid_argument("missing integer \"label\"");
      const auto label = j["label"].get<std::int64_t>();
      if (label < 0 || static_cast<std::size_t>(label) >= task->num_classes) {
        throw std::invalid_argument("label " + std::to_string(label) + " out of range");
      }
      ex.target = static_cast<std::size_t>(label);
      break;
    }
    case TaskKind::Generation: {
      if (!j.contains("summary") || !j["summary"].is_string()) throw std::invalid_argument("missing \"summary\"");
      std::vector<TokenId> seq = vocab.encode(tokenize(j["summary"].get<std::string>()));
      seq.push_back(kEos);
      ex.target = std::move(seq);
      break;
    }
    case TaskKind::Regression:
      if (!j.contains("score") || !j["score"].is_number()) throw std::invalid_argument("missing numeric \"score\"");
      ex.target = j["score"].get<double>();
      break;
  }
  return ex;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cells.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cells;
}

}  // namespace

std::vector<Example> load_jsonl(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::span<const TaskSpec> tasks, std::vector<RowError>* rejects) {
  const std::string text = read_file(path);
  std::vector<Example> out;
  std::vector<RowError> errors;
  std::size_t records = 0;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    ++records;
    const std::string fallback = path.stem().string() + ":" + std::to_string(i + 1);
    try {
      out.push_back(parse_jsonl_record(json::parse(lines[i]), vocab, tasks, fallback));
    } catch (const json::exception& e) {
      errors.push_back(RowError{i + 1, e.what()});
    } catch (const std::invalid_argument& e) {
      errors.push_back(RowError{i + 1, e.what()});
    }
  }
  finish_load(path, records, errors, rejects);
  return out;
}

std::vector<Example> load_glue_tsv(const std::filesystem::path& path, const TsvFormat& format, const Vocabulary& vocab,
                                   const TaskSpec& task, std::vector<RowError>* rejects) {
  if (task.kind != TaskKind::Classification) throw ConfigError("TSV loading supports classification tasks only");
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  std::vector<Example> out;
  std::vector<RowError> errors;
  if (lines.empty()) {
    finish_load(path, 0, errors, rejects);
    return out;
  }
  const std::vector<std::string> header = split_tabs(lines[0]);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path.string() + ":1: header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t col_a = column(format.text_a), col_label = column(format.label);
  const std::optional<std::size_t> col_b = format.text_b ? std::optional(column(*format.text_b)) : std::nullopt;

  std::size_t records = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    ++records;
    const auto cells = split_tabs(lines[i]);
    if (cells.size() != header.size()) {
      errors.push_back(RowError{i + 1, "expected " + std::to_string(header.size()) + " columns, got " +
                                           std::to_string(cells.size())});
      continue;
    }
    std::size_t label = 0;
    const std::string& lab = cells[col_label];
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (ec != std::errc() || ptr != lab.data() + lab.size() || label >= task.num_classes) {
      errors.push_back(RowError{i + 1, "bad label '" + lab + "'"});
      continue;
    }
    Example ex;
    ex.uid = path.stem().string() + ":" + std::to_string(i + 1);
    ex.task_id = task.id;
    ex.tokens = vocab.encode(tokenize(cells[col_a]));
    if (col_b) {
      ex.tokens.push_back(kEos);
      for (TokenId id : vocab.encode(tokenize(cells[*col_b]))) ex.tokens.push_back(id);
    }
    if (ex.tokens.empty()) {
      errors.push_back(RowError{i + 1, "no tokens"});
      continue;
    }
    ex.target = label;
    out.push_back(std::move(ex));
  }
  finish_load(path, records, errors, rejects);
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples, const Vocabulary& vocab,
                 std::span<const TaskSpec> tasks) {
  auto join = [&](std::span<const TokenId> ids) {
    std::string s;
    for (const std::string& w : vocab.decode(ids)) {
      if (!s.empty()) s += ' ';
      s += w;
    }
    return s;
  };
  std::string out;
  for (const Example& ex : examples) {
    const TaskSpec* task = nullptr;
    for (const TaskSpec& t : tasks) {
      if (t.id == ex.task_id) task = &t;
    }
    if (task == nullptr) throw ContractError("write_jsonl: example " + ex.uid + " has an unknown task id");
    json j{{"id", ex.uid}, {"task", task->name}, {"text", join(ex.tokens)}};
    switch (task->kind) {
      case TaskKind::Classification:
        j["label"] = ex.label();
        break;
      case TaskKind::Generation: {
        std::span<const TokenId> seq = ex.sequence();
        if (!seq.empty() && seq.back() == kEos) seq = seq.first(seq.size() - 1);
        j["summary"] = join(seq);
        break;
      }
      case TaskKind::Regression:
        j["score"] = ex.score();
        break;
    }
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Scheduler

std::vector<Round> make_rounds(std::span<const std::vector<Example>> datasets, std::span<const int> task_ids,
                               std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (datasets.size() != task_ids.size()) throw ContractError("make_rounds: one task id per dataset required");
  if (datasets.empty()) throw ConfigError("make_rounds: no tasks");
  std::size_t n_max = 0;
  for (std::size_t t = 0; t < datasets.size(); ++t) {
    if (datasets[t].empty()) throw ConfigError("task " + std::to_string(task_ids[t]) + " has an empty dataset");
    n_max = std::max(n_max, datasets[t].size());
  }
  const std::size_t rounds = (n_max + batch_size - 1) / batch_size;

  Rng rng(seed ^ epoch);
  std::vector<Round> out(rounds);
  for (auto& r : out) r.batches.resize(datasets.size());
  for (std::size_t t = 0; t < datasets.size(); ++t) {
    const std::size_t n = datasets[t].size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::size_t cursor = 0;
    const std::size_t per_round = std::min(batch_size, n);
    for (std::size_t r = 0; r < rounds; ++r) {
      Batch& batch = out[r].batches[t];
      batch.task_id = task_ids[t];
      std::size_t take = per_round;
      if (n == n_max) take = std::min(batch_size, n - cursor);
      for (std::size_t k = 0; k < take; ++k) {
        if (cursor == n) {
          rng.shuffle(perm);
          cursor = 0;
        }
        batch.examples.push_back(datasets[t][perm[cursor++]]);
      }
    }
  }
  return out;
}

}  // namespace mtl
