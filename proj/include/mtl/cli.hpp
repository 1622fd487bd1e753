// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// The `mtl` command-line front end. Commands run in-process through run() so
// tests can drive them without spawning a shell.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtl/data.hpp"
#include "mtl/trainer.hpp"

namespace mtl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // usage, config, data and I/O errors
inline constexpr int kExitNumeric = 3;  // non-finite loss or gradient

struct TaskOverride {
  std::optional<double> alpha;
  std::optional<double> lr;
};

/// Everything a run needs besides the data files. Built-in defaults are the
/// pinned reference configuration.
struct RunConfig {
  std::uint64_t seed = 17;
  SyntheticSpec data;
  TrainConfig train;  // tasks and dims.vocab are filled from the dataset
  std::map<std::string, TaskOverride> tasks;
  std::optional<std::string> single_task;  // task name; multi-task when empty
  std::filesystem::path data_dir = "data";
  std::optional<std::filesystem::path> checkpoint;  // defaults to <out_dir>/checkpoint.bin
  std::filesystem::path out_dir = "out";
};

RunConfig default_run_config();

/// Strict parse over `base`: unknown keys, wrong types and out-of-range
/// values raise ConfigError naming the dotted field path.
RunConfig parse_run_config(const nlohmann::json& doc, RunConfig base = default_run_config());
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// TrainConfig for the given dataset: task specs with overrides applied,
/// vocabulary size and single-task id resolved.
TrainConfig resolve_train_config(const RunConfig& cfg, std::span<const TaskSpec> tasks, std::size_t vocab_size);

/// <dir>/vocab.json, <dir>/tasks.json and <dir>/<task>/{train,valid,test}.jsonl.
void save_dataset(const Corpus& corpus, const std::filesystem::path& dir);
/// Throws IoError when the directory or a file is missing.
Corpus load_dataset(const std::filesystem::path& dir);

/// Loss-vs-epoch line chart, one polyline per (split, task). Byte-stable.
std::string render_curves_svg(std::span<const EpochRecord> records);

/// Runs `mtl <args...>` (args excludes the program name). Returns the exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace mtl::cli
