// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training protocol: optional masked-token pretraining of the encoder, then
// one joint gradient-descent step per round on
//   L_total = sum_t alpha_t L_t + lambda * L_cos
// with theta updated at base_lr and each task's phi_t at its own lr.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtl/data.hpp"
#include "mtl/metrics.hpp"
#include "mtl/model.hpp"
#include "mtl/objective.hpp"

namespace mtl {

struct TrainConfig {
  std::uint64_t seed = 17;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double base_lr = 0.1;
  std::vector<TaskSpec> tasks;  // alpha and lr per task
  RegularizerConfig reg;
  DynamicWeightConfig dynamic;
  std::size_t pretrain_epochs = 0;
  double pretrain_lr = 0.1;
  std::optional<int> single_task;  // single-task mode when set
  ModelDims dims;                  // vocab is taken from the data when 0
  LoraConfig lora;
  std::size_t max_decode_len = 8;
  std::size_t eval_chunk = 256;
  bool record_wall_time = false;  // wall_s is 0 unless set, keeping outputs byte-stable
};

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& cfg);

/// Ids of the tasks a run optimizes: all tasks, or just the single task.
std::vector<int> active_tasks(const TrainConfig& cfg);

/// Mean per-example loss of `examples` for task `task_id`, as a tape node when
/// `params` is bound. The task's adapter is applied when present.
Tensor task_loss(const ModelParams& params, int task_id, std::span<const Example> examples);

struct StepResult {
  std::vector<double> losses;      // per active task, unweighted
  std::vector<double> grad_norms;  // |grad_theta L_t|, empty when not computed
  std::vector<double> alphas;      // weights used for this step
  double cos_penalty = 0.0;
  double total = 0.0;
};

/// One joint update over a round. Throws NumericError naming `round_index`
/// when a loss or gradient is not finite.
StepResult train_step(ModelParams& params, const Round& round, const TrainConfig& cfg, WeightState& weights,
                      std::size_t round_index = 0);

struct TaskEval {
  int task_id = 0;
  double loss = 0.0;
  std::optional<MetricReport> metric;  // none for regression
};

/// Per-task teacher-forced mean loss plus accuracy (classification) or mean
/// ROUGE-1 F1 of greedy decodes (generation). Never mutates `params`.
std::vector<TaskEval> evaluate(const ModelParams& params, std::span<const TaskData> data, bool test_split,
                               const TrainConfig& cfg);
/// Same for explicit example lists, one per entry of `task_ids`.
std::vector<TaskEval> evaluate(const ModelParams& params, std::span<const int> task_ids,
                               std::span<const std::vector<Example>> examples, const TrainConfig& cfg);

/// Greedy decodes for a batch of inputs; row i matches generate_greedy on input i.
std::vector<std::vector<TokenId>> decode_batch(const ModelParams& params, int task_id,
                                               std::span<const std::vector<TokenId>> inputs, std::size_t max_len);

struct PretrainOptions {
  std::size_t epochs = 0;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
};

struct PretrainResult {
  ModelParams params;
  std::vector<double> epoch_losses;  // mean masked-token loss seen during each epoch
};

/// Masked-token pretraining of theta: each sentence gets one position
/// (drawn once per seed) replaced by UNK and a temporary [d x V] head
/// predicts the original token. Only theta is kept. Throws ContractError on
/// an empty corpus.
PretrainResult pretrain_shared(const ModelParams& params, std::span<const std::vector<TokenId>> corpus,
                               const PretrainOptions& opts);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string split;      // train | test
  int task_id = 0;
  std::string task;
  double loss = 0.0;
  std::string metric_name;  // empty when the task has no metric
  double metric_value = 0.0;
  double wall_s = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> records;
  std::vector<double> pretrain_losses;
  std::size_t steps = 0;
  WeightState weights;
};

/// Initializes from cfg.seed, optionally pretrains on the training inputs of
/// the active tasks, then trains for cfg.epochs, evaluating on train and test
/// after every epoch. Deterministic per (cfg, data).
TrainResult train(const TrainConfig& cfg, std::span<const TaskData> data);

/// The curves CSV: header plus one row per record, 9 significant digits.
std::string curves_csv(std::span<const EpochRecord> records);
std::vector<EpochRecord> parse_curves_csv(std::string_view text);

struct ComparisonRow {
  std::string run;   // mtl_lambda | mtl_plain | single_<task>
  std::string task;  // all | <task>
  std::optional<double> acc;
  std::optional<double> rouge1_f;
};

/// Trains multi-task with cfg's lambda, multi-task with lambda = 0 and one
/// single-task run per task (lambda = 0), reporting final test metrics.
std::vector<ComparisonRow> run_baseline_comparison(const TrainConfig& cfg, std::span<const TaskData> data);
std::string comparison_csv(std::span<const ComparisonRow> rows);

/// Formats with 9 significant digits ("%.9g").
std::string format_float(double v);

}  // namespace mtl
