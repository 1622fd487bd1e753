// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/types.hpp"

#include <cmath>
#include <set>

#include "mtl/error.hpp"

namespace mtl {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Generation: return "generation";
    case TaskKind::Regression: return "regression";
  }
  return "?";
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::SequenceCrossEntropy: return "sequence_cross_entropy";
    case LossKind::MeanSquaredError: return "mse";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::Classification;
  if (s == "generation") return TaskKind::Generation;
  if (s == "regression") return TaskKind::Regression;
  throw ConfigError("unknown task kind '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  if (s == "sequence_cross_entropy") return LossKind::SequenceCrossEntropy;
  if (s == "mse") return LossKind::MeanSquaredError;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

LossKind default_loss(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return LossKind::CrossEntropy;
    case TaskKind::Generation: return LossKind::SequenceCrossEntropy;
    case TaskKind::Regression: return LossKind::MeanSquaredError;
  }
  return LossKind::CrossEntropy;
}

void validate_tasks(std::span<const TaskSpec> tasks) {
  if (tasks.empty()) throw ConfigError("task list is empty");
  std::set<std::string> names;
  double alpha_sum = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpec& t = tasks[i];
    const std::string where = "task '" + t.name + "'";
    if (t.id != static_cast<int>(i) + 1) throw ConfigError(where + ": ids must be 1..T in order");
    if (t.name.empty() || !names.insert(t.name).second) throw ConfigError(where + ": names must be unique and non-empty");
    if (!(t.alpha >= 0.0) || !std::isfinite(t.alpha)) throw ConfigError(where + ": alpha must be >= 0");
    if (!(t.lr >= 0.0) || !std::isfinite(t.lr)) throw ConfigError(where + ": lr must be >= 0");
    if (t.loss != default_loss(t.kind)) throw ConfigError(where + ": loss kind does not match task kind");
    if (t.kind == TaskKind::Classification && t.num_classes < 2) throw ConfigError(where + ": need at least 2 classes");
    alpha_sum += t.alpha;
  }
  if (!(alpha_sum > 0.0)) throw ConfigError("sum of task weights must be positive");
}

}  // namespace mtl
