// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace mtl {

using TokenId = std::size_t;

// Reserved vocabulary ids.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr std::size_t kNumReserved = 4;

enum class TaskKind { Classification, Generation, Regression };
enum class LossKind { CrossEntropy, SequenceCrossEntropy, MeanSquaredError };

std::string_view to_string(TaskKind kind);
std::string_view to_string(LossKind kind);
TaskKind parse_task_kind(std::string_view s);
LossKind parse_loss_kind(std::string_view s);
LossKind default_loss(TaskKind kind);

/// One task's identity and its optimization knobs.
struct TaskSpec {
  int id = 1;  ///< 1..T, contiguous
  std::string name;
  TaskKind kind = TaskKind::Classification;
  LossKind loss = LossKind::CrossEntropy;
  double alpha = 1.0;            ///< joint-loss weight
  double lr = 0.1;               ///< learning rate of this task's head and adapter
  std::size_t num_classes = 2;   ///< classification only

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Throws ConfigError unless ids are 1..T, names are unique, alphas are
/// non-negative with a positive sum, rates are non-negative, loss kinds match
/// task kinds and classifiers have at least two classes.
void validate_tasks(std::span<const TaskSpec> tasks);

}  // namespace mtl
