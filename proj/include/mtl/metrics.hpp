// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtl/types.hpp"

namespace mtl {

struct MetricReport {
  int task_id = 0;
  std::string name;  // acc | rouge1_f | rouge1_p | rouge1_r
  double value = 0.0;
  std::size_t n_examples = 0;
};

/// Fraction of equal positions. Throws ContractError on empty or unequal lists.
double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> golds);

struct Rouge1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped unigram overlap. Precision is 0 for an empty candidate; throws
/// ContractError for an empty reference.
Rouge1 rouge1(std::span<const TokenId> candidate, std::span<const TokenId> reference);

using RougePair = std::pair<std::vector<TokenId>, std::vector<TokenId>>;  // (candidate, reference)

/// Per-pair means of precision, recall and F1.
Rouge1 mean_rouge1(std::span<const RougePair> pairs);
/// Mean F1 as a report named rouge1_f. Throws ContractError on an empty list.
MetricReport corpus_rouge1(std::span<const RougePair> pairs, int task_id = 0);

}  // namespace mtl
