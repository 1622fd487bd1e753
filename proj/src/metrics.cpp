// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/metrics.hpp"

#include <algorithm>
#include <unordered_map>

#include "mtl/error.hpp"

namespace mtl {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> golds) {
  if (preds.size() != golds.size()) {
    throw ContractError("accuracy: " + std::to_string(preds.size()) + " predictions but " +
                        std::to_string(golds.size()) + " gold labels");
  }
  if (preds.empty()) throw ContractError("accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

Rouge1 rouge1(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  if (reference.empty()) throw ContractError("rouge1: empty reference");
  std::unordered_map<TokenId, std::size_t> ref_counts;
  for (TokenId t : reference) ++ref_counts[t];
  std::size_t overlap = 0;
  for (TokenId t : candidate) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  Rouge1 r;
  r.precision = candidate.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(candidate.size());
  r.recall = static_cast<double>(overlap) / static_cast<double>(reference.size());
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

Rouge1 mean_rouge1(std::span<const RougePair> pairs) {
  if (pairs.empty()) throw ContractError("corpus_rouge1: no pairs");
  Rouge1 total;
  for (const auto& [cand, ref] : pairs) {
    const Rouge1 r = rouge1(cand, ref);
    total.precision += r.precision;
    total.recall += r.recall;
    total.f1 += r.f1;
  }
  const double n = static_cast<double>(pairs.size());
  return Rouge1{total.precision / n, total.recall / n, total.f1 / n};
}

MetricReport corpus_rouge1(std::span<const RougePair> pairs, int task_id) {
  return MetricReport{task_id, "rouge1_f", mean_rouge1(pairs).f1, pairs.size()};
}

}  // namespace mtl
