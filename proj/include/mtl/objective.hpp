// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-task losses and the multi-task objective:
//   L       = sum_t alpha_t L_t
//   L_cos   = sum_{t1<t2} variant(cos(grad_theta L_t1, grad_theta L_t2))
//   L_total = L + lambda L_cos

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "mtl/autodiff.hpp"
#include "mtl/types.hpp"

namespace mtl {

enum class CosineVariant { Raw, Relu, Abs };
enum class GradMode { Exact, Detached };

std::string_view to_string(CosineVariant v);
std::string_view to_string(GradMode m);
CosineVariant parse_cosine_variant(std::string_view s);
GradMode parse_grad_mode(std::string_view s);

struct RegularizerConfig {
  double lambda = 0.0;
  double eps = 1e-8;
  CosineVariant variant = CosineVariant::Raw;
  GradMode grad_mode = GradMode::Exact;
};

/// Throws ConfigError on lambda < 0 or eps <= 0.
void validate(const RegularizerConfig& cfg);

/// -log softmax(logits)[label] for logits [C]. Throws IndexError if label >= C.
Tensor cross_entropy(const Tensor& logits, std::size_t label);
/// sum_i weights[i] * (-log softmax(logits[i])[labels[i]]) for logits [N x C].
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                              std::span<const double> weights);
/// Mean per-step cross-entropy. Throws ContractError on a length mismatch or
/// an empty sequence.
Tensor sequence_cross_entropy(std::span<const Tensor> step_logits, std::span<const TokenId> targets);
/// Same, with the steps stacked as rows of a [S x V] tensor.
Tensor sequence_cross_entropy(const Tensor& step_rows, std::span<const TokenId> targets);

/// (pred - target)^2 for a single-element pred.
Tensor mse(const Tensor& pred, double target);
/// sum_i weights[i] * (pred[i] - targets[i])^2 for pred [N] or [N x 1].
Tensor weighted_squared_error(const Tensor& pred, std::span<const double> targets, std::span<const double> weights);

/// sum_t alphas[t] * losses[t]. Throws ContractError on a length mismatch.
Tensor joint_loss(std::span<const Tensor> losses, std::span<const double> alphas);

/// dot(g1, g2) / (max(|g1|, eps) max(|g2|, eps)). Detached mode returns a constant.
Tensor pairwise_cosine(const Tensor& g1, const Tensor& g2, double eps, GradMode mode = GradMode::Exact);

/// Sum of variant(cos) over task pairs t1 < t2 of flattened shared-parameter
/// gradients. Exactly 0 (a constant) for fewer than two tasks.
Tensor cosine_penalty(std::span<const Tensor> flat_grads, const RegularizerConfig& cfg);
/// Flattens each map over `shared` first.
Tensor cosine_penalty(std::span<const GradientMap> grads, std::span<const Tensor> shared,
                      const RegularizerConfig& cfg);

/// L + lambda * L_cos; returns L itself when lambda == 0.
Tensor total_loss(const Tensor& loss, const Tensor& cos_penalty, double lambda);

struct WeightSnapshot {
  std::vector<double> alphas;
  std::vector<double> grad_norms;
};

struct WeightState {
  std::vector<double> alphas;
  std::vector<WeightSnapshot> history;
};

struct DynamicWeightConfig {
  bool enabled = false;
  double alpha_min = 0.1;
  double alpha_max = 10.0;
};

/// Inverse-gradient-norm weights: raw_t = mean(norms) / max(norm_t, eps),
/// normalized to sum T, clamped to [alpha_min, alpha_max] with the free
/// entries rescaled until the sum is T again.
WeightState update_dynamic_weights(const WeightState& state, std::span<const double> grad_norms, double eps,
                                   double alpha_min = 0.1, double alpha_max = 10.0);

}  // namespace mtl
