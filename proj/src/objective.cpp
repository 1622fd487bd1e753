// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace mtl {

std::string_view to_string(CosineVariant v) {
  switch (v) {
    case CosineVariant::Raw:
      return "raw";
    case CosineVariant::Relu:
      return "relu";
    case CosineVariant::Abs:
      return "abs";
  }
  return "raw";
}

std::string_view to_string(GradMode m) { return m == GradMode::Exact ? "exact" : "detached"; }

CosineVariant parse_cosine_variant(std::string_view s) {
  if (s == "raw") return CosineVariant::Raw;
  if (s == "relu") return CosineVariant::Relu;
  if (s == "abs") return CosineVariant::Abs;
  throw ConfigError("unknown cosine variant '" + std::string(s) + "' (expected raw, relu or abs)");
}

GradMode parse_grad_mode(std::string_view s) {
  if (s == "exact") return GradMode::Exact;
  if (s == "detached") return GradMode::Detached;
  throw ConfigError("unknown grad mode '" + std::string(s) + "' (expected exact or detached)");
}

void validate(const RegularizerConfig& cfg) {
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("lambda must be >= 0");
  if (!(cfg.eps > 0.0)) throw ConfigError("eps must be > 0");
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                              std::span<const double> weights) {
  const Tensor x = logits.rank() == 1 ? reshape(logits, {1, logits.size()}) : logits;
  const std::size_t n = x.rows(), c = x.cols();
  if (labels.size() != n || weights.size() != n) {
    throw ContractError("weighted_cross_entropy: " + std::to_string(n) + " rows but " +
                        std::to_string(labels.size()) + " labels and " + std::to_string(weights.size()) + " weights");
  }
  // Subtracting the (constant) row max keeps exp in range; it cancels in the gradient.
  std::vector<double> row_max(n * c), picked(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw IndexError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(c) + " classes");
    }
    double m = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, x.at(i, j));
    std::fill_n(row_max.begin() + static_cast<std::ptrdiff_t>(i * c), c, m);
    picked[i * c + labels[i]] = weights[i];
  }
  const Tensor z = sub(x, Tensor({n, c}, std::move(row_max)));
  const Tensor log_norm = log(matmul(exp(z), Tensor::filled({c, 1}, 1.0)));
  const Tensor w({n, 1}, std::vector<double>(weights.begin(), weights.end()));
  return sub(sum(mul(log_norm, w)), sum(mul(z, Tensor({n, c}, std::move(picked)))));
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy expects logits of shape [C], got " + shape_string(logits.shape()));
  const std::size_t labels[] = {label};
  const double weights[] = {1.0};
  return weighted_cross_entropy(logits, labels, weights);
}

Tensor sequence_cross_entropy(const Tensor& step_rows, std::span<const TokenId> targets) {
  if (step_rows.rank() != 2) {
    throw DimensionError("sequence_cross_entropy expects [S x V] rows, got " + shape_string(step_rows.shape()));
  }
  if (step_rows.rows() != targets.size()) {
    throw ContractError("sequence_cross_entropy: " + std::to_string(step_rows.rows()) + " steps but " +
                        std::to_string(targets.size()) + " targets");
  }
  const std::vector<double> weights(targets.size(), 1.0 / static_cast<double>(targets.size()));
  return weighted_cross_entropy(step_rows, targets, weights);
}

Tensor sequence_cross_entropy(std::span<const Tensor> step_logits, std::span<const TokenId> targets) {
  if (step_logits.size() != targets.size()) {
    throw ContractError("sequence_cross_entropy: " + std::to_string(step_logits.size()) + " steps but " +
                        std::to_string(targets.size()) + " targets");
  }
  if (step_logits.empty()) throw ContractError("sequence_cross_entropy: empty sequence");
  std::vector<Tensor> cols;
  cols.reserve(step_logits.size());
  for (const Tensor& s : step_logits) {
    if (s.rank() != 1) throw DimensionError("step logits must have shape [V], got " + shape_string(s.shape()));
    cols.push_back(reshape(s, {s.size(), 1}));
  }
  return sequence_cross_entropy(transpose(concat_cols(cols)), targets);
}

Tensor mse(const Tensor& pred, double target) {
  if (pred.size() != 1) throw DimensionError("mse expects a single prediction, got " + shape_string(pred.shape()));
  const Tensor diff = shift(reshape(pred, {1}), -target);
  return mul(diff, diff);
}

Tensor weighted_squared_error(const Tensor& pred, std::span<const double> targets, std::span<const double> weights) {
  const std::size_t n = pred.size();
  if (targets.size() != n || weights.size() != n) {
    throw ContractError("weighted_squared_error: " + std::to_string(n) + " predictions but " +
                        std::to_string(targets.size()) + " targets and " + std::to_string(weights.size()) + " weights");
  }
  const Tensor diff = sub(reshape(pred, {n}), Tensor({n}, std::vector<double>(targets.begin(), targets.end())));
  return sum(mul(mul(diff, diff), Tensor({n}, std::vector<double>(weights.begin(), weights.end()))));
}

Tensor joint_loss(std::span<const Tensor> losses, std::span<const double> alphas) {
  if (losses.size() != alphas.size()) {
    throw ContractError("joint_loss: " + std::to_string(losses.size()) + " losses but " +
                        std::to_string(alphas.size()) + " weights");
  }
  if (losses.empty()) throw ContractError("joint_loss: no tasks");
  Tensor total = scale(losses[0], alphas[0]);
  for (std::size_t t = 1; t < losses.size(); ++t) total = add(total, scale(losses[t], alphas[t]));
  return total;
}

namespace {

// 1 / max(|g|, eps) as a tape expression (a constant when floored).
Tensor inverse_norm(const Tensor& g, double eps) {
  const Tensor sumsq = sum(mul(g, g));
  if (std::sqrt(sumsq.item()) > eps) return exp(scale(log(sumsq), -0.5));
  return Tensor::scalar(1.0 / eps);
}

Tensor apply_variant(const Tensor& c, CosineVariant v) {
  switch (v) {
    case CosineVariant::Raw:
      return c;
    case CosineVariant::Relu:
      return relu(c);
    case CosineVariant::Abs:
      return add(relu(c), relu(scale(c, -1.0)));
  }
  return c;
}

}  // namespace

Tensor pairwise_cosine(const Tensor& g1, const Tensor& g2, double eps, GradMode mode) {
  if (g1.rank() != 1 || g2.rank() != 1 || g1.size() != g2.size()) {
    throw ContractError("pairwise_cosine needs two [P] vectors of equal length, got " + shape_string(g1.shape()) +
                        " and " + shape_string(g2.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("pairwise_cosine: eps must be > 0");
  const Tensor a = mode == GradMode::Detached ? g1.detach() : g1;
  const Tensor b = mode == GradMode::Detached ? g2.detach() : g2;
  return mul(mul(sum(mul(a, b)), inverse_norm(a, eps)), inverse_norm(b, eps));
}

Tensor cosine_penalty(std::span<const Tensor> flat_grads, const RegularizerConfig& cfg) {
  validate(cfg);
  if (flat_grads.size() < 2) return Tensor::scalar(0.0);
  std::optional<Tensor> total;
  for (std::size_t i = 0; i < flat_grads.size(); ++i) {
    for (std::size_t j = i + 1; j < flat_grads.size(); ++j) {
      Tensor term = apply_variant(pairwise_cosine(flat_grads[i], flat_grads[j], cfg.eps, cfg.grad_mode), cfg.variant);
      total = total ? add(*total, term) : term;
    }
  }
  return *total;
}

Tensor cosine_penalty(std::span<const GradientMap> grads, std::span<const Tensor> shared,
                      const RegularizerConfig& cfg) {
  std::vector<Tensor> flat;
  flat.reserve(grads.size());
  for (const GradientMap& g : grads) flat.push_back(flatten_grads(g, shared));
  return cosine_penalty(flat, cfg);
}

Tensor total_loss(const Tensor& loss, const Tensor& cos_penalty, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("total_loss: lambda must be >= 0");
  if (lambda == 0.0) return loss;
  return add(loss, scale(cos_penalty, lambda));
}

WeightState update_dynamic_weights(const WeightState& state, std::span<const double> grad_norms, double eps,
                                   double alpha_min, double alpha_max) {
  const std::size_t T = grad_norms.size();
  if (T == 0) throw ContractError("update_dynamic_weights: no tasks");
  if (!state.alphas.empty() && state.alphas.size() != T) {
    throw ContractError("update_dynamic_weights: " + std::to_string(state.alphas.size()) + " weights but " +
                        std::to_string(T) + " gradient norms");
  }
  if (!(eps > 0.0)) throw ContractError("update_dynamic_weights: eps must be > 0");
  if (!(alpha_min > 0.0 && alpha_min <= 1.0 && alpha_max >= 1.0)) {
    throw ConfigError("dynamic weight bounds must satisfy 0 < alpha_min <= 1 <= alpha_max");
  }
  for (double n : grad_norms) {
    if (!(n >= 0.0) || !std::isfinite(n)) throw NumericError("gradient norm must be finite and >= 0");
  }

  const double total = static_cast<double>(T);
  const double mean_norm = std::accumulate(grad_norms.begin(), grad_norms.end(), 0.0) / total;
  std::vector<double> alpha(T);
  for (std::size_t t = 0; t < T; ++t) alpha[t] = mean_norm / std::max(grad_norms[t], eps);
  double raw_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  if (!(raw_sum > 0.0)) {
    std::fill(alpha.begin(), alpha.end(), 1.0);  // all norms zero
  } else {
    for (double& a : alpha) a = a * total / raw_sum;
  }

  // Clamp with the sum restored: find c with sum_t clamp(c * alpha_t) = T
  // (monotone in c), then rescale the entries strictly inside the bounds.
  auto clamped_sum = [&](double c) {
    double s = 0.0;
    for (double a : alpha) s += std::clamp(c * a, alpha_min, alpha_max);
    return s;
  };
  double lo = 0.0, hi = 1.0;
  while (clamped_sum(hi) < total) hi *= 2.0;
  for (int iter = 0; iter < 200 && lo < hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (clamped_sum(mid) < total ? lo : hi) = mid;
  }
  double fixed_sum = 0.0, free_sum = 0.0;
  std::vector<bool> fixed(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double a = hi * alpha[t];
    fixed[t] = a <= alpha_min || a >= alpha_max;
    alpha[t] = std::clamp(a, alpha_min, alpha_max);
    (fixed[t] ? fixed_sum : free_sum) += alpha[t];
  }
  if (free_sum > 0.0) {
    const double k = (total - fixed_sum) / free_sum;
    for (std::size_t t = 0; t < T; ++t) {
      if (!fixed[t]) alpha[t] = std::clamp(alpha[t] * k, alpha_min, alpha_max);
    }
  }

  WeightState next = state;
  next.alphas = alpha;
  next.history.push_back(WeightSnapshot{alpha, std::vector<double>(grad_norms.begin(), grad_norms.end())});
  return next;
}

}  // namespace mtl
