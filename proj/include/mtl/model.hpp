// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared encoder and task-specific heads.
//
// The encoder maps a token list to h in R^d:
//   x = meanpool(embedding[tokens])
//   h = w2^T relu((w1 + delta)^T x + b1) + b2 + x
// where delta = scale * (a b) is the task's LoRA adapter when one is active.
// Heads read h: a linear classifier, an order-1 autoregressive generator
// conditioned on (h, previous token), or a linear regressor.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mtl/autodiff.hpp"
#include "mtl/types.hpp"

namespace mtl {

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t d = 64;
  std::size_t d_hidden = 128;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

std::string to_string(const ModelDims& dims);

struct EncoderParams {
  Tensor embedding;  // [V x d]
  Tensor w1;         // [d x d_h]
  Tensor b1;         // [d_h]
  Tensor w2;         // [d_h x d]
  Tensor b2;         // [d]
};

struct ClassifierHead {
  Tensor w;  // [d x C]
  Tensor b;  // [C]
};

struct GeneratorHead {
  Tensor prev_embedding;  // [V x d]
  Tensor w;               // [2d x d_h]
  Tensor b;               // [d_h]
  Tensor out;             // [d_h x V]
  Tensor bout;            // [V]
};

struct RegressionHead {
  Tensor w;  // [d x 1]
  Tensor b;  // [1]
};

using TaskHead = std::variant<ClassifierHead, GeneratorHead, RegressionHead>;

/// Low-rank delta on the encoder's first layer: w1 + scale * (a b).
struct LoraAdapter {
  Tensor a;  // [d x r]
  Tensor b;  // [r x d_h]
  double scale = 1.0;

  std::size_t rank() const { return a.cols(); }
};

struct LoraConfig {
  bool enabled = false;
  std::size_t rank = 4;
  double scale = 1.0;
};

/// Tensor reference with its canonical checkpoint name.
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ModelParams {
  ModelDims dims;
  std::uint64_t seed = 0;
  std::vector<TaskSpec> tasks;
  EncoderParams encoder;                  // theta
  std::map<int, TaskHead> heads;          // phi_t
  std::map<int, LoraAdapter> adapters;    // phi_t (task-specific)

  /// Every tensor in canonical order: encoder fields, then each task's head
  /// fields, then each adapter.
  std::vector<NamedTensor> named_tensors();
  std::vector<Tensor> all_tensors() const;
  /// Theta in canonical flattening order.
  std::vector<Tensor> shared() const;
  /// Phi_t: the task's head followed by its adapter, if any.
  std::vector<Tensor> task_params(int task_id) const;
  std::size_t shared_size() const;
  std::size_t total_size() const;

  const TaskSpec& task(int task_id) const;
  const LoraAdapter* adapter(int task_id) const;

  /// Copy whose tensors are fresh leaves on `tape`.
  ModelParams bind(Tape& tape) const;
  /// Copy with every tensor detached.
  ModelParams detached() const;
};

/// Seeded initialization. Weight matrices ~ U[-1/sqrt(rows), 1/sqrt(rows)],
/// biases zero, LoRA `b` zero. Throws ConfigError for an empty task list or
/// zero dimensions.
ModelParams init_model(std::uint64_t seed, const ModelDims& dims, std::span<const TaskSpec> tasks,
                       const LoraConfig& lora = {});

/// Adds a zero-initialized-delta adapter for `task_id` (a random, b zero).
void apply_lora(ModelParams& params, int task_id, std::size_t rank, double scale, std::uint64_t seed);

/// h for one token list, shape [d]. Throws InputError on an empty list.
Tensor encode(std::span<const TokenId> tokens, const EncoderParams& encoder, const LoraAdapter* adapter = nullptr);
/// Row i is h for inputs[i]; shape [B x d].
Tensor encode_batch(std::span<const std::vector<TokenId>> inputs, const EncoderParams& encoder,
                    const LoraAdapter* adapter = nullptr);

/// logits = w^T h + b. Accepts h [d] (returns [C]) or [B x d] (returns [B x C]).
Tensor classify_head(const Tensor& h, const ClassifierHead& head);
/// Accepts h [d] (returns [1]) or [B x d] (returns [B x 1]).
Tensor regression_head(const Tensor& h, const RegressionHead& head);

/// logits [V] = out^T relu(w^T concat(h, prev_embedding[prev]) + b) + bout.
Tensor generate_step(const Tensor& h, TokenId prev_token, const GeneratorHead& head);
/// Batched teacher-forced steps: row s uses h_rows[s] and prev_tokens[s]; [S x V].
Tensor generate_logits(const Tensor& h_rows, std::span<const TokenId> prev_tokens, const GeneratorHead& head);

/// Greedy decoding from BOS; ties go to the lowest id; stops at EOS or after
/// max_len steps. BOS/EOS never appear in the result.
std::vector<TokenId> generate_greedy(const Tensor& h, const GeneratorHead& head, std::size_t max_len);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

/// Writes the checkpoint atomically (temp file + rename). Throws IoError.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
/// Throws IoError when unreadable, FormatError (with byte offset) on a bad
/// magic/version/truncation/checksum, DimensionError when `expected` differs.
ModelParams load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected = std::nullopt);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

}  // namespace mtl
