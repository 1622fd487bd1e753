// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mtl/rng.hpp"

namespace mtl {

std::string to_string(const ModelDims& dims) {
  return "(V=" + std::to_string(dims.vocab) + ", d=" + std::to_string(dims.d) +
         ", d_h=" + std::to_string(dims.d_hidden) + ")";
}

namespace {

Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(v));
}

LoraAdapter make_adapter(Rng& rng, const ModelDims& dims, std::size_t rank, double scale) {
  if (rank == 0 || rank > std::min(dims.d, dims.d_hidden)) {
    throw ConfigError("LoRA rank must be in [1, min(d, d_h)], got " + std::to_string(rank));
  }
  if (!(scale >= 0.0)) throw ConfigError("LoRA scale must be >= 0");
  return LoraAdapter{uniform_matrix(rng, dims.d, rank), Tensor::zeros({rank, dims.d_hidden}), scale};
}

Tensor add_row_bias(const Tensor& z, const Tensor& bias) {
  const std::size_t n = bias.size();
  Tensor ones = Tensor::filled({z.rows(), 1}, 1.0);
  return add(z, matmul(ones, reshape(bias, {1, n})));
}

Tensor as_rows(const Tensor& h) { return h.rank() == 1 ? reshape(h, {1, h.size()}) : h; }

template <class Visit>
void visit_head(TaskHead& head, const std::string& prefix, Visit&& visit) {
  std::visit(
      [&](auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, ClassifierHead> || std::is_same_v<H, RegressionHead>) {
          visit(prefix + "w", h.w);
          visit(prefix + "b", h.b);
        } else {
          visit(prefix + "prev_embedding", h.prev_embedding);
          visit(prefix + "w", h.w);
          visit(prefix + "b", h.b);
          visit(prefix + "out", h.out);
          visit(prefix + "bout", h.bout);
        }
      },
      head);
}

template <class Visit>
void visit_model(ModelParams& p, Visit&& visit) {
  visit("encoder.embedding", p.encoder.embedding);
  visit("encoder.w1", p.encoder.w1);
  visit("encoder.b1", p.encoder.b1);
  visit("encoder.w2", p.encoder.w2);
  visit("encoder.b2", p.encoder.b2);
  for (auto& [id, head] : p.heads) visit_head(head, "head." + std::to_string(id) + ".", visit);
  for (auto& [id, ad] : p.adapters) {
    visit("adapter." + std::to_string(id) + ".a", ad.a);
    visit("adapter." + std::to_string(id) + ".b", ad.b);
  }
}

}  // namespace

// ---------------------------------------------------------------- ModelParams

std::vector<NamedTensor> ModelParams::named_tensors() {
  std::vector<NamedTensor> out;
  visit_model(*this, [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<Tensor> ModelParams::all_tensors() const {
  std::vector<Tensor> out;
  visit_model(const_cast<ModelParams&>(*this), [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<Tensor> ModelParams::shared() const {
  return {encoder.embedding, encoder.w1, encoder.b1, encoder.w2, encoder.b2};
}

std::vector<Tensor> ModelParams::task_params(int task_id) const {
  std::vector<Tensor> out;
  auto it = heads.find(task_id);
  if (it == heads.end()) throw ContractError("no head for task " + std::to_string(task_id));
  TaskHead head = it->second;
  visit_head(head, "", [&](const std::string&, Tensor& t) { out.push_back(t); });
  if (const LoraAdapter* ad = adapter(task_id)) {
    out.push_back(ad->a);
    out.push_back(ad->b);
  }
  return out;
}

std::size_t ModelParams::shared_size() const {
  std::size_t n = 0;
  for (const Tensor& t : shared()) n += t.size();
  return n;
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const Tensor& t : all_tensors()) n += t.size();
  return n;
}

const TaskSpec& ModelParams::task(int task_id) const {
  for (const TaskSpec& t : tasks) {
    if (t.id == task_id) return t;
  }
  throw ContractError("unknown task id " + std::to_string(task_id));
}

const LoraAdapter* ModelParams::adapter(int task_id) const {
  auto it = adapters.find(task_id);
  return it == adapters.end() ? nullptr : &it->second;
}

ModelParams ModelParams::bind(Tape& tape) const {
  ModelParams out = *this;
  visit_model(out, [&](const std::string&, Tensor& t) { t = tape.variable(t); });
  return out;
}

ModelParams ModelParams::detached() const {
  ModelParams out = *this;
  visit_model(out, [&](const std::string&, Tensor& t) { t = t.detach(); });
  return out;
}

// ---------------------------------------------------------------- init

ModelParams init_model(std::uint64_t seed, const ModelDims& dims, std::span<const TaskSpec> tasks,
                       const LoraConfig& lora) {
  if (dims.vocab < 1 || dims.d < 1 || dims.d_hidden < 1) throw ConfigError("model dims must be >= 1: " + to_string(dims));
  validate_tasks(tasks);
  for (const TaskSpec& t : tasks) {
    if (t.kind == TaskKind::Generation && dims.vocab <= kEos) {
      throw ConfigError("generation needs a vocabulary containing BOS and EOS");
    }
  }

  Rng rng(seed);
  ModelParams p;
  p.dims = dims;
  p.seed = seed;
  p.tasks.assign(tasks.begin(), tasks.end());

  const std::size_t V = dims.vocab, d = dims.d, dh = dims.d_hidden;
  p.encoder.embedding = uniform_matrix(rng, V, d);
  p.encoder.w1 = uniform_matrix(rng, d, dh);
  p.encoder.b1 = Tensor::zeros({dh});
  p.encoder.w2 = uniform_matrix(rng, dh, d);
  p.encoder.b2 = Tensor::zeros({d});

  for (const TaskSpec& t : tasks) {
    switch (t.kind) {
      case TaskKind::Classification:
        p.heads[t.id] = ClassifierHead{uniform_matrix(rng, d, t.num_classes), Tensor::zeros({t.num_classes})};
        break;
      case TaskKind::Generation: {
        GeneratorHead g;
        g.prev_embedding = uniform_matrix(rng, V, d);
        g.w = uniform_matrix(rng, 2 * d, dh);
        g.b = Tensor::zeros({dh});
        g.out = uniform_matrix(rng, dh, V);
        g.bout = Tensor::zeros({V});
        p.heads[t.id] = std::move(g);
        break;
      }
      case TaskKind::Regression:
        p.heads[t.id] = RegressionHead{uniform_matrix(rng, d, 1), Tensor::zeros({1})};
        break;
    }
  }
  if (lora.enabled) {
    for (const TaskSpec& t : tasks) p.adapters[t.id] = make_adapter(rng, dims, lora.rank, lora.scale);
  }
  return p;
}

void apply_lora(ModelParams& params, int task_id, std::size_t rank, double scale, std::uint64_t seed) {
  params.task(task_id);
  Rng rng(seed);
  params.adapters[task_id] = make_adapter(rng, params.dims, rank, scale);
}

// ---------------------------------------------------------------- forward

Tensor encode_batch(std::span<const std::vector<TokenId>> inputs, const EncoderParams& encoder,
                    const LoraAdapter* adapter) {
  if (inputs.empty()) throw InputError("encode: empty batch");
  const std::size_t V = encoder.embedding.rows();

  // Mean pooling as weights over the sorted set of distinct ids, so the
  // summation order (and therefore h, bit for bit) ignores token order.
  std::vector<std::size_t> distinct;
  for (const auto& tokens : inputs) {
    if (tokens.empty()) throw InputError("encode: empty token list");
    for (TokenId id : tokens) {
      if (id >= V) throw IndexError("encode: token id " + std::to_string(id) + " >= vocabulary size " + std::to_string(V));
      distinct.push_back(id);
    }
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> pool(inputs.size() * distinct.size(), 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::map<TokenId, std::size_t> counts;
    for (TokenId id : inputs[i]) ++counts[id];
    const double len = static_cast<double>(inputs[i].size());
    for (const auto& [id, c] : counts) {
      const std::size_t col = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), id) - distinct.begin());
      pool[i * distinct.size() + col] = static_cast<double>(c) / len;
    }
  }
  Tensor x = matmul(Tensor({inputs.size(), distinct.size()}, std::move(pool)), gather_rows(encoder.embedding, distinct));

  Tensor w1 = encoder.w1;
  if (adapter != nullptr) w1 = add(w1, scale(matmul(adapter->a, adapter->b), adapter->scale));
  Tensor hidden = relu(add_row_bias(matmul(x, w1), encoder.b1));
  return add(add_row_bias(matmul(hidden, encoder.w2), encoder.b2), x);
}

Tensor encode(std::span<const TokenId> tokens, const EncoderParams& encoder, const LoraAdapter* adapter) {
  if (tokens.empty()) throw InputError("encode: empty token list");
  std::vector<std::vector<TokenId>> one{std::vector<TokenId>(tokens.begin(), tokens.end())};
  Tensor h = encode_batch(one, encoder, adapter);
  return reshape(h, {h.cols()});
}

Tensor classify_head(const Tensor& h, const ClassifierHead& head) {
  if (h.cols() != head.w.rows()) {
    throw DimensionError("classify_head: h " + shape_string(h.shape()) + " vs w " + shape_string(head.w.shape()));
  }
  Tensor logits = add_row_bias(matmul(as_rows(h), head.w), head.b);
  return h.rank() == 1 ? reshape(logits, {logits.cols()}) : logits;
}

Tensor regression_head(const Tensor& h, const RegressionHead& head) {
  if (h.cols() != head.w.rows()) {
    throw DimensionError("regression_head: h " + shape_string(h.shape()) + " vs w " + shape_string(head.w.shape()));
  }
  Tensor y = add_row_bias(matmul(as_rows(h), head.w), head.b);
  return h.rank() == 1 ? reshape(y, {1}) : y;
}

Tensor generate_logits(const Tensor& h_rows, std::span<const TokenId> prev_tokens, const GeneratorHead& head) {
  if (h_rows.rows() != prev_tokens.size()) throw DimensionError("generate_logits: one previous token per row required");
  if (2 * h_rows.cols() != head.w.rows()) {
    throw DimensionError("generate_logits: h " + shape_string(h_rows.shape()) + " vs w " + shape_string(head.w.shape()));
  }
  std::vector<Tensor> parts{as_rows(h_rows), gather_rows(head.prev_embedding, prev_tokens)};
  Tensor hidden = relu(add_row_bias(matmul(concat_cols(parts), head.w), head.b));
  return add_row_bias(matmul(hidden, head.out), head.bout);
}

Tensor generate_step(const Tensor& h, TokenId prev_token, const GeneratorHead& head) {
  const TokenId prev[1] = {prev_token};
  Tensor logits = generate_logits(as_rows(h), prev, head);
  return reshape(logits, {logits.cols()});
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<TokenId> generate_greedy(const Tensor& h, const GeneratorHead& head, std::size_t max_len) {
  std::vector<TokenId> out;
  TokenId prev = kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    const TokenId next = argmax(generate_step(h, prev, head).values());
    if (next == kEos) break;
    if (next != kBos) out.push_back(next);
    prev = next;
  }
  return out;
}

}  // namespace mtl
