// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mtl/log.hpp"
#include "mtl/rng.hpp"

namespace mtl {

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (cfg.epochs < 1) fail("epochs", "must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(cfg.base_lr >= 0.0) || !std::isfinite(cfg.base_lr)) fail("base_lr", "must be finite and >= 0");
  if (!(cfg.pretrain_lr >= 0.0) || !std::isfinite(cfg.pretrain_lr)) fail("pretrain_lr", "must be finite and >= 0");
  if (cfg.max_decode_len < 1) fail("max_decode_len", "must be >= 1");
  if (cfg.eval_chunk < 1) fail("eval_chunk", "must be >= 1");
  if (!(cfg.dynamic.alpha_min > 0.0 && cfg.dynamic.alpha_min <= 1.0)) fail("alpha_min", "must be in (0, 1]");
  if (!(cfg.dynamic.alpha_max >= 1.0) || !std::isfinite(cfg.dynamic.alpha_max)) fail("alpha_max", "must be >= 1");
  try {
    validate(cfg.reg);
  } catch (const ConfigError& e) {
    fail("regularizer", e.what());
  }
  validate_tasks(cfg.tasks);
  if (cfg.single_task) {
    const bool known = std::any_of(cfg.tasks.begin(), cfg.tasks.end(), [&](const TaskSpec& t) { return t.id == *cfg.single_task; });
    if (!known) fail("task", "single-task mode names unknown task " + std::to_string(*cfg.single_task));
  }
}

std::vector<int> active_tasks(const TrainConfig& cfg) {
  if (cfg.single_task) return {*cfg.single_task};
  std::vector<int> ids;
  for (const TaskSpec& t : cfg.tasks) ids.push_back(t.id);
  return ids;
}

namespace {

std::vector<std::vector<TokenId>> inputs_of(std::span<const Example> examples) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(examples.size());
  for (const Example& e : examples) out.push_back(e.tokens);
  return out;
}

double squared_norm(const GradientMap& g, std::span<const Tensor> params) {
  double s = 0.0;
  for (const Tensor& p : params) {
    for (double v : g.get_or_zeros(p).values()) s += v * v;
  }
  return s;
}

// Owning task of a canonical tensor name; 0 for the shared encoder.
int owner_of(const std::string& name) {
  if (name.rfind("encoder.", 0) == 0) return 0;
  const std::size_t a = name.find('.');
  const std::size_t b = name.find('.', a + 1);
  return std::stoi(name.substr(a + 1, b - a - 1));
}

Tensor descend(const Tensor& value, const Tensor& grad, double lr) {
  std::vector<double> v(value.values().begin(), value.values().end());
  const auto g = grad.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  return Tensor(value.shape(), std::move(v));
}

}  // namespace

Tensor task_loss(const ModelParams& params, int task_id, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("task_loss: empty batch for task " + std::to_string(task_id));
  const TaskSpec& task = params.task(task_id);
  for (const Example& e : examples) {
    if (e.task_id != task_id) {
      throw ContractError("task_loss: example " + e.uid + " belongs to task " + std::to_string(e.task_id) +
                          ", not " + std::to_string(task_id));
    }
  }
  const Tensor h = encode_batch(inputs_of(examples), params.encoder, params.adapter(task_id));
  const TaskHead& head = params.heads.at(task_id);
  const double inv = 1.0 / static_cast<double>(examples.size());

  switch (task.kind) {
    case TaskKind::Classification: {
      std::vector<std::size_t> labels;
      for (const Example& e : examples) labels.push_back(e.label());
      const std::vector<double> w(examples.size(), inv);
      return weighted_cross_entropy(classify_head(h, std::get<ClassifierHead>(head)), labels, w);
    }
    case TaskKind::Regression: {
      std::vector<double> scores;
      for (const Example& e : examples) scores.push_back(e.score());
      const std::vector<double> w(examples.size(), inv);
      return weighted_squared_error(regression_head(h, std::get<RegressionHead>(head)), scores, w);
    }
    case TaskKind::Generation: {
      // Teacher forcing: every step of every example is one row; weights make
      // the result the mean over examples of the per-example step mean.
      std::vector<std::size_t> rows, targets;
      std::vector<TokenId> prevs;
      std::vector<double> w;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& seq = examples[i].sequence();
        if (seq.empty()) throw ContractError("example " + examples[i].uid + " has an empty target sequence");
        for (std::size_t s = 0; s < seq.size(); ++s) {
          rows.push_back(i);
          prevs.push_back(s == 0 ? kBos : seq[s - 1]);
          targets.push_back(seq[s]);
          w.push_back(inv / static_cast<double>(seq.size()));
        }
      }
      const Tensor logits = generate_logits(gather_rows(h, rows), prevs, std::get<GeneratorHead>(head));
      return weighted_cross_entropy(logits, targets, w);
    }
  }
  throw ContractError("task_loss: unknown task kind");
}

StepResult train_step(ModelParams& params, const Round& round, const TrainConfig& cfg, WeightState& weights,
                      std::size_t round_index) {
  const std::vector<int> active = active_tasks(cfg);
  if (round.batches.size() != active.size()) {
    throw ContractError("round has " + std::to_string(round.batches.size()) + " batches for " +
                        std::to_string(active.size()) + " tasks");
  }
  const bool penalty = cfg.reg.lambda > 0.0 && active.size() >= 2;
  const bool need_task_grads = penalty || cfg.dynamic.enabled;
  const bool higher_order = penalty && cfg.reg.grad_mode == GradMode::Exact;

  StepResult out;
  try {
    Tape tape;
    ModelParams p = params.bind(tape);
    const std::vector<Tensor> theta = p.shared();

    std::vector<Tensor> losses;
    std::vector<GradientMap> grads;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Batch& batch = round.batches[i];
      if (batch.task_id != active[i]) {
        throw ContractError("round batch " + std::to_string(i) + " is for task " + std::to_string(batch.task_id) +
                            ", expected " + std::to_string(active[i]));
      }
      losses.push_back(task_loss(p, batch.task_id, batch.examples));
      out.losses.push_back(losses.back().item());
      if (need_task_grads) {
        grads.push_back(backward(losses.back(), theta, higher_order));
        out.grad_norms.push_back(std::sqrt(squared_norm(grads.back(), theta)));
      }
    }

    if (cfg.dynamic.enabled) {
      weights = update_dynamic_weights(weights, out.grad_norms, cfg.reg.eps, cfg.dynamic.alpha_min, cfg.dynamic.alpha_max);
      out.alphas = weights.alphas;
    } else {
      for (int id : active) out.alphas.push_back(p.task(id).alpha);
    }

    const Tensor joint = joint_loss(losses, out.alphas);
    Tensor total = joint;
    if (penalty) {
      const Tensor cos = cosine_penalty(grads, theta, cfg.reg);
      out.cos_penalty = cos.item();
      total = total_loss(joint, cos, cfg.reg.lambda);
    }
    out.total = total.item();

    auto src = p.named_tensors();
    auto dst = params.named_tensors();
    std::vector<double> lrs(src.size(), 0.0);
    std::vector<Tensor> wrt;
    std::vector<std::size_t> wrt_index;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const int owner = owner_of(src[i].name);
      if (owner == 0) {
        lrs[i] = cfg.base_lr;
      } else if (std::find(active.begin(), active.end(), owner) != active.end()) {
        lrs[i] = p.task(owner).lr;
      }
      if (lrs[i] > 0.0) {
        wrt.push_back(*src[i].tensor);
        wrt_index.push_back(i);
      }
    }
    const GradientMap g = backward(total, wrt);
    for (std::size_t k = 0; k < wrt.size(); ++k) {
      const std::size_t i = wrt_index[k];
      *dst[i].tensor = descend(*dst[i].tensor, g.at(wrt[k]), lrs[i]);
    }
  } catch (const NumericError& e) {
    throw NumericError("round " + std::to_string(round_index) + ": " + e.what());
  }
  return out;
}

std::vector<std::vector<TokenId>> decode_batch(const ModelParams& params, int task_id,
                                               std::span<const std::vector<TokenId>> inputs, std::size_t max_len) {
  const auto& head = std::get<GeneratorHead>(params.heads.at(task_id));
  const Tensor h = encode_batch(inputs, params.encoder, params.adapter(task_id));
  std::vector<std::vector<TokenId>> out(inputs.size());
  std::vector<std::size_t> live(inputs.size());
  std::iota(live.begin(), live.end(), 0);
  std::vector<TokenId> prev(inputs.size(), kBos);
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<TokenId> prevs;
    for (std::size_t i : live) prevs.push_back(prev[i]);
    const Tensor logits = generate_logits(gather_rows(h, live), prevs, head);
    const std::size_t V = logits.cols();
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < live.size(); ++k) {
      const std::size_t i = live[k];
      const TokenId next = argmax(logits.values().subspan(k * V, V));
      if (next == kEos) continue;
      if (next != kBos) out[i].push_back(next);
      prev[i] = next;
      still.push_back(i);
    }
    live = std::move(still);
  }
  return out;
}

std::vector<TaskEval> evaluate(const ModelParams& params, std::span<const int> task_ids,
                               std::span<const std::vector<Example>> examples, const TrainConfig& cfg) {
  if (task_ids.size() != examples.size()) throw ContractError("evaluate: one example list per task required");
  const ModelParams p = params.detached();
  std::vector<TaskEval> out;
  for (std::size_t t = 0; t < task_ids.size(); ++t) {
    const int id = task_ids[t];
    const std::vector<Example>& ex = examples[t];
    if (ex.empty()) throw ContractError("evaluate: task " + std::to_string(id) + " has no examples");
    const TaskSpec& task = p.task(id);

    double loss_sum = 0.0;
    std::vector<std::size_t> preds, golds;
    std::vector<RougePair> pairs;
    for (std::size_t begin = 0; begin < ex.size(); begin += cfg.eval_chunk) {
      const std::span<const Example> chunk(ex.data() + begin, std::min(cfg.eval_chunk, ex.size() - begin));
      loss_sum += task_loss(p, id, chunk).item() * static_cast<double>(chunk.size());
      if (task.kind == TaskKind::Classification) {
        const Tensor logits = classify_head(encode_batch(inputs_of(chunk), p.encoder, p.adapter(id)),
                                            std::get<ClassifierHead>(p.heads.at(id)));
        const std::size_t C = logits.cols();
        for (std::size_t i = 0; i < chunk.size(); ++i) {
          preds.push_back(argmax(logits.values().subspan(i * C, C)));
          golds.push_back(chunk[i].label());
        }
      } else if (task.kind == TaskKind::Generation) {
        const auto decoded = decode_batch(p, id, inputs_of(chunk), cfg.max_decode_len);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
          std::vector<TokenId> ref = chunk[i].sequence();
          if (!ref.empty() && ref.back() == kEos) ref.pop_back();
          if (!ref.empty()) pairs.emplace_back(decoded[i], std::move(ref));
        }
      }
    }

    TaskEval ev;
    ev.task_id = id;
    ev.loss = loss_sum / static_cast<double>(ex.size());
    if (task.kind == TaskKind::Classification) {
      ev.metric = MetricReport{id, "acc", accuracy(preds, golds), ex.size()};
    } else if (task.kind == TaskKind::Generation && !pairs.empty()) {
      ev.metric = corpus_rouge1(pairs, id);
    }
    out.push_back(std::move(ev));
  }
  return out;
}

namespace {

const TaskData& find_data(std::span<const TaskData> data, int id) {
  for (const TaskData& d : data) {
    if (d.spec.id == id) return d;
  }
  throw ConfigError("no dataset for task " + std::to_string(id));
}

}  // namespace

std::vector<TaskEval> evaluate(const ModelParams& params, std::span<const TaskData> data, bool test_split,
                               const TrainConfig& cfg) {
  std::vector<int> ids;
  std::vector<std::vector<Example>> examples;
  for (int id : active_tasks(cfg)) {
    ids.push_back(id);
    const TaskData& d = find_data(data, id);
    examples.push_back(test_split ? d.test : d.train);
  }
  return evaluate(params, ids, examples, cfg);
}

PretrainResult pretrain_shared(const ModelParams& params, std::span<const std::vector<TokenId>> corpus,
                               const PretrainOptions& opts) {
  PretrainResult result{params, {}};
  if (opts.epochs == 0) return result;
  if (opts.batch_size < 1) throw ConfigError("pretraining batch_size must be >= 1");

  Rng rng(opts.seed);
  std::vector<std::vector<TokenId>> masked;
  std::vector<std::size_t> targets;
  for (const auto& sentence : corpus) {
    if (sentence.empty()) continue;
    const std::size_t pos = rng.below(sentence.size());
    targets.push_back(sentence[pos]);
    masked.push_back(sentence);
    masked.back()[pos] = kUnk;
  }
  if (masked.empty()) throw ContractError("pretrain_shared: empty corpus");

  const std::size_t d = params.dims.d, V = params.dims.vocab;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> wv(d * V);
  for (double& x : wv) x = rng.uniform(-bound, bound);
  Tensor w({d, V}, std::move(wv));
  Tensor b = Tensor::zeros({V});

  EncoderParams& enc = result.params.encoder;
  std::vector<std::size_t> order(masked.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
      const std::size_t n = std::min(opts.batch_size, order.size() - begin);
      std::vector<std::vector<TokenId>> inputs;
      std::vector<std::size_t> labels;
      for (std::size_t k = begin; k < begin + n; ++k) {
        inputs.push_back(masked[order[k]]);
        labels.push_back(targets[order[k]]);
      }
      Tape tape;
      std::vector<Tensor> vars{tape.variable(enc.embedding), tape.variable(enc.w1), tape.variable(enc.b1),
                               tape.variable(enc.w2),        tape.variable(enc.b2), tape.variable(w),
                               tape.variable(b)};
      const EncoderParams bound_enc{vars[0], vars[1], vars[2], vars[3], vars[4]};
      const Tensor logits = classify_head(encode_batch(inputs, bound_enc), ClassifierHead{vars[5], vars[6]});
      const std::vector<double> weights(n, 1.0 / static_cast<double>(n));
      const Tensor loss = weighted_cross_entropy(logits, labels, weights);
      loss_sum += loss.item() * static_cast<double>(n);
      const GradientMap g = backward(loss, vars);
      Tensor* targets_to_update[] = {&enc.embedding, &enc.w1, &enc.b1, &enc.w2, &enc.b2, &w, &b};
      for (std::size_t i = 0; i < vars.size(); ++i) {
        *targets_to_update[i] = descend(*targets_to_update[i], g.at(vars[i]), opts.lr);
      }
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
    log_debug("pretrain epoch " + std::to_string(epoch + 1) + " loss " + format_float(result.epoch_losses.back()));
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, std::span<const TaskData> data) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> active = active_tasks(cfg);

  std::vector<std::vector<Example>> train_sets;
  for (int id : active) {
    const TaskData& d = find_data(data, id);
    const TaskSpec* spec = nullptr;
    for (const TaskSpec& t : cfg.tasks) {
      if (t.id == id) spec = &t;
    }
    if (d.spec.kind != spec->kind) {
      throw ConfigError("task " + std::to_string(id) + " is configured as " + std::string(to_string(spec->kind)) +
                        " but its data is " + std::string(to_string(d.spec.kind)));
    }
    if (d.train.empty() || d.test.empty()) throw ConfigError("task " + spec->name + " needs train and test examples");
    train_sets.push_back(d.train);
  }
  if (cfg.dims.vocab == 0) throw ConfigError("dims.vocab must be set from the vocabulary");

  TrainResult result;
  result.params = init_model(cfg.seed, cfg.dims, cfg.tasks, cfg.lora);
  if (cfg.pretrain_epochs > 0) {
    std::vector<std::vector<TokenId>> corpus;
    for (const auto& set : train_sets) {
      for (const Example& e : set) corpus.push_back(e.tokens);
    }
    PretrainResult pre = pretrain_shared(result.params, corpus,
                                         PretrainOptions{cfg.pretrain_epochs, cfg.pretrain_lr, cfg.seed ^ 0x5052ull, cfg.batch_size});
    result.params = std::move(pre.params);
    result.pretrain_losses = std::move(pre.epoch_losses);
  }

  for (int id : active) result.weights.alphas.push_back(result.params.task(id).alpha);
  std::vector<std::vector<Example>> test_sets;
  for (int id : active) test_sets.push_back(find_data(data, id).test);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<Round> rounds = make_rounds(train_sets, active, cfg.batch_size, cfg.seed, epoch);
    double cos_sum = 0.0;
    for (const Round& round : rounds) {
      const StepResult step = train_step(result.params, round, cfg, result.weights, result.steps);
      cos_sum += step.cos_penalty;
      ++result.steps;
    }
    const double wall = cfg.record_wall_time
                            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                            : 0.0;
    for (int split = 0; split < 2; ++split) {
      const auto evals = evaluate(result.params, active, split == 0 ? train_sets : test_sets, cfg);
      for (const TaskEval& ev : evals) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.split = split == 0 ? "train" : "test";
        rec.task_id = ev.task_id;
        rec.task = result.params.task(ev.task_id).name;
        rec.loss = ev.loss;
        if (ev.metric) {
          rec.metric_name = ev.metric->name;
          rec.metric_value = ev.metric->value;
        }
        rec.wall_s = wall;
        result.records.push_back(std::move(rec));
      }
    }
    if (log_level() != LogLevel::Quiet) {
      std::ostringstream msg;
      msg << "epoch " << epoch << "/" << cfg.epochs;
      for (auto it = result.records.end() - static_cast<std::ptrdiff_t>(2 * active.size()); it != result.records.end(); ++it) {
        msg << "  " << it->split << "/" << it->task << " loss " << format_float(it->loss);
        if (!it->metric_name.empty()) msg << " " << it->metric_name << " " << format_float(it->metric_value);
      }
      if (cfg.reg.lambda > 0.0) msg << "  mean L_cos " << format_float(cos_sum / static_cast<double>(rounds.size()));
      log_info(msg.str());
    }
  }
  return result;
}

// ---------------------------------------------------------------- CSV

namespace {

constexpr std::string_view kCurvesHeader = "epoch,split,task,loss,metric_name,metric_value,wall_s";

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t c = line.find(',', start);
    cells.emplace_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return cells;
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw FormatError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string curves_csv(std::span<const EpochRecord> records) {
  std::string out(kCurvesHeader);
  out += '\n';
  for (const EpochRecord& r : records) {
    out += std::to_string(r.epoch) + ',' + r.split + ',' + r.task + ',' + format_float(r.loss) + ',' + r.metric_name +
           ',' + (r.metric_name.empty() ? std::string() : format_float(r.metric_value)) + ',' + format_float(r.wall_s) +
           '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_curves_csv(std::string_view text) {
  std::vector<EpochRecord> out;
  std::size_t line_no = 0, start = 0;
  bool header_seen = false;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kCurvesHeader) throw FormatError("line 1: expected header '" + std::string(kCurvesHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != 7) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 7 fields, got " + std::to_string(cells.size()));
    }
    EpochRecord r;
    const double epoch = parse_double(cells[0], line_no, "epoch");
    if (epoch < 0 || epoch != std::floor(epoch)) throw FormatError("line " + std::to_string(line_no) + ": bad epoch");
    r.epoch = static_cast<std::size_t>(epoch);
    r.split = cells[1];
    if (r.split.empty() || cells[2].empty()) throw FormatError("line " + std::to_string(line_no) + ": empty split or task");
    r.task = cells[2];
    r.loss = parse_double(cells[3], line_no, "loss");
    r.metric_name = cells[4];
    if (!r.metric_name.empty()) r.metric_value = parse_double(cells[5], line_no, "metric_value");
    r.wall_s = parse_double(cells[6], line_no, "wall_s");
    out.push_back(std::move(r));
  }
  if (!header_seen) throw FormatError("line 1: empty file");
  return out;
}

std::vector<ComparisonRow> run_baseline_comparison(const TrainConfig& cfg, std::span<const TaskData> data) {
  TrainConfig multi = cfg;
  multi.single_task.reset();
  if (multi.reg.lambda == 0.0) log_warn("comparison: the regularized run has lambda = 0");

  auto final_metrics = [&](const TrainResult& r, std::optional<int> only) {
    ComparisonRow row;
    for (const EpochRecord& rec : r.records) {
      if (rec.epoch != cfg.epochs || rec.split != "test") continue;
      if (only && rec.task_id != *only) continue;
      if (rec.metric_name == "acc" && !row.acc) row.acc = rec.metric_value;
      if (rec.metric_name == "rouge1_f" && !row.rouge1_f) row.rouge1_f = rec.metric_value;
    }
    return row;
  };

  std::vector<ComparisonRow> rows;
  {
    log_info("comparison: multi-task, lambda = " + format_float(multi.reg.lambda));
    ComparisonRow row = final_metrics(train(multi, data), std::nullopt);
    row.run = "mtl_lambda";
    row.task = "all";
    rows.push_back(row);
  }
  {
    TrainConfig plain = multi;
    plain.reg.lambda = 0.0;
    log_info("comparison: multi-task, lambda = 0");
    ComparisonRow row = final_metrics(train(plain, data), std::nullopt);
    row.run = "mtl_plain";
    row.task = "all";
    rows.push_back(row);
  }
  for (const TaskSpec& t : multi.tasks) {
    TrainConfig single = multi;
    single.reg.lambda = 0.0;
    single.single_task = t.id;
    log_info("comparison: single-task " + t.name);
    ComparisonRow row = final_metrics(train(single, data), t.id);
    row.run = "single_" + t.name;
    row.task = t.name;
    rows.push_back(row);
  }
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::string out = "run,task,acc,rouge1_f\n";
  for (const ComparisonRow& r : rows) {
    out += r.run + ',' + r.task + ',' + (r.acc ? format_float(*r.acc) : std::string()) + ',' +
           (r.rouge1_f ? format_float(*r.rouge1_f) : std::string()) + '\n';
  }
  return out;
}

}  // namespace mtl
