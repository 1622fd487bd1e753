// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mtl/error.hpp"
#include "mtl/trainer.hpp"

using namespace mtl;

namespace {

std::vector<TaskSpec> two_tasks() {
  return {TaskSpec{1, "cls", TaskKind::Classification, LossKind::CrossEntropy, 1.0, 0.2, 2},
          TaskSpec{2, "gen", TaskKind::Generation, LossKind::SequenceCrossEntropy, 0.7, 0.3, 0}};
}

Example cls_example(std::vector<TokenId> x, std::size_t y) { return Example{"c", 1, std::move(x), y}; }
Example gen_example(std::vector<TokenId> x, std::vector<TokenId> y) {
  return Example{"g", 2, std::move(x), std::move(y)};
}

// Vocabulary of 8 ids; P stays well under 200.
struct Tiny {
  TrainConfig cfg;
  ModelParams params;
  Round round;

  explicit Tiny(std::uint64_t seed) {
    cfg.tasks = two_tasks();
    cfg.dims = ModelDims{8, 3, 4};
    cfg.base_lr = 0.05;
    params = init_model(seed, cfg.dims, cfg.tasks);
    // keep relu units away from their kinks
    params.encoder.b1 = Tensor::vector({0.05, -0.1, 0.2, 0.01});
    round.batches = {Batch{1, {cls_example({4, 5}, 1), cls_example({5, 6, 7}, 0), cls_example({4, 7}, 1)}},
                     Batch{2, {gen_example({4, 6, 5}, {4, 5, kEos}), gen_example({7, 6}, {6, kEos})}}};
  }
};

// The scalar a step minimizes, rebuilt independently of train_step.
double total_value(const ModelParams& params, const Round& round, const TrainConfig& cfg) {
  Tape tape;
  const ModelParams p = params.bind(tape);
  const std::vector<Tensor> theta = p.shared();
  std::vector<Tensor> losses;
  std::vector<GradientMap> grads;
  std::vector<double> alphas;
  for (const Batch& b : round.batches) {
    losses.push_back(task_loss(p, b.task_id, b.examples));
    grads.push_back(backward(losses.back(), theta, true));
    alphas.push_back(p.task(b.task_id).alpha);
  }
  return total_loss(joint_loss(losses, alphas), cosine_penalty(grads, theta, cfg.reg), cfg.reg.lambda).item();
}

std::vector<double> flat_of(std::span<const Tensor> ts) {
  std::vector<double> out;
  for (const Tensor& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

std::vector<double> flat(const ModelParams& p) { return flat_of(p.all_tensors()); }

Corpus small_corpus(std::size_t n = 40) {
  SyntheticSpec s;
  s.n_examples = n;
  return generate_synthetic(s);
}

TrainConfig small_config(const Corpus& c) {
  TrainConfig cfg;
  for (const TaskData& t : c.tasks) cfg.tasks.push_back(t.spec);
  cfg.dims = ModelDims{c.vocab.size(), 8, 8};
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.reg.lambda = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("lambda = 0 makes the gradient mode irrelevant") {
  Tiny a(5), b(5);
  a.cfg.reg.lambda = b.cfg.reg.lambda = 0.0;
  b.cfg.reg.grad_mode = GradMode::Detached;
  WeightState wa, wb;
  train_step(a.params, a.round, a.cfg, wa);
  train_step(b.params, b.round, b.cfg, wb);
  CHECK(flat(a.params) == flat(b.params));
  CHECK(flat(a.params) != flat(Tiny(5).params));
}

TEST_CASE("applied theta update equals -base_lr times the finite-difference gradient") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    Tiny t(seed);
    t.cfg.reg.lambda = 0.5;
    CHECK(t.params.total_size() <= 200);
    ModelParams before = t.params;
    WeightState ws;
    const StepResult r = train_step(t.params, t.round, t.cfg, ws);
    CHECK(r.total == doctest::Approx(total_value(before, t.round, t.cfg)).epsilon(1e-12));

    const std::vector<double> b0 = flat_of(before.shared()), b1 = flat_of(t.params.shared());
    const double eps = 1e-5;
    double worst = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      Tensor* field = before.named_tensors()[i].tensor;
      for (std::size_t j = 0; j < field->size(); ++j, ++k) {
        const Tensor saved = *field;
        std::vector<double> v(saved.values().begin(), saved.values().end());
        v[j] = saved.at(j) + eps;
        *field = Tensor(saved.shape(), v);
        const double up = total_value(before, t.round, t.cfg);
        v[j] = saved.at(j) - eps;
        *field = Tensor(saved.shape(), v);
        const double down = total_value(before, t.round, t.cfg);
        *field = saved;
        const double numeric = (up - down) / (2 * eps);
        const double applied = (b0[k] - b1[k]) / t.cfg.base_lr;
        worst = std::max(worst, std::abs(applied - numeric) / std::max({std::abs(applied), std::abs(numeric), 1e-8}));
      }
    }
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("single task with lambda = 0 is plain gradient descent") {
  Tiny t(9);
  t.cfg.single_task = 1;
  t.cfg.tasks[0].alpha = 1.0;
  Round one{{t.round.batches[0]}};
  const ModelParams before = t.params;
  WeightState ws;
  train_step(t.params, one, t.cfg, ws);

  Tape tape;
  ModelParams p = before.bind(tape);
  std::vector<Tensor> wrt = p.shared();
  for (const Tensor& x : p.task_params(1)) wrt.push_back(x);
  const GradientMap g = backward(task_loss(p, 1, one.batches[0].examples), wrt);
  std::vector<Tensor> after = before.shared();
  for (const Tensor& x : before.task_params(1)) after.push_back(x);
  std::vector<Tensor> got = t.params.shared();
  for (const Tensor& x : t.params.task_params(1)) got.push_back(x);
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const double lr = i < 5 ? t.cfg.base_lr : t.cfg.tasks[0].lr;
    const auto v = after[i].values();
    const auto gi = g.at(wrt[i]).values();
    for (std::size_t j = 0; j < v.size(); ++j) CHECK(got[i].at(j) == v[j] - lr * gi[j]);
  }
  CHECK(flat_of(t.params.task_params(2)) == flat_of(before.task_params(2)));
}

TEST_CASE("a zero task learning rate freezes that head") {
  Tiny t(4);
  t.cfg.reg.lambda = 0.2;
  t.cfg.tasks[1].lr = 0.0;
  t.params = init_model(4, t.cfg.dims, t.cfg.tasks);
  const ModelParams before = t.params;
  WeightState ws;
  for (int i = 0; i < 3; ++i) train_step(t.params, t.round, t.cfg, ws);
  CHECK(flat_of(t.params.task_params(2)) == flat_of(before.task_params(2)));
  CHECK(flat_of(t.params.task_params(1)) != flat_of(before.task_params(1)));
  CHECK(flat_of(t.params.shared()) != flat_of(before.shared()));
}

TEST_CASE("train_step reports the round of a numeric failure") {
  Tiny t(2);
  t.cfg.base_lr = 1e300;
  WeightState ws;
  std::string message;
  for (std::size_t i = 40; i < 45 && message.empty(); ++i) {
    try {
      train_step(t.params, t.round, t.cfg, ws, i);
    } catch (const NumericError& e) {
      message = e.what();
    }
  }
  CHECK(message.rfind("round 4", 0) == 0);
  Tiny bad(2);
  bad.round.batches.pop_back();
  CHECK_THROWS_AS(train_step(bad.params, bad.round, bad.cfg, ws), ContractError);
}

TEST_CASE("dynamic weights are applied and recorded") {
  Tiny t(6);
  t.cfg.dynamic.enabled = true;
  WeightState ws{{1.0, 1.0}, {}};
  const StepResult r = train_step(t.params, t.round, t.cfg, ws);
  REQUIRE(r.grad_norms.size() == 2);
  CHECK(r.alphas == ws.alphas);
  CHECK(ws.history.size() == 1);
  CHECK(std::abs(ws.alphas[0] + ws.alphas[1] - 2.0) <= 1e-12);
}

TEST_CASE("evaluate is pure and repeatable") {
  const Corpus c = small_corpus();
  const TrainConfig cfg = small_config(c);
  const ModelParams p = init_model(3, cfg.dims, cfg.tasks);
  const std::vector<double> before = flat(p);
  const auto r1 = evaluate(p, c.tasks, true, cfg);
  const auto r2 = evaluate(p, c.tasks, true, cfg);
  CHECK(flat(p) == before);
  REQUIRE(r1.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r1[i].loss == r2[i].loss);
    CHECK(r1[i].metric->value == r2[i].metric->value);
  }
  CHECK(r1[0].metric->name == "acc");
  CHECK(r1[1].metric->name == "rouge1_f");
}

TEST_CASE("chunked evaluation matches a single pass") {
  const Corpus c = small_corpus(100);
  TrainConfig cfg = small_config(c);
  const ModelParams p = init_model(8, cfg.dims, cfg.tasks);
  const auto whole = evaluate(p, c.tasks, false, cfg);
  cfg.eval_chunk = 7;
  const auto chunked = evaluate(p, c.tasks, false, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(chunked[i].loss == doctest::Approx(whole[i].loss).epsilon(1e-12));
    CHECK(chunked[i].metric->value == whole[i].metric->value);
  }
}

TEST_CASE("an untrained classifier is at chance on balanced data") {
  const Corpus c = small_corpus(1000);
  std::vector<Example> balanced;
  std::size_t count[2] = {0, 0};
  for (const Example& e : c.tasks[0].train) {
    if (count[e.label()] < 150) {
      balanced.push_back(e);
      ++count[e.label()];
    }
  }
  REQUIRE(balanced.size() == 300);
  const TrainConfig cfg = small_config(c);
  const int ids[] = {1};
  const std::vector<std::vector<Example>> sets{balanced};
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = evaluate(init_model(seed, ModelDims{c.vocab.size(), 64, 128}, cfg.tasks), ids, sets, cfg);
    CHECK(std::abs(r[0].metric->value - 0.5) <= 0.15);
  }
}

TEST_CASE("decode_batch agrees with generate_greedy") {
  const Corpus c = small_corpus();
  const TrainConfig cfg = small_config(c);
  const ModelParams p = init_model(12, cfg.dims, cfg.tasks);
  std::vector<std::vector<TokenId>> inputs;
  for (const Example& e : c.tasks[1].test) inputs.push_back(e.tokens);
  const auto batch = decode_batch(p, 2, inputs, 5);
  const auto& head = std::get<GeneratorHead>(p.heads.at(2));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    CHECK(batch[i] == generate_greedy(encode(inputs[i], p.encoder), head, 5));
    CHECK(batch[i].size() <= 5);
  }
}

TEST_CASE("an oracle keyword extractor scores ROUGE-1 F1 of 1") {
  const Corpus c = small_corpus(200);
  std::vector<RougePair> pairs;
  for (const Example& e : c.tasks[1].test) {
    std::vector<TokenId> keywords;
    for (TokenId t : e.tokens) {
      if (c.vocab.text(t).rfind("kw", 0) == 0) keywords.push_back(t);
    }
    std::sort(keywords.begin(), keywords.end(),
              [&](TokenId a, TokenId b) { return std::stoi(c.vocab.text(a).substr(2)) < std::stoi(c.vocab.text(b).substr(2)); });
    std::vector<TokenId> ref = e.sequence();
    ref.pop_back();
    pairs.emplace_back(keywords, ref);
  }
  CHECK(corpus_rouge1(pairs, 2).value == 1.0);
}

TEST_CASE("train accounting and determinism") {
  const Corpus c = small_corpus(40);  // 32 training examples per task
  TrainConfig cfg = small_config(c);
  cfg.epochs = 1;
  const TrainResult one = train(cfg, c.tasks);
  CHECK(one.steps == 2);
  REQUIRE(one.records.size() == 4);
  CHECK(one.records[0].split == "train");
  CHECK(one.records[0].task_id == 1);
  CHECK(one.records[1].task_id == 2);
  CHECK(one.records[2].split == "test");
  CHECK(one.records[0].wall_s == 0.0);

  cfg.epochs = 3;
  const TrainResult a = train(cfg, c.tasks), b = train(cfg, c.tasks);
  CHECK(a.records == b.records);
  CHECK(flat(a.params) == flat(b.params));
  CHECK(a.steps == 6);
  CHECK(curves_csv(a.records) == curves_csv(b.records));
  for (const EpochRecord& r : a.records) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss >= 0.0);
    CHECK(r.metric_value >= 0.0);
    CHECK(r.metric_value <= 1.0);
  }

  // eval on the final parameters reproduces the last records
  const auto test_eval = evaluate(a.params, c.tasks, true, cfg);
  CHECK(test_eval[0].loss == a.records[a.records.size() - 2].loss);
  CHECK(test_eval[1].metric->value == a.records.back().metric_value);
}

TEST_CASE("single-task training leaves the other head at initialization") {
  const Corpus c = small_corpus(40);
  TrainConfig cfg = small_config(c);
  cfg.reg.lambda = 0.0;
  cfg.single_task = 1;
  const TrainResult r = train(cfg, c.tasks);
  const ModelParams init = init_model(cfg.seed, cfg.dims, cfg.tasks);
  CHECK(flat_of(r.params.task_params(2)) == flat_of(init.task_params(2)));
  CHECK(flat_of(r.params.task_params(1)) != flat_of(init.task_params(1)));
  CHECK(r.records.size() == 2 * cfg.epochs);
  for (const EpochRecord& rec : r.records) CHECK(rec.task_id == 1);
}

TEST_CASE("train rejects inconsistent configurations") {
  const Corpus c = small_corpus(40);
  TrainConfig cfg = small_config(c);
  TrainConfig e = cfg;
  e.epochs = 0;
  CHECK_THROWS_AS(train(e, c.tasks), ConfigError);
  e = cfg;
  e.reg.lambda = -1;
  CHECK_THROWS_AS(train(e, c.tasks), ConfigError);
  e = cfg;
  e.single_task = 7;
  CHECK_THROWS_AS(train(e, c.tasks), ConfigError);
  e = cfg;
  e.dims.vocab = 0;
  CHECK_THROWS_AS(train(e, c.tasks), ConfigError);
  e = cfg;
  std::swap(e.tasks[0].kind, e.tasks[1].kind);
  std::swap(e.tasks[0].loss, e.tasks[1].loss);
  CHECK_THROWS_AS(train(e, c.tasks), ConfigError);
  CHECK_THROWS_AS(train(cfg, std::span<const TaskData>(c.tasks.data(), 1)), ConfigError);
}

TEST_CASE("pretraining") {
  const Corpus c = small_corpus(250);  // 200 training sentences
  std::vector<std::vector<TokenId>> corpus;
  for (const Example& e : c.tasks[0].train) corpus.push_back(e.tokens);
  REQUIRE(corpus.size() == 200);
  const ModelParams p = init_model(17, ModelDims{c.vocab.size(), 128, 256}, two_tasks());

  const PretrainResult none = pretrain_shared(p, corpus, PretrainOptions{0, 0.5, 1});
  CHECK(flat(none.params) == flat(p));
  CHECK(none.epoch_losses.empty());

  const PretrainOptions opts{20, 0.15, 1, 1};
  const PretrainResult a = pretrain_shared(p, corpus, opts), b = pretrain_shared(p, corpus, opts);
  CHECK(flat(a.params) == flat(b.params));
  CHECK(a.epoch_losses == b.epoch_losses);
  REQUIRE(a.epoch_losses.size() == 20);
  CHECK(a.epoch_losses.back() < 0.5 * a.epoch_losses.front());
  CHECK(flat_of(a.params.task_params(1)) == flat_of(p.task_params(1)));
  CHECK(flat_of(a.params.shared()) != flat_of(p.shared()));

  CHECK_THROWS_AS(pretrain_shared(p, std::span<const std::vector<TokenId>>{}, opts), ContractError);
}

TEST_CASE("curves CSV round trip and errors") {
  std::vector<EpochRecord> recs{{1, "train", 1, "cls", 0.5, "acc", 0.75, 0.0},
                                {1, "train", 3, "reg", 1.0 / 3, "", 0.0, 1.25}};
  const std::string csv = curves_csv(recs);
  CHECK(csv.rfind("epoch,split,task,loss,metric_name,metric_value,wall_s\n", 0) == 0);
  CHECK(csv.find("1,train,reg,0.333333333,,,1.25\n") != std::string::npos);
  const auto back = parse_curves_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].loss == 0.5);
  CHECK(back[0].metric_value == 0.75);
  CHECK(back[1].metric_name.empty());
  CHECK(back[1].wall_s == 1.25);

  try {
    parse_curves_csv("epoch,split,task,loss,metric_name,metric_value,wall_s\n1,train,cls,0.5,acc,0.7,0\n2,train,cls,x,acc,0.7,0\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_curves_csv("bad header\n"), FormatError);
  CHECK_THROWS_AS(parse_curves_csv(""), FormatError);
  CHECK_THROWS_AS(parse_curves_csv("epoch,split,task,loss,metric_name,metric_value,wall_s\n1,train\n"), FormatError);
}

TEST_CASE("comparison CSV layout") {
  const std::vector<ComparisonRow> rows{{"mtl_lambda", "all", 0.9, 0.5}, {"single_gen", "gen", std::nullopt, 0.25}};
  CHECK(comparison_csv(rows) == "run,task,acc,rouge1_f\nmtl_lambda,all,0.9,0.5\nsingle_gen,gen,,0.25\n");
}

TEST_CASE("baseline comparison produces one row per run") {
  const Corpus c = small_corpus(40);
  TrainConfig cfg = small_config(c);
  cfg.epochs = 1;
  const auto rows = run_baseline_comparison(cfg, c.tasks);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].run == "mtl_lambda");
  CHECK(rows[1].run == "mtl_plain");
  CHECK(rows[2].run == "single_cls");
  CHECK(rows[3].run == "single_gen");
  CHECK(rows[0].acc.has_value());
  CHECK(rows[0].rouge1_f.has_value());
  CHECK(rows[2].acc.has_value());
  CHECK(!rows[2].rouge1_f.has_value());
  CHECK(!rows[3].acc.has_value());
  CHECK(rows[3].rouge1_f.has_value());
}
