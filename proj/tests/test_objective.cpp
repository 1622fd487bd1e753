// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mtl/model.hpp"
#include "mtl/objective.hpp"

using namespace mtl;

namespace {

Tensor random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return Tensor({n}, std::move(v));
}

// Brute-force cosine straight from the definition.
double cosine_oracle(std::span<const double> a, std::span<const double> b, double eps) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

double sum_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(Tensor::vector({0.3, 0.3}), 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const double near_zero = cross_entropy(Tensor::vector({10, -10}), 0).item();
  CHECK(near_zero == doctest::Approx(2.0611536e-9).epsilon(1e-6));
  CHECK(near_zero > 0.0);
  const double hand = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const double ce = cross_entropy(Tensor::vector({1, 2, 3}), 2).item();
  CHECK(std::abs(ce - hand) <= 1e-14);
  CHECK(ce == doctest::Approx(0.40761).epsilon(1e-5));
  CHECK_THROWS_AS(cross_entropy(Tensor::vector({1, 2, 3}), 3), IndexError);
  // large logits stay finite
  CHECK(cross_entropy(Tensor::vector({1000, -1000, 0}), 1).item() == doctest::Approx(2000.0));

  std::mt19937_64 rng(4);
  for (std::size_t label = 0; label < 5; ++label) {
    std::vector<Tensor> ps{random_vector(rng, 5)};
    auto f = [label](std::span<const Tensor> v) { return cross_entropy(v[0], label); };
    CHECK(check_gradient(f, ps, 1e-6) <= 1e-6);
  }
}

TEST_CASE("sequence_cross_entropy examples") {
  const Tensor a = Tensor::vector({0.2, -1.0, 0.7, 0.0});
  const TokenId one[] = {2};
  const Tensor steps1[] = {a};
  CHECK(std::abs(sequence_cross_entropy(steps1, one).item() - cross_entropy(a, 2).item()) <= 1e-15);

  const TokenId two[] = {2, 2};
  const Tensor steps2[] = {a, a};
  CHECK(std::abs(sequence_cross_entropy(steps2, two).item() - cross_entropy(a, 2).item()) <= 1e-15);

  const Tensor u = Tensor::zeros({4});
  const Tensor uniform[] = {u, u};
  const TokenId targets[] = {1, kEos};
  CHECK(sequence_cross_entropy(uniform, targets).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  CHECK_THROWS_AS(sequence_cross_entropy(steps2, one), ContractError);
  CHECK_THROWS_AS(sequence_cross_entropy(std::span<const Tensor>{}, std::span<const TokenId>{}), ContractError);

  // stacked rows agree with the list form
  const Tensor b = Tensor::vector({1.5, 0.0, -0.5, 2.0});
  const Tensor mixed[] = {a, b};
  const TokenId mt[] = {0, 3};
  const Tensor rows = Tensor::matrix({{0.2, -1.0, 0.7, 0.0}, {1.5, 0.0, -0.5, 2.0}});
  CHECK(std::abs(sequence_cross_entropy(mixed, mt).item() - sequence_cross_entropy(rows, mt).item()) <= 1e-15);
  CHECK(std::abs(sequence_cross_entropy(mixed, mt).item() -
                 0.5 * (cross_entropy(a, 0).item() + cross_entropy(b, 3).item())) <= 1e-15);
}

TEST_CASE("mse") {
  CHECK(mse(Tensor::vector({1.25}), 1.25).item() == 0.0);
  CHECK(mse(Tensor::vector({2.0}), 0.0).item() == 4.0);
  Tape tape;
  Tensor p = tape.variable(Tensor::vector({0.7}));
  const Tensor wrt[] = {p};
  GradientMap g = backward(mse(p, -0.4), wrt);
  CHECK(g.at(p).item() == doctest::Approx(2 * (0.7 + 0.4)).epsilon(1e-15));
  std::vector<Tensor> ps{Tensor::vector({0.7})};
  CHECK(check_gradient([](std::span<const Tensor> v) { return mse(v[0], -0.4); }, ps, 1e-6) <= 1e-8);
  CHECK_THROWS_AS(mse(Tensor::vector({1, 2}), 0.0), DimensionError);

  const double targets[] = {1.0, -1.0};
  const double weights[] = {0.5, 0.5};
  CHECK(weighted_squared_error(Tensor::vector({2.0, 1.0}), targets, weights).item() == doctest::Approx(2.5));
}

TEST_CASE("joint_loss examples and linearity") {
  auto L = [](std::vector<double> v) {
    std::vector<Tensor> out;
    for (double x : v) out.push_back(Tensor::scalar(x));
    return out;
  };
  const double a11[] = {1, 1}, a01[] = {0, 1}, a2h[] = {2, 0.5};
  CHECK(joint_loss(L({0.5, 0.3}), a11).item() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(joint_loss(L({123.0, 0.3}), a01).item() == 0.3);
  CHECK(joint_loss(L({0.4, 0.6}), a2h).item() == doctest::Approx(1.1).epsilon(1e-15));
  CHECK_THROWS_AS(joint_loss(L({1, 2, 3}), a11), ContractError);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> l1(3), l2(3), al(3);
    for (int i = 0; i < 3; ++i) {
      l1[i] = u(rng);
      l2[i] = u(rng);
      al[i] = u(rng);
    }
    const double c = u(rng);
    std::vector<double> scaled(3), summed(3);
    for (int i = 0; i < 3; ++i) {
      scaled[i] = c * l1[i];
      summed[i] = l1[i] + l2[i];
    }
    const double j1 = joint_loss(L(l1), al).item(), j2 = joint_loss(L(l2), al).item();
    CHECK(std::abs(joint_loss(L(scaled), al).item() - c * j1) <= 1e-12);
    CHECK(std::abs(joint_loss(L(summed), al).item() - (j1 + j2)) <= 1e-12);
  }
}

TEST_CASE("pairwise_cosine examples") {
  const double eps = 1e-8;
  CHECK(pairwise_cosine(Tensor::vector({1, 0}), Tensor::vector({0, 1}), eps).item() == 0.0);
  CHECK(pairwise_cosine(Tensor::vector({3, 4}), Tensor::vector({4, 3}), eps).item() ==
        doctest::Approx(0.96).epsilon(1e-15));
  const Tensor g = Tensor::vector({0.3, -2.0, 1.1});
  CHECK(std::abs(pairwise_cosine(g, g, eps).item() - 1.0) <= 1e-12);
  // zero vectors are well-defined
  CHECK(pairwise_cosine(Tensor::zeros({3}), g, eps).item() == 0.0);
  CHECK(pairwise_cosine(Tensor::zeros({3}), Tensor::zeros({3}), eps).item() == 0.0);
  CHECK_THROWS_AS(pairwise_cosine(Tensor::vector({1, 2}), g, eps), ContractError);
}

TEST_CASE("pairwise_cosine properties over random vectors") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tensor a = random_vector(rng, n), b = random_vector(rng, n);
    const double ab = pairwise_cosine(a, b, 1e-8).item();
    const double ba = pairwise_cosine(b, a, 1e-8).item();
    CHECK(std::abs(ab - ba) <= 1e-15);
    CHECK(ab >= -1.0 - 1e-12);
    CHECK(ab <= 1.0 + 1e-12);
    CHECK(std::abs(ab - cosine_oracle(a.values(), b.values(), 1e-8)) <= 1e-12);
    const double c = pos(rng);
    CHECK(std::abs(pairwise_cosine(scale(a, c), b, 1e-8).item() - ab) <= 1e-12);
    CHECK(std::abs(pairwise_cosine(scale(a, c), a, 1e-8).item() - 1.0) <= 1e-9);
    if (n > 1) CHECK(pairwise_cosine(scale(a, -c), a, 1e-8).item() < 1.0 - 1e-9);
  }
}

TEST_CASE("pairwise_cosine gradient and detached mode") {
  std::mt19937_64 rng(21);
  std::vector<Tensor> ps{random_vector(rng, 6), random_vector(rng, 6)};
  auto f = [](std::span<const Tensor> v) { return pairwise_cosine(v[0], v[1], 1e-8); };
  CHECK(check_gradient(f, ps, 1e-6) <= 1e-6);

  Tape tape;
  Tensor a = tape.variable(ps[0]), b = tape.variable(ps[1]);
  Tensor c = pairwise_cosine(a, b, 1e-8, GradMode::Detached);
  CHECK_FALSE(c.on_tape());
  CHECK(c.item() == pairwise_cosine(ps[0], ps[1], 1e-8).item());
}

TEST_CASE("cosine_penalty examples") {
  RegularizerConfig cfg;
  const Tensor g = Tensor::vector({0.5, -0.25});
  const Tensor one[] = {g};
  CHECK(cosine_penalty(one, cfg).item() == 0.0);
  CHECK(cosine_penalty(std::span<const Tensor>{}, cfg).item() == 0.0);
  const Tensor same[] = {g, g};
  CHECK(std::abs(cosine_penalty(same, cfg).item() - 1.0) <= 1e-12);

  const double r = 1.0 / std::sqrt(2.0);
  const Tensor three[] = {Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({r, r})};
  CHECK(cosine_penalty(three, cfg).item() == doctest::Approx(1.414214).epsilon(1e-6));
  CHECK(std::abs(cosine_penalty(three, cfg).item() - std::sqrt(2.0)) <= 1e-12);

  const Tensor opposed[] = {Tensor::vector({1, 1}), Tensor::vector({-1, -0.5})};
  const double raw = cosine_penalty(opposed, cfg).item();
  CHECK(raw < 0.0);
  cfg.variant = CosineVariant::Relu;
  CHECK(cosine_penalty(opposed, cfg).item() == 0.0);
  cfg.variant = CosineVariant::Abs;
  CHECK(cosine_penalty(opposed, cfg).item() == doctest::Approx(-raw).epsilon(1e-15));

  // a zero-gradient task contributes zero terms and no NaN
  cfg.variant = CosineVariant::Raw;
  const Tensor with_zero[] = {Tensor::zeros({2}), Tensor::vector({1, 2}), Tensor::vector({2, 1})};
  CHECK(cosine_penalty(with_zero, cfg).item() == doctest::Approx(0.8).epsilon(1e-15));

  cfg.lambda = -1;
  CHECK_THROWS_AS(cosine_penalty(same, cfg), ConfigError);
  CHECK(parse_cosine_variant("abs") == CosineVariant::Abs);
  CHECK(parse_grad_mode("detached") == GradMode::Detached);
  CHECK_THROWS_AS(parse_cosine_variant("neg"), ConfigError);
}

TEST_CASE("total_loss examples") {
  const Tensor L = Tensor::scalar(1.0), C = Tensor::scalar(0.5);
  CHECK(total_loss(L, C, 0.1).item() == doctest::Approx(1.05).epsilon(1e-15));
  const Tensor same = total_loss(Tensor::scalar(0.37), C, 0.0);
  CHECK(same.item() == 0.37);
  CHECK_THROWS_AS(total_loss(L, C, -0.1), ContractError);
}

namespace {

// Tiny two-task model (P_theta = 49) with fixed inputs; returns L_total as a
// function of the shared parameters only.
struct TinyProblem {
  ModelParams params;
  std::vector<std::vector<TokenId>> xs{{4, 5}, {5, 6, 7}, {4, 7}};
  std::vector<std::size_t> labels{1, 0, 1};
  std::vector<double> scores{0.5, -1.0, 2.0};

  explicit TinyProblem(std::uint64_t seed) {
    std::vector<TaskSpec> tasks{TaskSpec{1, "cls", TaskKind::Classification, LossKind::CrossEntropy, 1.0, 0.1, 2},
                                TaskSpec{2, "reg", TaskKind::Regression, LossKind::MeanSquaredError, 0.7, 0.1, 0}};
    params = init_model(seed, ModelDims{8, 3, 4}, tasks);
    // nonzero biases so relu kinks are not hit at the initial point
    params.encoder.b1 = Tensor::vector({0.05, -0.1, 0.2, 0.01});
  }

  Tensor objective(std::span<const Tensor> theta, const RegularizerConfig& cfg) const {
    EncoderParams enc{theta[0], theta[1], theta[2], theta[3], theta[4]};
    const double w[] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    Tensor h = encode_batch(xs, enc);
    Tensor l1 = weighted_cross_entropy(classify_head(h, std::get<ClassifierHead>(params.heads.at(1))), labels, w);
    Tensor l2 = weighted_squared_error(regression_head(h, std::get<RegressionHead>(params.heads.at(2))), scores, w);
    const bool higher = cfg.grad_mode == GradMode::Exact;
    const GradientMap g[] = {backward(l1, theta, higher), backward(l2, theta, higher)};
    const Tensor losses[] = {l1, l2};
    const double alphas[] = {1.0, 0.7};
    return total_loss(joint_loss(losses, alphas), cosine_penalty(g, theta, cfg), cfg.lambda);
  }
};

}  // namespace

TEST_CASE("exact-mode gradient of the total loss matches finite differences") {
  RegularizerConfig cfg;
  cfg.lambda = 0.5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TinyProblem prob(seed);
    const std::vector<Tensor> theta = prob.params.shared();
    CHECK(prob.params.shared_size() <= 200);
    auto f = [&](std::span<const Tensor> v) { return prob.objective(v, cfg); };
    CHECK(check_gradient(f, theta, 1e-6) <= 1e-3);
  }
}

TEST_CASE("detached mode drops the penalty from the gradient") {
  TinyProblem prob(3);
  RegularizerConfig detached;
  detached.lambda = 0.5;
  detached.grad_mode = GradMode::Detached;
  RegularizerConfig off;

  Tape t1, t2;
  std::vector<Tensor> th1, th2;
  for (const Tensor& x : prob.params.shared()) {
    th1.push_back(t1.variable(x));
    th2.push_back(t2.variable(x));
  }
  Tensor with_penalty = prob.objective(th1, detached);
  Tensor without = prob.objective(th2, off);
  CHECK(with_penalty.item() != without.item());
  GradientMap g1 = backward(with_penalty, th1), g2 = backward(without, th2);
  for (std::size_t i = 0; i < th1.size(); ++i) {
    const auto a = g1.at(th1[i]).values(), b = g2.at(th2[i]).values();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }
}

TEST_CASE("update_dynamic_weights examples") {
  WeightState s{{1, 1}, {}};
  const double equal[] = {0.3, 0.3};
  WeightState e = update_dynamic_weights(s, equal, 1e-8);
  CHECK(e.alphas[0] == 1.0);
  CHECK(e.alphas[1] == 1.0);
  CHECK(e.history.size() == 1);

  const double n21[] = {2, 1}, n2010[] = {20, 10};
  WeightState a = update_dynamic_weights(s, n21, 1e-8);
  CHECK(a.alphas[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(a.alphas[1] == doctest::Approx(4.0 / 3).epsilon(1e-15));
  WeightState b = update_dynamic_weights(s, n2010, 1e-8);
  CHECK(std::abs(a.alphas[0] - b.alphas[0]) <= 1e-15);
  CHECK(std::abs(a.alphas[1] - b.alphas[1]) <= 1e-15);
  CHECK(b.history.back().grad_norms == std::vector<double>{20, 10});

  const double zeros[] = {0, 0, 0};
  WeightState z = update_dynamic_weights(WeightState{{1, 1, 1}, {}}, zeros, 1e-8);
  for (double x : z.alphas) CHECK(x == 1.0);

  CHECK_THROWS_AS(update_dynamic_weights(s, zeros, 1e-8), ContractError);
}

TEST_CASE("dynamic weights stay normalized and clamped") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> logu(-8, 8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 2 + trial % 30;
    std::vector<double> norms(T);
    for (double& n : norms) n = trial % 7 == 0 && &n == &norms[0] ? 0.0 : std::exp(logu(rng));
    WeightState s{std::vector<double>(T, 1.0), {}};
    for (int step = 0; step < 3; ++step) s = update_dynamic_weights(s, norms, 1e-8);
    CHECK(std::abs(sum_of(s.alphas) - static_cast<double>(T)) <= 1e-12 * static_cast<double>(T));
    for (double x : s.alphas) {
      CHECK(x >= 0.1);
      CHECK(x <= 10.0);
      CHECK(std::isfinite(x));
    }
    CHECK(s.history.size() == 3);
  }
}
