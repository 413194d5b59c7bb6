// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "icprobe/error.hpp"
#include "icprobe/probe.hpp"
#include "probe_oracle.hpp"
#include "support.hpp"

using namespace icprobe;
using namespace icprobe::testing;

namespace {

double max_group_error(const ProbeGrads& g, const std::array<std::vector<double>, 4>& numeric) {
  const std::array<std::span<const float>, 4> analytic{g.key.values(), g.query.values(), g.weight.values(),
                                                       g.bias.values()};
  double worst = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(analytic[k].size() == numeric[k].size());
    for (std::size_t i = 0; i < numeric[k].size(); ++i) {
      worst = std::max(worst, relative_error(analytic[k][i], numeric[k][i]));
    }
  }
  return worst;
}

bool all_zero(const ProbeGrads& g) {
  for (auto values : {g.key.values(), g.query.values(), g.weight.values(), g.bias.values()}) {
    for (float x : values) {
      if (x != 0.0f) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("all-zero parameters give uniform attention and class probabilities") {
  const ProbeParams p = ProbeParams::zeros({4, 3, 3});
  RngStream rng(1);
  const RepSequence reps = random_sequence(5, 4, rng);
  const ForwardTrace t = forward(p, reps);
  for (std::size_t i = 0; i < 5; ++i) CHECK(t.weights[i] == doctest::Approx(0.2).epsilon(1e-6));
  for (std::size_t k = 0; k < 3; ++k) CHECK(t.probs[k] == doctest::Approx(1.0 / 3).epsilon(1e-6));
}

TEST_CASE("a single token gets all the attention") {
  RngStream rng(2);
  const ProbeParams p = random_params({6, 4, 2}, rng);
  const RepSequence reps = random_sequence(1, 6, rng);
  const ForwardTrace t = forward(p, reps);
  CHECK(t.weights[0] == 1.0f);
  for (std::size_t j = 0; j < 6; ++j) CHECK(t.pooled[j] == doctest::Approx(reps.row(0)[j]).epsilon(1e-6));
}

TEST_CASE("hand-computed two-token trace") {
  ProbeParams p = ProbeParams::zeros({2, 2, 2});
  p.key = Matrix::identity(2);
  p.query = Matrix::identity(2);
  p.weight = Matrix::identity(2);
  const RepSequence reps(2, 2, {1.0f, 0.0f, 0.0f, 1.0f});
  const ForwardTrace t = forward(p, reps);
  // s = [1, 0]; α = [e/(e+1), 1/(e+1)]; z = α; p = softmax(z).
  CHECK(t.scores[0] == 1.0f);
  CHECK(t.scores[1] == 0.0f);
  CHECK(t.weights[0] == doctest::Approx(0.7310585786300049).epsilon(1e-6));
  CHECK(t.weights[1] == doctest::Approx(0.2689414213699951).epsilon(1e-6));
  CHECK(t.pooled[0] == doctest::Approx(0.7310585786300049).epsilon(1e-6));
  CHECK(t.probs[0] == doctest::Approx(0.6135163043587272).epsilon(1e-6));
  CHECK(t.probs[1] == doctest::Approx(0.3864836956412729).epsilon(1e-6));
  CHECK(predict(p, reps) == 0);
}

TEST_CASE("forward rejects bad inputs") {
  const ProbeParams p = ProbeParams::zeros({4, 2, 2});
  RngStream rng(3);
  try {
    forward(p, random_sequence(3, 5, rng));
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
  CHECK_THROWS_AS(forward(p, RepSequence(0, 4, {})), Error);
}

TEST_CASE("loss examples") {
  ForwardTrace t;
  t.probs = Vector{0.5f, 0.5f};
  CHECK(loss(t, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  t.probs = Vector{1.0f, 0.0f};
  CHECK(loss(t, 0) == doctest::Approx(0.0));
  CHECK(loss(t, 1) == doctest::Approx(-std::log(1e-12)));
  t.probs = Vector{0.25f, 0.75f};
  CHECK(loss(t, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK_THROWS_AS(loss(t, 2), Error);
}

TEST_CASE("predict breaks probability ties toward class 0") {
  ProbeParams p = ProbeParams::zeros({3, 2, 2});
  RngStream rng(4);
  CHECK(predict(p, random_sequence(4, 3, rng)) == 0);
  p.bias = Vector{2.0f, -2.0f};
  CHECK(predict(p, random_sequence(4, 3, rng)) == 0);
  p.bias = Vector{-2.0f, 2.0f};
  CHECK(predict(p, random_sequence(4, 3, rng)) == 1);
}

TEST_CASE("backward: uniform two-class output gives db = p - onehot") {
  const ProbeParams p = ProbeParams::zeros({3, 2, 2});
  RngStream rng(5);
  const RepSequence reps = random_sequence(4, 3, rng);
  const ForwardTrace t = forward(p, reps);
  const ProbeGrads g = backward(p, reps, 0, t);
  CHECK(g.bias[0] == doctest::Approx(-0.5));
  CHECK(g.bias[1] == doctest::Approx(0.5));
}

TEST_CASE("backward: a perfect prediction is a stationary point") {
  RngStream rng(6);
  const ProbeParams p = random_params({4, 3, 2}, rng);
  const RepSequence reps = random_sequence(3, 4, rng);
  ForwardTrace t = forward(p, reps);
  t.probs = Vector{1.0f, 0.0f};
  CHECK(all_zero(backward(p, reps, 0, t)));
}

TEST_CASE("backward rejects a trace from another sequence") {
  RngStream rng(7);
  const ProbeParams p = random_params({4, 3, 2}, rng);
  const ForwardTrace t = forward(p, random_sequence(3, 4, rng));
  try {
    backward(p, random_sequence(5, 4, rng), 0, t);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("backward matches finite differences on the d=8, N=5, C=2, d_k=4 instance") {
  RngStream rng(8);
  const ProbeParams p = random_params({8, 4, 2}, rng);
  const RepSequence reps = random_sequence(5, 8, rng);
  const ForwardTrace t = forward(p, reps);
  const auto numeric = finite_difference_grads(p, reps, 1);
  CHECK(max_group_error(backward(p, reps, 1, t), numeric) < 1e-3);
}

TEST_CASE("backward matches finite differences with score scaling and raw scores") {
  RngStream rng(9);
  for (const ProbeOptions options : {ProbeOptions{true, ScoreMode::Softmax}, ProbeOptions{false, ScoreMode::Raw},
                                     ProbeOptions{true, ScoreMode::Raw}}) {
    for (int trial = 0; trial < 10; ++trial) {
      const ProbeParams p = random_params({6, 3, 3}, rng, 0.3, options);
      const RepSequence reps = random_sequence(4, 6, rng);
      const std::size_t label = rng.below(3);
      const auto numeric = finite_difference_grads(p, reps, label);
      CHECK(max_group_error(backward(p, reps, label, forward(p, reps)), numeric) < 1e-3);
    }
  }
}

TEST_CASE("permuting non-instruction tokens leaves the prediction unchanged") {
  RngStream rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.below(10);
    const std::size_t n = 2 + rng.below(7);
    const ProbeParams p = random_params({d, 1 + rng.below(6), 2 + rng.below(3)}, rng);
    const RepSequence reps = random_sequence(n, d, rng);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(perm).subspan(1), rng);
    std::vector<float> values;
    for (std::size_t i : perm) values.insert(values.end(), reps.row(i).begin(), reps.row(i).end());
    const RepSequence permuted(n, d, std::move(values));

    const ForwardTrace a = forward(p, reps);
    const ForwardTrace b = forward(p, permuted);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(a.pooled[j] - b.pooled[j]) <= 1e-6);
    for (std::size_t k = 0; k < a.logits.size(); ++k) {
      CHECK(std::abs(a.logits[k] - b.logits[k]) <= 1e-6);
      CHECK(std::abs(a.probs[k] - b.probs[k]) <= 1e-6);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a.weights[perm[i]] - b.weights[i]) <= 1e-6);
  }
}

TEST_CASE("attention weights and class probabilities are probability vectors") {
  RngStream rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    const ProbeParams p = random_params({d, 1 + rng.below(8), 2 + rng.below(3)}, rng, 2.0);
    const ForwardTrace t = forward(p, random_sequence(1 + rng.below(8), d, rng, 3.0));
    for (const Vector* v : {&t.weights, &t.probs}) {
      double total = 0.0;
      for (float x : v->values()) {
        CHECK(x >= 0.0f);
        total += x;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("forward is bit-deterministic") {
  RngStream rng(12);
  const ProbeParams p = random_params({7, 5, 3}, rng);
  const RepSequence reps = random_sequence(6, 7, rng);
  const ForwardTrace a = forward(p, reps);
  const ForwardTrace b = forward(p, reps);
  CHECK(a.scores == b.scores);
  CHECK(a.weights == b.weights);
  CHECK(a.pooled == b.pooled);
  CHECK(a.logits == b.logits);
  CHECK(a.probs == b.probs);
}

TEST_CASE("validate catches inconsistent shapes") {
  ProbeParams p = ProbeParams::zeros({4, 3, 2});
  CHECK_NOTHROW(p.validate());
  p.weight = Matrix(3, 2);
  CHECK_THROWS_AS(p.validate(), Error);
}
