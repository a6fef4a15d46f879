#include "cotlab/advantages.hpp"

#include "cotlab/logmath.hpp"
#include "cotlab/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace cotlab;

namespace {

AnswerScore from_sum(double sum) {
  AnswerScore s;
  s.per_token_logprobs = {sum};
  s.sum_logprob = sum;
  s.answer_len = 1;
  return s;
}

}  // namespace

TEST_CASE("rloo advantages on hand values") {
  const auto adv = rloo_advantages({100, 10, 10, 100});
  REQUIRE(adv.size() == 4);
  CHECK(adv[0] == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(-60.0).epsilon(1e-12));
  CHECK(adv[2] == doctest::Approx(-60.0).epsilon(1e-12));
  CHECK(adv[3] == doctest::Approx(60.0).epsilon(1e-12));

  const auto flat = rloo_advantages({5, 5, 5});
  for (double a : flat) CHECK(a == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)rloo_advantages({1.0}), GroupTooSmallError);
}

TEST_CASE("rloo advantages sum to zero and ignore constant shifts") {
  CounterRng rng(StreamKey(1).with("groups"));
  for (int trial = 0; trial < 10000; ++trial) {
    const size_t g = 2 + rng.next_u64() % 7;
    std::vector<double> rewards(g);
    for (double& r : rewards) r = 200.0 * rng.uniform() - 100.0;
    const auto adv = rloo_advantages(rewards);
    double total = 0.0;
    for (double a : adv) total += a;
    CHECK(std::abs(total) < 1e-9);

    const double c = 50.0 * rng.uniform() - 25.0;
    std::vector<double> shifted = rewards;
    for (double& r : shifted) r += c;
    const auto adv_shifted = rloo_advantages(shifted);
    for (size_t i = 0; i < g; ++i) {
      CHECK(std::abs(adv[i] - adv_shifted[i]) < 1e-9);
    }
  }
}

TEST_CASE("jepo advantages on hand values") {
  std::vector<AnswerScore> scores{from_sum(-1.0), from_sum(-3.0)};
  const auto adv = jepo_advantages(scores);
  REQUIRE(adv.size() == 2);
  CHECK(adv[0] == doctest::Approx(1.4337808304830273).epsilon(1e-9));
  CHECK(adv[1] == doctest::Approx(-0.5662191695169727).epsilon(1e-9));

  std::vector<AnswerScore> flat{from_sum(-2.0), from_sum(-2.0), from_sum(-2.0)};
  for (double a : jepo_advantages(flat)) CHECK(a == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)jepo_advantages({from_sum(-1.0)}), GroupTooSmallError);
}

TEST_CASE("jepo advantage sign matches the leave-one-out comparison") {
  CounterRng rng(StreamKey(2).with("jepo"));
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t g = 2 + rng.next_u64() % 5;
    std::vector<AnswerScore> scores;
    std::vector<double> sums(g);
    for (size_t i = 0; i < g; ++i) {
      sums[i] = -8.0 * rng.uniform();
      scores.push_back(from_sum(sums[i]));
    }
    const auto adv = jepo_advantages(scores);
    for (size_t i = 0; i < g; ++i) {
      // brute-force recomputation of both log-mean-exps
      std::vector<double> rest;
      for (size_t j = 0; j < g; ++j) {
        if (j != i) rest.push_back(sums[j]);
      }
      const double full = log_mean_exp(sums);
      const double loo = log_mean_exp(rest);
      CHECK(std::abs(adv[i] - (full - loo)) < 1e-9);
      if (sums[i] > loo) CHECK(adv[i] > 0.0);
      if (sums[i] < loo) CHECK(adv[i] < 0.0);
    }
  }
}

TEST_CASE("jepo advantages are permutation-equivariant") {
  std::vector<AnswerScore> scores{from_sum(-0.5), from_sum(-2.5), from_sum(-4.0)};
  const auto adv = jepo_advantages(scores);
  std::vector<AnswerScore> rotated{scores[2], scores[0], scores[1]};
  const auto adv_rot = jepo_advantages(rotated);
  CHECK(adv_rot[0] == doctest::Approx(adv[2]).epsilon(1e-14));
  CHECK(adv_rot[1] == doctest::Approx(adv[0]).epsilon(1e-14));
  CHECK(adv_rot[2] == doctest::Approx(adv[1]).epsilon(1e-14));
}
