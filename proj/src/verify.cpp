#include "cotlab/verify.hpp"

#include "cotlab/instances.hpp"
#include "cotlab/logmath.hpp"
#include "cotlab/oracle.hpp"
#include "cotlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace cotlab {

namespace {

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

const RewardVariant kPerSampleVariants[] = {
    RewardVariant::Logprob,  RewardVariant::AvgLogprob,     RewardVariant::Probability,
    RewardVariant::AvgProbability, RewardVariant::BinaryVerifier,
};

TabularInstance lemma_instance(std::uint64_t seed, RewardVariant variant) {
  TabularInstanceOptions opts;
  if (variant == RewardVariant::BinaryVerifier) {
    opts.n_letters = 1;
    opts.cot_budget = 2;
    opts.answer_len = 1;
    opts.full_budget = opts.cot_budget + opts.answer_len + 2;
  } else {
    opts.n_letters = 2;
    opts.cot_budget = 2;
    opts.answer_len = 2;
    opts.full_budget = 0;
  }
  opts.answer_decode_budget = 0;
  return make_tabular_instance(seed, opts);
}

TrainConfig instance_train_config(const TabularInstance& inst, RewardVariant variant,
                                  std::uint64_t seed) {
  TrainConfig tc;
  tc.group_size = 4;
  tc.questions_per_step = 1;
  tc.reward.variant = variant;
  tc.seed = seed;
  tc.max_new = inst.cot_budget;
  // full_budget = max_new + answer_max_new + 2 must match the built table
  tc.answer_max_new = std::max(1, inst.full_budget - inst.cot_budget - 2);
  return tc;
}

}  // namespace

std::vector<CheckResult> verify_lemma(std::uint64_t seed, int n_instances, double rel_tol,
                                      double h) {
  std::vector<CheckResult> out;
  for (int k = 0; k < n_instances; ++k) {
    for (RewardVariant variant : kPerSampleVariants) {
      TabularInstance inst = lemma_instance(seed + static_cast<std::uint64_t>(k), variant);
      RewardSpec spec;
      spec.variant = variant;
      TabularPolicy& policy = *inst.policy;

      GradBuffer analytic(policy.param_count());
      enumerate_surrogate_gradient(policy, inst.example, spec, inst.cot_budget, inst.full_budget,
                                   analytic);
      const Vec fd = finite_difference_grad(
          [&] {
            return enumerate_expected_reward(policy, inst.example, spec, inst.cot_budget,
                                             inst.full_budget);
          },
          policy.params(), h);

      const double denom = std::max(fd.norm(), 1e-12);
      const double rel = (fd - analytic.g).norm() / denom;
      CheckResult r;
      r.name = "lemma/" + std::string(to_string(variant)) + "/inst" + std::to_string(k);
      r.passed = rel < rel_tol;
      r.details = fmt("rel L2 error %.3e (tol %.1e)", rel, rel_tol);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<CheckResult> verify_unbiased(std::uint64_t seed, int n_steps, double family_z) {
  std::vector<CheckResult> out;
  for (RewardVariant variant : kPerSampleVariants) {
    TabularInstance inst = lemma_instance(seed, variant);
    const Example batch[] = {inst.example};
    RewardSpec spec;
    spec.variant = variant;
    TabularPolicy& policy = *inst.policy;
    const Eigen::Index n = policy.param_count();

    GradBuffer exact(n);
    enumerate_surrogate_gradient(policy, inst.example, spec, inst.cot_budget, inst.full_budget,
                                 exact);

    TrainConfig tc = instance_train_config(inst, variant, seed);
    Vec sum = Vec::Zero(n), sumsq = Vec::Zero(n);
    GradBuffer grad(n);
    for (int s = 0; s < n_steps; ++s) {
      grad.reset();
      compute_rl_gradient(policy, batch, tc, s, nullptr, grad);
      sum += grad.g;
      sumsq += grad.g.array().square().matrix();
    }
    const double m = static_cast<double>(n_steps);
    double max_z = 0.0;
    long over3 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = sum[i] / m;
      const double var = std::max(sumsq[i] / m - mean * mean, 0.0);
      const double se = std::sqrt(var / m);
      const double err = std::abs(mean - exact.g[i]);
      double z;
      if (err < 1e-12) {
        z = 0.0;  // numerically exact coordinate; the z statistic is meaningless
      } else if (se == 0.0) {
        z = std::numeric_limits<double>::infinity();
      } else {
        z = err / se;
      }
      max_z = std::max(max_z, z);
      if (z > 3.0) ++over3;
    }
    CheckResult r;
    r.name = "unbiased/" + std::string(to_string(variant));
    r.passed = max_z < family_z;
    r.details = fmt("max |z| %.2f (familywise limit %.1f), ", max_z, family_z) +
                std::to_string(over3) + " of " + std::to_string(n) + " coords above 3";
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckResult> verify_jensen(std::uint64_t seed, int n_groups) {
  CounterRng rng(StreamKey(seed).with("jensen"));
  bool ok = true;
  double worst = 0.0;
  std::string detail;
  for (int g = 0; g < n_groups; ++g) {
    const int size = 2 + static_cast<int>(rng.next_u64() % 7);
    std::vector<AnswerScore> scores(static_cast<size_t>(size));
    double mean = 0.0;
    for (auto& s : scores) {
      s.sum_logprob = -6.0 * rng.uniform();
      s.answer_len = 1;
      mean += s.sum_logprob;
    }
    mean /= size;
    const double jepo = jepo_group_reward(scores);
    worst = std::min(worst, jepo - mean);
    if (jepo < mean - 1e-12) {
      ok = false;
      detail = "group " + std::to_string(g) + " violates Jensen by " + fmt("%.3e", mean - jepo);
      break;
    }
  }
  // equality case: all members identical
  std::vector<AnswerScore> flat(4);
  for (auto& s : flat) {
    s.sum_logprob = -2.0;
    s.answer_len = 1;
  }
  const bool eq_ok = std::abs(jepo_group_reward(flat) - (-2.0)) < 1e-12;

  std::vector<CheckResult> out;
  out.push_back({"jensen/lower_bound", ok,
                 ok ? fmt("min(jepo - mean) = %.3e over groups", worst) : detail});
  out.push_back({"jensen/equality", eq_ok, "identical sums give jepo == mean"});
  return out;
}

std::vector<CheckResult> verify_mc(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const int budgets[] = {1, 2};  // 3 and 7 CoT leaves
  for (int b : budgets) {
    TabularInstanceOptions opts;
    opts.n_letters = 1;
    opts.cot_budget = b;
    opts.answer_len = 1;
    TabularInstance inst = make_tabular_instance(seed + static_cast<std::uint64_t>(b), opts);

    std::vector<double> leaf_lp, answer_sums;
    cot_leaf_scores(*inst.policy, inst.example, inst.cot_budget, leaf_lp, answer_sums);
    const double e1 = enumerate_expected_logprob_mc(leaf_lp, answer_sums, 1);
    const double e4 = enumerate_expected_logprob_mc(leaf_lp, answer_sums, 4);
    const double e32 = enumerate_expected_logprob_mc(leaf_lp, answer_sums, 32);
    const double truth = enumerate_true_log_marginal(leaf_lp, answer_sums);

    const bool ok = e1 <= e4 + 1e-9 && e4 <= e32 + 1e-9 && e32 <= truth + 1e-9;
    CheckResult r;
    r.name = "mc/monotone/" + std::to_string(leaf_lp.size()) + "_leaves";
    r.passed = ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "E[MC1]=%.6f <= E[MC4]=%.6f <= E[MC32]=%.6f <= true=%.6f", e1,
                  e4, e32, truth);
    r.details = buf;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckResult> verify_all(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (auto& r : verify_lemma(seed)) out.push_back(std::move(r));
  for (auto& r : verify_unbiased(seed)) out.push_back(std::move(r));
  for (auto& r : verify_jensen(seed)) out.push_back(std::move(r));
  for (auto& r : verify_mc(seed)) out.push_back(std::move(r));
  return out;
}

}  // namespace cotlab
