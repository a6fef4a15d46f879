#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cotlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string details;
};

/// Finite differences of the enumerated expected reward vs. the enumerated
/// expectation of the surrogate gradient, per variant.
std::vector<CheckResult> verify_lemma(std::uint64_t seed, int n_instances = 3,
                                      double rel_tol = 1e-3, double h = 1e-4);

/// Mean of stochastic training gradients vs. the enumerated gradient.
/// `family_z` is the per-coordinate threshold in standard errors, widened
/// for the number of coordinates tested (Bonferroni on a 3-sigma budget).
std::vector<CheckResult> verify_unbiased(std::uint64_t seed, int n_steps = 20000,
                                         double family_z = 5.0);

/// jepo_group_reward >= mean of member logprob rewards, with equality only
/// for constant groups.
std::vector<CheckResult> verify_jensen(std::uint64_t seed, int n_groups = 10000);

/// E[logprob-MC1] <= E[logprob-MC4] <= E[logprob-MC32] <= true marginal,
/// all by exact enumeration.
std::vector<CheckResult> verify_mc(std::uint64_t seed);

std::vector<CheckResult> verify_all(std::uint64_t seed);

}  // namespace cotlab
