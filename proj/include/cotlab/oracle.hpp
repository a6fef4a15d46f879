#pragma once

#include "cotlab/core.hpp"
#include "cotlab/policy.hpp"
#include "cotlab/rewards.hpp"

#include <functional>
#include <stdexcept>

namespace cotlab {

struct SpaceTooLargeError : std::runtime_error {
  explicit SpaceTooLargeError(const std::string& what) : std::runtime_error(what) {}
};
struct NonFiniteObjectiveError : std::runtime_error {
  NonFiniteObjectiveError() : std::runtime_error("objective returned a non-finite value") {}
};

/// One leaf of the sampler's event tree for (prefix, max_new, stop): either
/// the stop token was emitted (tokens end with it) or the budget ran out.
/// Truncated leaves carry their full emission probability, so leaf
/// probabilities sum to 1 over the tree.
struct EmissionLeaf {
  TokenSeq tokens;
  bool truncated = false;
  double logprob = 0.0;
};

/// Walks the support of the policy's next-token distributions. Throws
/// SpaceTooLargeError beyond max_leaves.
std::vector<EmissionLeaf> enumerate_emissions(const PolicyModel& policy, TokenSpan prefix,
                                              int max_new, TokenId stop,
                                              std::size_t max_leaves = 1000000);

/// Exact J = sum_z pi(z|p) R(z) over the CoT event tree (likelihood
/// variants) or the full completion tree (binary). Jepo is group-level and
/// not a per-CoT expectation; requesting it throws std::invalid_argument.
double enumerate_expected_reward(const PolicyModel& policy, const Example& example,
                                 const RewardSpec& spec, int cot_max_new, int binary_max_new = 0,
                                 std::size_t max_leaves = 1000000);

/// Exact pi^CoT(a*|p) = sum_z pi(z|p) pi(a*|p,z).
double exact_success_probability(const PolicyModel& policy, const Example& example,
                                 int cot_max_new, std::size_t max_leaves = 1000000);

/// Exact expectation of the surrogate gradient
///   E_z[ R_theta(z) grad log pi(z|p) + grad R_theta(z) ],
/// which equals the expectation of the leave-one-out training estimator.
void enumerate_surrogate_gradient(const PolicyModel& policy, const Example& example,
                                  const RewardSpec& spec, int cot_max_new, int binary_max_new,
                                  GradBuffer& out, std::size_t max_leaves = 1000000);

/// Central differences of `objective` around the current `theta`.
/// `objective` must read `theta` on every call; theta is restored on exit.
Vec finite_difference_grad(const std::function<double()>& objective, Vec& theta, double h);

/// Exact log E_z pi(a*|p,z) from per-leaf CoT logprobs and answer sums.
double enumerate_true_log_marginal(const std::vector<double>& leaf_logprobs,
                                   const std::vector<double>& answer_sums);

/// Exact E[logprob-MCN] for one example: expectation over N iid CoT draws of
/// ln((1/N) sum_i pi(a*|p,z_i)), by multinomial enumeration over leaf counts.
double enumerate_expected_logprob_mc(const std::vector<double>& leaf_logprobs,
                                     const std::vector<double>& answer_sums, int n_samples);

/// Per-leaf (logprob of leaf, answer sum-logprob) pairs for an example.
void cot_leaf_scores(const PolicyModel& policy, const Example& example, int cot_max_new,
                     std::vector<double>& leaf_logprobs, std::vector<double>& answer_sums,
                     std::size_t max_leaves = 1000000);

}  // namespace cotlab
