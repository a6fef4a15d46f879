#pragma once

#include "cotlab/core.hpp"
#include "cotlab/policy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cotlab {

enum class RewardVariant {
  BinaryVerifier,
  Probability,
  AvgProbability,
  Logprob,
  AvgLogprob,
  Jepo,
};

const char* to_string(RewardVariant v);
std::optional<RewardVariant> reward_variant_from_string(const std::string& s);
inline bool is_likelihood_variant(RewardVariant v) { return v != RewardVariant::BinaryVerifier; }

struct BinaryValues {
  double correct = 100.0;
  double format_only = 10.0;
  double unparsable = 0.0;
};

struct LengthPenalty {
  double rate = 0.0;       // r >= 0
  double threshold = 0.0;  // l0 >= 0
};

struct RewardSpec {
  RewardVariant variant = RewardVariant::Logprob;
  BinaryValues binary_values;
  std::optional<LengthPenalty> length_penalty;
  double kl_coeff = 0.0;
};

/// Teacher-forced logprobs of the reference answer given a scoring prefix.
/// per_token_logprobs covers the answer tokens followed by </answer>, so the
/// summed mass includes "end of answer"; answer_len counts answer tokens only.
struct AnswerScore {
  std::vector<double> per_token_logprobs;
  double sum_logprob = 0.0;
  Eigen::Index answer_len = 0;
};

struct EmptyGroupError : std::invalid_argument {
  EmptyGroupError() : std::invalid_argument("empty group") {}
};
struct ZeroLengthDeltaError : std::invalid_argument {
  ZeroLengthDeltaError() : std::invalid_argument("delta_length must be positive") {}
};

/// Scores answer ++ [</answer>] after `prefix` (a cot_prefix_for_scoring result).
AnswerScore make_answer_score(const PolicyModel& model, TokenSpan prefix, TokenSpan answer);

double binary_verifier_reward(const Rollout& rollout, const Example& example,
                              const BinaryValues& values);

/// exp(sum logprob) = pi(a* | prefix) in (0, 1].
double probability_reward(const AnswerScore& score);

/// Mean per-token probability over answer tokens (terminator excluded).
double avg_probability_reward(const AnswerScore& score);

double logprob_reward(const AnswerScore& score);

/// sum logprob / |a*|.
double avg_logprob_reward(const AnswerScore& score);

/// log((1/G) sum_i exp(sum_logprob_i)), stable.
double jepo_group_reward(const std::vector<AnswerScore>& scores);

/// r * min(cot_len - l0, 0) <= 0
double length_penalty(Eigen::Index cot_len, double rate, double threshold);

/// r = delta_reward / delta_length; throws ZeroLengthDeltaError when
/// delta_length <= 0.
double calibrate_length_rate(double delta_reward, double delta_length);

/// Non-negative per-token KL estimate: exp(u) - u - 1 with
/// u = ref_logprob - policy_logprob ("k3" form).
double kl_penalty_term(double policy_logprob, double ref_logprob);

}  // namespace cotlab
