#include "cotlab/rewards.hpp"

#include "cotlab/logmath.hpp"

#include <cmath>

namespace cotlab {

const char* to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::BinaryVerifier: return "binary_verifier";
    case RewardVariant::Probability: return "probability";
    case RewardVariant::AvgProbability: return "avg_probability";
    case RewardVariant::Logprob: return "logprob";
    case RewardVariant::AvgLogprob: return "avg_logprob";
    case RewardVariant::Jepo: return "jepo";
  }
  return "?";
}

std::optional<RewardVariant> reward_variant_from_string(const std::string& s) {
  if (s == "binary_verifier") return RewardVariant::BinaryVerifier;
  if (s == "probability") return RewardVariant::Probability;
  if (s == "avg_probability") return RewardVariant::AvgProbability;
  if (s == "logprob") return RewardVariant::Logprob;
  if (s == "avg_logprob") return RewardVariant::AvgLogprob;
  if (s == "jepo") return RewardVariant::Jepo;
  return std::nullopt;
}

AnswerScore make_answer_score(const PolicyModel& model, TokenSpan prefix, TokenSpan answer) {
  TokenSeq target(answer.begin(), answer.end());
  target.push_back(ANS_CLOSE);
  AnswerScore score;
  score.per_token_logprobs = model.score_continuation(prefix, target);
  score.answer_len = static_cast<Eigen::Index>(answer.size());
  score.sum_logprob = 0.0;
  for (double lp : score.per_token_logprobs) score.sum_logprob += lp;
  return score;
}

double binary_verifier_reward(const Rollout& rollout, const Example& example,
                              const BinaryValues& values) {
  if (!rollout.parse_ok) return values.unparsable;
  return rollout.answer == example.answer ? values.correct : values.format_only;
}

double probability_reward(const AnswerScore& score) { return std::exp(score.sum_logprob); }

double avg_probability_reward(const AnswerScore& score) {
  if (score.answer_len < 1) throw std::invalid_argument("avg_probability_reward: |a*| must be >= 1");
  double acc = 0.0;
  for (Eigen::Index t = 0; t < score.answer_len; ++t) {
    acc += std::exp(score.per_token_logprobs[static_cast<size_t>(t)]);
  }
  return acc / static_cast<double>(score.answer_len);
}

double logprob_reward(const AnswerScore& score) { return score.sum_logprob; }

double avg_logprob_reward(const AnswerScore& score) {
  if (score.answer_len < 1) throw std::invalid_argument("avg_logprob_reward: |a*| must be >= 1");
  return score.sum_logprob / static_cast<double>(score.answer_len);
}

double jepo_group_reward(const std::vector<AnswerScore>& scores) {
  if (scores.empty()) throw EmptyGroupError();
  std::vector<double> sums;
  sums.reserve(scores.size());
  for (const auto& s : scores) sums.push_back(s.sum_logprob);
  return log_mean_exp(sums);
}

double length_penalty(Eigen::Index cot_len, double rate, double threshold) {
  if (rate < 0.0 || threshold < 0.0) throw std::invalid_argument("length_penalty: r, l0 must be >= 0");
  return rate * std::min(static_cast<double>(cot_len) - threshold, 0.0);
}

double calibrate_length_rate(double delta_reward, double delta_length) {
  if (!(delta_length > 0.0)) throw ZeroLengthDeltaError();
  return delta_reward / delta_length;
}

double kl_penalty_term(double policy_logprob, double ref_logprob) {
  const double u = ref_logprob - policy_logprob;
  return std::exp(u) - u - 1.0;
}

}  // namespace cotlab
