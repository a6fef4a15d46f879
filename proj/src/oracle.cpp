#include "cotlab/oracle.hpp"

#include "cotlab/logmath.hpp"

#include <cmath>

namespace cotlab {

namespace {

struct TreeWalker {
  const PolicyModel& policy;
  TokenId stop;
  int max_new;
  std::size_t max_leaves;
  std::size_t n_leaves = 0;
  std::function<void(const TokenSeq&, bool, double)> on_leaf{};

  void walk(TokenSeq& ctx, TokenSeq& emitted, double logprob, int depth) {
    if (depth == max_new) {
      emit(emitted, true, logprob);
      return;
    }
    const Vec lp = policy.next_token_logprobs(ctx);
    for (TokenId t = 0; t < static_cast<TokenId>(lp.size()); ++t) {
      if (lp[t] == kNegInf) continue;
      emitted.push_back(t);
      if (t == stop) {
        emit(emitted, false, logprob + lp[t]);
      } else {
        ctx.push_back(t);
        walk(ctx, emitted, logprob + lp[t], depth + 1);
        ctx.pop_back();
      }
      emitted.pop_back();
    }
  }

  void emit(const TokenSeq& emitted, bool truncated, double logprob) {
    if (++n_leaves > max_leaves) {
      throw SpaceTooLargeError("emission tree exceeds " + std::to_string(max_leaves) + " leaves");
    }
    on_leaf(emitted, truncated, logprob);
  }
};

void for_each_leaf(const PolicyModel& policy, TokenSpan prefix, int max_new, TokenId stop,
                   std::size_t max_leaves,
                   const std::function<void(const TokenSeq&, bool, double)>& on_leaf) {
  TreeWalker w{policy, stop, max_new, max_leaves};
  w.on_leaf = on_leaf;
  TokenSeq ctx(prefix.begin(), prefix.end());
  TokenSeq emitted;
  w.walk(ctx, emitted, 0.0, 0);
}

/// cot view of an emission from the likelihood sampler (stop = <answer>).
TokenSpan cot_of(const TokenSeq& emitted, bool truncated) {
  if (truncated) return {emitted.data(), emitted.size()};
  return {emitted.data(), emitted.size() - 1};  // trailing <answer>
}

double leaf_penalty(const RewardSpec& spec, Eigen::Index cot_len) {
  if (!spec.length_penalty) return 0.0;
  return length_penalty(cot_len, spec.length_penalty->rate, spec.length_penalty->threshold);
}

}  // namespace

std::vector<EmissionLeaf> enumerate_emissions(const PolicyModel& policy, TokenSpan prefix,
                                              int max_new, TokenId stop, std::size_t max_leaves) {
  std::vector<EmissionLeaf> out;
  for_each_leaf(policy, prefix, max_new, stop, max_leaves,
                [&](const TokenSeq& emitted, bool truncated, double logprob) {
                  out.push_back({emitted, truncated, logprob});
                });
  return out;
}

double enumerate_expected_reward(const PolicyModel& policy, const Example& example,
                                 const RewardSpec& spec, int cot_max_new, int binary_max_new,
                                 std::size_t max_leaves) {
  if (spec.variant == RewardVariant::Jepo) {
    throw std::invalid_argument("enumerate_expected_reward: jepo is a group-level reward");
  }
  const TokenSeq rendered = render_prompt(example);
  double j = 0.0;

  if (spec.variant == RewardVariant::BinaryVerifier) {
    for_each_leaf(policy, rendered, binary_max_new, ANS_CLOSE, max_leaves,
                  [&](const TokenSeq& emitted, bool truncated, double logprob) {
                    Rollout r = parse_completion(emitted);
                    r.truncated = truncated;
                    const double reward = binary_verifier_reward(r, example, spec.binary_values) +
                                          leaf_penalty(spec, static_cast<Eigen::Index>(r.cot.size()));
                    j += std::exp(logprob) * reward;
                  });
    return j;
  }

  for_each_leaf(policy, rendered, cot_max_new, ANS_OPEN, max_leaves,
                [&](const TokenSeq& emitted, bool truncated, double logprob) {
                  const TokenSpan cot = cot_of(emitted, truncated);
                  TokenSeq prefix = concat(rendered, cot);
                  prefix.push_back(ANS_OPEN);
                  const AnswerScore score = make_answer_score(policy, prefix, example.answer);
                  double reward = 0.0;
                  switch (spec.variant) {
                    case RewardVariant::Probability: reward = probability_reward(score); break;
                    case RewardVariant::AvgProbability: reward = avg_probability_reward(score); break;
                    case RewardVariant::Logprob: reward = logprob_reward(score); break;
                    case RewardVariant::AvgLogprob: reward = avg_logprob_reward(score); break;
                    default: break;
                  }
                  reward += leaf_penalty(spec, static_cast<Eigen::Index>(cot.size()));
                  j += std::exp(logprob) * reward;
                });
  return j;
}

double exact_success_probability(const PolicyModel& policy, const Example& example,
                                 int cot_max_new, std::size_t max_leaves) {
  const TokenSeq rendered = render_prompt(example);
  double p = 0.0;
  for_each_leaf(policy, rendered, cot_max_new, ANS_OPEN, max_leaves,
                [&](const TokenSeq& emitted, bool truncated, double logprob) {
                  const TokenSpan cot = cot_of(emitted, truncated);
                  TokenSeq prefix = concat(rendered, cot);
                  prefix.push_back(ANS_OPEN);
                  const AnswerScore score = make_answer_score(policy, prefix, example.answer);
                  p += std::exp(logprob + score.sum_logprob);
                });
  return p;
}

void enumerate_surrogate_gradient(const PolicyModel& policy, const Example& example,
                                  const RewardSpec& spec, int cot_max_new, int binary_max_new,
                                  GradBuffer& out, std::size_t max_leaves) {
  if (spec.variant == RewardVariant::Jepo) {
    throw std::invalid_argument("enumerate_surrogate_gradient: jepo is a group-level reward");
  }
  const TokenSeq rendered = render_prompt(example);

  if (spec.variant == RewardVariant::BinaryVerifier) {
    for_each_leaf(policy, rendered, binary_max_new, ANS_CLOSE, max_leaves,
                  [&](const TokenSeq& emitted, bool truncated, double logprob) {
                    Rollout r = parse_completion(emitted);
                    r.truncated = truncated;
                    const double reward = binary_verifier_reward(r, example, spec.binary_values) +
                                          leaf_penalty(spec, static_cast<Eigen::Index>(r.cot.size()));
                    accumulate_weighted_logprob_grad(policy, out, rendered, emitted,
                                                     std::exp(logprob) * reward);
                  });
    return;
  }

  for_each_leaf(
      policy, rendered, cot_max_new, ANS_OPEN, max_leaves,
      [&](const TokenSeq& emitted, bool truncated, double logprob) {
        const double p_leaf = std::exp(logprob);
        const TokenSpan cot = cot_of(emitted, truncated);
        TokenSeq prefix = concat(rendered, cot);
        prefix.push_back(ANS_OPEN);
        const AnswerScore score = make_answer_score(policy, prefix, example.answer);
        double reward = 0.0;
        switch (spec.variant) {
          case RewardVariant::Probability: reward = probability_reward(score); break;
          case RewardVariant::AvgProbability: reward = avg_probability_reward(score); break;
          case RewardVariant::Logprob: reward = logprob_reward(score); break;
          case RewardVariant::AvgLogprob: reward = avg_logprob_reward(score); break;
          default: break;
        }
        reward += leaf_penalty(spec, static_cast<Eigen::Index>(cot.size()));

        // Reinforce term over the emitted tokens
        accumulate_weighted_logprob_grad(policy, out, rendered, emitted, p_leaf * reward);

        // grad R_theta(z): per-token weights on a* ++ [</answer>]
        TokenSeq target(example.answer.begin(), example.answer.end());
        target.push_back(ANS_CLOSE);
        const size_t n = target.size();
        std::vector<double> w(n, 0.0);
        const double alen = static_cast<double>(score.answer_len);
        switch (spec.variant) {
          case RewardVariant::Logprob:
            std::fill(w.begin(), w.end(), p_leaf);
            break;
          case RewardVariant::AvgLogprob:
            std::fill(w.begin(), w.end(), p_leaf / alen);
            break;
          case RewardVariant::Probability:
            std::fill(w.begin(), w.end(), p_leaf * std::exp(score.sum_logprob));
            break;
          case RewardVariant::AvgProbability:
            for (Eigen::Index t = 0; t < score.answer_len; ++t) {
              w[static_cast<size_t>(t)] =
                  p_leaf * std::exp(score.per_token_logprobs[static_cast<size_t>(t)]) / alen;
            }
            break;
          default: break;
        }
        policy.accumulate_logprob_grad(prefix, target, w, out);
      });
}

Vec finite_difference_grad(const std::function<double()>& objective, Vec& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite differences need h > 0");
  Vec grad(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double up = objective();
    theta[k] = saved - h;
    const double down = objective();
    theta[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NonFiniteObjectiveError();
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double enumerate_true_log_marginal(const std::vector<double>& leaf_logprobs,
                                   const std::vector<double>& answer_sums) {
  std::vector<double> terms(leaf_logprobs.size());
  for (size_t k = 0; k < terms.size(); ++k) terms[k] = leaf_logprobs[k] + answer_sums[k];
  return log_sum_exp(terms);
}

double enumerate_expected_logprob_mc(const std::vector<double>& leaf_logprobs,
                                     const std::vector<double>& answer_sums, int n_samples) {
  const size_t k = leaf_logprobs.size();
  if (k == 0 || answer_sums.size() != k) throw std::invalid_argument("bad leaf vectors");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (k > 8) throw SpaceTooLargeError("multinomial enumeration limited to 8 leaves");

  const double log_n = std::log(static_cast<double>(n_samples));
  double expectation = 0.0;
  std::vector<int> counts(k, 0);
  std::vector<double> occupied;

  std::function<void(size_t, int)> walk = [&](size_t idx, int remaining) {
    if (idx + 1 == k) {
      counts[idx] = remaining;
      // log multinomial pmf of this count vector
      double logpmf = std::lgamma(static_cast<double>(n_samples) + 1.0);
      for (size_t j = 0; j < k; ++j) {
        logpmf -= std::lgamma(static_cast<double>(counts[j]) + 1.0);
        if (counts[j] > 0) logpmf += counts[j] * leaf_logprobs[j];
      }
      // value of the MC estimate for this draw multiset
      occupied.clear();
      for (size_t j = 0; j < k; ++j) {
        if (counts[j] > 0) occupied.push_back(std::log(static_cast<double>(counts[j])) + answer_sums[j]);
      }
      const double estimate = log_sum_exp(occupied) - log_n;
      expectation += std::exp(logpmf) * estimate;
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[idx] = c;
      walk(idx + 1, remaining - c);
    }
  };
  walk(0, n_samples);
  return expectation;
}

void cot_leaf_scores(const PolicyModel& policy, const Example& example, int cot_max_new,
                     std::vector<double>& leaf_logprobs, std::vector<double>& answer_sums,
                     std::size_t max_leaves) {
  leaf_logprobs.clear();
  answer_sums.clear();
  const TokenSeq rendered = render_prompt(example);
  for_each_leaf(policy, rendered, cot_max_new, ANS_OPEN, max_leaves,
                [&](const TokenSeq& emitted, bool truncated, double logprob) {
                  const TokenSpan cot = cot_of(emitted, truncated);
                  TokenSeq prefix = concat(rendered, cot);
                  prefix.push_back(ANS_OPEN);
                  const AnswerScore score = make_answer_score(policy, prefix, example.answer);
                  leaf_logprobs.push_back(logprob);
                  answer_sums.push_back(score.sum_logprob);
                });
}

}  // namespace cotlab
