#pragma once

#include "cotlab/types.hpp"
#include "cotlab/vocab.hpp"

#include <string>
#include <vector>

namespace cotlab {

/// One dataset item: prompt tokens plus the reference answer tokens
/// (tags excluded on both sides).
struct Example {
  std::string id;
  TokenSeq prompt;
  TokenSeq answer;

  /// Throws std::invalid_argument on empty sequences or special tokens.
  void validate(const Vocab& vocab) const;
};

/// One sampled completion, split at the answer tags.
struct Rollout {
  TokenSeq cot;               // tokens before <answer>, </think> included
  TokenSeq answer;            // tokens strictly between <answer> and </answer>
  std::vector<double> cot_logprobs;  // aligned with cot, T=1 logprobs
  bool parse_ok = false;      // both tags present, in order
  bool truncated = false;     // generation hit the length budget
};

/// G rollouts for one example with their rewards and advantages.
struct Group {
  std::string example_id;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// [<bos>] + prompt + [<think>]: generation starts inside the think span.
TokenSeq render_prompt(const Example& example);

/// Splits a generated continuation at the first <answer> and the first
/// </answer> after it. Failure is encoded as parse_ok=false, never thrown.
Rollout parse_completion(TokenSpan tokens);

/// rendered_prompt + cot + [<answer>]: the prefix the reference answer is
/// scored against. <answer> is forced even when the rollout never emitted
/// it, so likelihood rewards stay defined.
TokenSeq cot_prefix_for_scoring(const Rollout& rollout, TokenSpan rendered_prompt);

}  // namespace cotlab
