#pragma once

#include "cotlab/core.hpp"
#include "cotlab/tabular.hpp"

#include <memory>

namespace cotlab {

/// A self-contained enumerable policy + example pair. Logits are Gaussian,
/// so distributions are generic (no ties, nothing degenerate).
struct TabularInstance {
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<TabularPolicy> policy;
  Example example;
  int cot_budget = 0;   // max_new for CoT sampling (stop = <answer>)
  int full_budget = 0;  // max_new for full emissions (stop = </answer>); 0 when unbuilt
};

struct TabularInstanceOptions {
  int n_letters = 2;       // ordinary symbols in the emission alphabet
  int cot_budget = 2;      // CoT tokens per rollout
  int answer_len = 1;      // reference answer length
  int full_budget = 0;     // enables the binary emission tree when > 0
  int answer_decode_budget = -1;  // -1: answer_len + 1; 0: no decode trees
  double logit_scale = 0.8;
};

/// Emission alphabet is {letters..., <answer>, </answer>}; the table covers
/// the CoT sampling tree, the reference-answer scoring paths and, when
/// full_budget > 0, the complete tagged emission tree for binary rewards.
TabularInstance make_tabular_instance(std::uint64_t seed, const TabularInstanceOptions& opts = {});

}  // namespace cotlab
