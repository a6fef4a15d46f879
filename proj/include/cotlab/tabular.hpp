#pragma once

#include "cotlab/policy.hpp"

#include <functional>
#include <memory>
#include <unordered_map>

namespace cotlab {

/// Fully enumerable softmax policy. Every context it can be queried with is
/// declared up front; each context owns one logit row over a restricted
/// emission alphabet. Tokens outside the alphabet have probability zero.
class TabularPolicy final : public PolicyModel {
 public:
  TabularPolicy(std::shared_ptr<const Vocab> vocab, std::vector<TokenId> alphabet,
                std::vector<TokenSeq> contexts, int context_limit = 4096);

  const Vocab& vocab() const override { return *vocab_; }
  int context_limit() const override { return context_limit_; }

  Eigen::Index param_count() const override { return params_.size(); }
  Vec& params() override { return params_; }
  const Vec& params() const override { return params_; }
  std::vector<ParamSegment> segments() const override;

  Vec next_token_logprobs(TokenSpan context) const override;
  void accumulate_logprob_grad(TokenSpan prefix, TokenSpan continuation,
                               std::span<const double> token_weights,
                               GradBuffer& buffer) const override;

  const std::vector<TokenId>& alphabet() const { return alphabet_; }
  const std::vector<TokenSeq>& contexts() const { return contexts_; }
  bool has_context(TokenSpan context) const;

  /// Logit row index for a context; throws std::logic_error when unknown.
  Eigen::Index row_of(TokenSpan context) const;

  void init_gaussian(CounterRng& rng, double scale);

  /// Hash key for a context (raw token bytes).
  static std::string pack(TokenSpan context);

 private:
  std::shared_ptr<const Vocab> vocab_;
  std::vector<TokenId> alphabet_;                 // sorted, unique
  std::vector<Eigen::Index> alphabet_slot_;       // vocab id -> slot or -1
  std::vector<TokenSeq> contexts_;                // lexicographically sorted
  std::unordered_map<std::string, Eigen::Index> index_;  // packed key -> row
  Vec params_;                                    // row-major [n_contexts x n_alphabet]
  int context_limit_;
};

/// Collects the reachable context set for a tabular instance.
class TabularPolicyBuilder {
 public:
  TabularPolicyBuilder(std::shared_ptr<const Vocab> vocab, std::vector<TokenId> alphabet);

  void add_context(TokenSeq context);

  /// All contexts a sampler with this (root, max_new, stop) can query:
  /// prefixes of emissions that have not yet stopped.
  void add_sampling_tree(TokenSpan root, int max_new, TokenId stop);

  /// Contexts needed to score `continuation` after the forced-<answer>
  /// scoring prefix of every leaf of the (root, max_new, stop) tree.
  void add_scoring_paths(TokenSpan root, int max_new, TokenId stop, TokenSpan continuation);

  /// Structural walk over every leaf of the (root, max_new, stop) tree;
  /// on_leaf(emitted, truncated).
  void for_each_leaf(TokenSpan root, int max_new, TokenId stop,
                     const std::function<void(const TokenSeq&, bool)>& on_leaf) const;

  std::shared_ptr<TabularPolicy> build(int context_limit = 4096) const;

 private:
  std::shared_ptr<const Vocab> vocab_;
  std::vector<TokenId> alphabet_;
  std::vector<TokenSeq> contexts_;
  std::unordered_map<std::string, bool> seen_;
};

}  // namespace cotlab
