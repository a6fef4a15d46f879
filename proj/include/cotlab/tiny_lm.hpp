#pragma once

#include "cotlab/policy.hpp"

#include <memory>
#include <unordered_map>

namespace cotlab {

struct TinyLmConfig {
  int embed_dim = 32;
  int n_layers = 2;
  int n_heads = 2;
  int ff_dim = 128;
  int context_len = 256;
  double init_std = 0.02;

  void validate() const;
};

/// Decoder-only causal-attention LM: pre-LN blocks, learned positional
/// embeddings, tanh-GELU MLP, untied lm head. Forward and backward are
/// explicit passes over the fixed architecture; no autograd.
class TinyLM final : public PolicyModel {
 public:
  TinyLM(std::shared_ptr<const Vocab> vocab, TinyLmConfig config, std::uint64_t init_seed);
  /// Uninitialized parameters (zeros); used by the checkpoint loader.
  TinyLM(std::shared_ptr<const Vocab> vocab, TinyLmConfig config);

  const Vocab& vocab() const override { return *vocab_; }
  int context_limit() const override { return cfg_.context_len; }
  const TinyLmConfig& config() const { return cfg_; }

  Eigen::Index param_count() const override { return params_.size(); }
  Vec& params() override { return params_; }
  const Vec& params() const override { return params_; }
  std::vector<ParamSegment> segments() const override { return segments_; }

  Vec next_token_logprobs(TokenSpan context) const override;
  std::vector<double> score_continuation(TokenSpan prefix, TokenSpan continuation) const override;
  void accumulate_logprob_grad(TokenSpan prefix, TokenSpan continuation,
                               std::span<const double> token_weights,
                               GradBuffer& buffer) const override;
  std::unique_ptr<DecodeSession> start_session(TokenSpan prefix) const override;

 private:
  struct Cache;
  friend class TinyLmSession;

  void build_segments();
  Eigen::Index offset_of(const std::string& name) const;

  Eigen::Map<const Mat> mat(const Vec& theta, const std::string& name) const;
  Eigen::Map<Mat> mat(Vec& theta, const std::string& name) const;

  /// Runs the stack over `tokens`, filling the cache with everything the
  /// backward pass needs. Returns final layernormed states [C x T].
  void forward(TokenSpan tokens, Cache& cache) const;

  std::shared_ptr<const Vocab> vocab_;
  TinyLmConfig cfg_;
  Vec params_;
  std::vector<ParamSegment> segments_;
  std::unordered_map<std::string, Eigen::Index> seg_index_;
};

}  // namespace cotlab
