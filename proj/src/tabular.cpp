#include "cotlab/tabular.hpp"

#include "cotlab/core.hpp"
#include "cotlab/logmath.hpp"

#include <algorithm>
#include <cstring>
#include <functional>

namespace cotlab {

std::string TabularPolicy::pack(TokenSpan context) {
  std::string key;
  key.resize(context.size() * sizeof(TokenId));
  if (!context.empty()) std::memcpy(key.data(), context.data(), key.size());
  return key;
}

TabularPolicy::TabularPolicy(std::shared_ptr<const Vocab> vocab, std::vector<TokenId> alphabet,
                             std::vector<TokenSeq> contexts, int context_limit)
    : vocab_(std::move(vocab)),
      alphabet_(std::move(alphabet)),
      contexts_(std::move(contexts)),
      context_limit_(context_limit) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  for (TokenId t : alphabet_) {
    if (!vocab_->contains(t)) throw std::invalid_argument("alphabet token outside vocab");
  }
  alphabet_slot_.assign(static_cast<size_t>(vocab_->size()), -1);
  for (size_t i = 0; i < alphabet_.size(); ++i) alphabet_slot_[alphabet_[i]] = static_cast<Eigen::Index>(i);

  std::sort(contexts_.begin(), contexts_.end());
  contexts_.erase(std::unique(contexts_.begin(), contexts_.end()), contexts_.end());
  index_.reserve(contexts_.size());
  for (size_t r = 0; r < contexts_.size(); ++r) index_.emplace(pack(contexts_[r]), static_cast<Eigen::Index>(r));

  params_ = Vec::Zero(static_cast<Eigen::Index>(contexts_.size() * alphabet_.size()));
}

std::vector<ParamSegment> TabularPolicy::segments() const {
  return {{"logits", static_cast<Eigen::Index>(contexts_.size()),
           static_cast<Eigen::Index>(alphabet_.size()), 0}};
}

bool TabularPolicy::has_context(TokenSpan context) const {
  return index_.find(pack(context)) != index_.end();
}

Eigen::Index TabularPolicy::row_of(TokenSpan context) const {
  auto it = index_.find(pack(context));
  if (it == index_.end()) {
    throw std::logic_error("tabular policy queried with a context outside its table (length " +
                           std::to_string(context.size()) + ")");
  }
  return it->second;
}

Vec TabularPolicy::next_token_logprobs(TokenSpan context) const {
  const Eigen::Index row = row_of(context);
  const Eigen::Index a = static_cast<Eigen::Index>(alphabet_.size());
  Vec local = params_.segment(row * a, a);
  log_softmax_inplace(local);
  Vec full = Vec::Constant(vocab_->size(), kNegInf);
  for (Eigen::Index i = 0; i < a; ++i) full[alphabet_[i]] = local[i];
  return full;
}

void TabularPolicy::accumulate_logprob_grad(TokenSpan prefix, TokenSpan continuation,
                                            std::span<const double> token_weights,
                                            GradBuffer& buffer) const {
  if (token_weights.size() != continuation.size()) {
    throw std::invalid_argument("token_weights size mismatch");
  }
  if (buffer.g.size() != params_.size()) throw std::invalid_argument("grad buffer size mismatch");
  const Eigen::Index a = static_cast<Eigen::Index>(alphabet_.size());
  TokenSeq ctx(prefix.begin(), prefix.end());
  for (size_t t = 0; t < continuation.size(); ++t) {
    const double w = token_weights[t];
    const TokenId y = continuation[t];
    if (w != 0.0) {
      const Eigen::Index slot = alphabet_slot_[y];
      if (slot < 0) throw std::logic_error("gradient of a zero-probability token");
      const Eigen::Index row = row_of(ctx);
      const Vec p = softmax(params_.segment(row * a, a));
      buffer.g.segment(row * a, a) -= w * p;
      buffer.g[row * a + slot] += w;
    }
    ctx.push_back(y);
  }
}

void TabularPolicy::init_gaussian(CounterRng& rng, double scale) {
  for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = scale * rng.normal();
}

TabularPolicyBuilder::TabularPolicyBuilder(std::shared_ptr<const Vocab> vocab,
                                           std::vector<TokenId> alphabet)
    : vocab_(std::move(vocab)), alphabet_(std::move(alphabet)) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
}

void TabularPolicyBuilder::add_context(TokenSeq context) {
  auto [it, inserted] = seen_.emplace(TabularPolicy::pack(context), true);
  if (inserted) contexts_.push_back(std::move(context));
}

void TabularPolicyBuilder::add_sampling_tree(TokenSpan root, int max_new, TokenId stop) {
  std::function<void(TokenSeq&, int)> grow = [&](TokenSeq& ctx, int emitted) {
    if (emitted >= max_new) return;
    add_context(ctx);
    for (TokenId t : alphabet_) {
      if (t == stop) continue;  // stop emission is a leaf, no further queries
      ctx.push_back(t);
      grow(ctx, emitted + 1);
      ctx.pop_back();
    }
  };
  TokenSeq ctx(root.begin(), root.end());
  grow(ctx, 0);
}

void TabularPolicyBuilder::for_each_leaf(TokenSpan root, int max_new, TokenId stop,
                                         const std::function<void(const TokenSeq&, bool)>& on_leaf) const {
  (void)root;  // leaves are relative emissions; the root only anchors callers
  std::function<void(TokenSeq&, int)> grow = [&](TokenSeq& emitted, int depth) {
    if (depth == max_new) {
      on_leaf(emitted, true);
      return;
    }
    for (TokenId t : alphabet_) {
      emitted.push_back(t);
      if (t == stop) {
        on_leaf(emitted, false);
      } else {
        grow(emitted, depth + 1);
      }
      emitted.pop_back();
    }
  };
  TokenSeq emitted;
  grow(emitted, 0);
}

void TabularPolicyBuilder::add_scoring_paths(TokenSpan root, int max_new, TokenId stop,
                                             TokenSpan continuation) {
  for_each_leaf(root, max_new, stop, [&](const TokenSeq& emitted, bool /*truncated*/) {
    const Rollout r = parse_completion(emitted);
    TokenSeq ctx(root.begin(), root.end());
    ctx.insert(ctx.end(), r.cot.begin(), r.cot.end());
    ctx.push_back(ANS_OPEN);
    // distributions are queried at the prefix and after each continuation
    // token except the last
    add_context(ctx);
    for (size_t k = 0; k + 1 < continuation.size(); ++k) {
      ctx.push_back(continuation[k]);
      add_context(ctx);
    }
  });
}

std::shared_ptr<TabularPolicy> TabularPolicyBuilder::build(int context_limit) const {
  return std::make_shared<TabularPolicy>(vocab_, alphabet_, contexts_, context_limit);
}

}  // namespace cotlab
