#include "cotlab/policy.hpp"

#include "cotlab/logmath.hpp"

namespace cotlab {

namespace {

/// Fallback session: re-queries the full context for every step.
class NaiveSession final : public DecodeSession {
 public:
  NaiveSession(const PolicyModel& model, TokenSpan prefix)
      : model_(model), context_(prefix.begin(), prefix.end()) {}

  const Vec& next_logprobs() override {
    if (!fresh_) {
      logprobs_ = model_.next_token_logprobs(context_);
      fresh_ = true;
    }
    return logprobs_;
  }

  void push(TokenId token) override {
    context_.push_back(token);
    fresh_ = false;
  }

  int context_length() const override { return static_cast<int>(context_.size()); }

 private:
  const PolicyModel& model_;
  TokenSeq context_;
  Vec logprobs_;
  bool fresh_ = false;
};

void check_budget(const PolicyModel& model, TokenSpan prefix, int max_new) {
  if (static_cast<int>(prefix.size()) + max_new > model.context_limit()) {
    throw ContextTooLongError("prefix length " + std::to_string(prefix.size()) + " + max_new " +
                              std::to_string(max_new) + " exceeds context limit " +
                              std::to_string(model.context_limit()));
  }
}

}  // namespace

std::vector<double> PolicyModel::score_continuation(TokenSpan prefix, TokenSpan continuation) const {
  if (static_cast<int>(prefix.size() + continuation.size()) > context_limit()) {
    throw ContextTooLongError("score_continuation: sequence exceeds context limit");
  }
  std::vector<double> out;
  out.reserve(continuation.size());
  TokenSeq ctx(prefix.begin(), prefix.end());
  for (TokenId t : continuation) {
    const Vec lp = next_token_logprobs(ctx);
    out.push_back(lp[t]);
    ctx.push_back(t);
  }
  return out;
}

std::unique_ptr<DecodeSession> PolicyModel::start_session(TokenSpan prefix) const {
  return std::make_unique<NaiveSession>(*this, prefix);
}

Vec next_token_distribution(const PolicyModel& model, TokenSpan context) {
  if (static_cast<int>(context.size()) > model.context_limit()) {
    throw ContextTooLongError("next_token_distribution: context exceeds limit");
  }
  Vec p = model.next_token_logprobs(context);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = p[i] == kNegInf ? 0.0 : std::exp(p[i]);
  return p;
}

void accumulate_weighted_logprob_grad(const PolicyModel& model, GradBuffer& buffer,
                                      TokenSpan prefix, TokenSpan continuation, double weight) {
  if (weight == 0.0 || continuation.empty()) return;
  const std::vector<double> weights(continuation.size(), weight);
  model.accumulate_logprob_grad(prefix, continuation, weights, buffer);
}

SampledContinuation sample_continuation(const PolicyModel& model, TokenSpan prefix,
                                        double temperature, int max_new, TokenId stop,
                                        CounterRng& rng) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");
  check_budget(model, prefix, max_new);

  SampledContinuation out;
  out.truncated = true;
  auto session = model.start_session(prefix);
  for (int step = 0; step < max_new; ++step) {
    const Vec& lp = session->next_logprobs();
    TokenId tok;
    if (temperature == 1.0) {
      Vec p = lp;
      for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = p[i] == kNegInf ? 0.0 : std::exp(p[i]);
      tok = static_cast<TokenId>(rng.categorical(p));
    } else {
      // softmax(logits / T) is invariant to the log-softmax shift
      Vec scaled = lp / temperature;
      Vec p = scaled;
      const double z = log_sum_exp(scaled);
      for (Eigen::Index i = 0; i < p.size(); ++i)
        p[i] = scaled[i] == kNegInf ? 0.0 : std::exp(scaled[i] - z);
      tok = static_cast<TokenId>(rng.categorical(p));
    }
    out.tokens.push_back(tok);
    out.logprobs.push_back(lp[tok]);
    if (tok == stop) {
      out.truncated = false;
      break;
    }
    session->push(tok);
  }
  return out;
}

GreedyContinuation greedy_continuation(const PolicyModel& model, TokenSpan prefix, int max_new,
                                       TokenId stop) {
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");
  check_budget(model, prefix, max_new);

  GreedyContinuation out;
  out.truncated = true;
  auto session = model.start_session(prefix);
  for (int step = 0; step < max_new; ++step) {
    const Vec& lp = session->next_logprobs();
    TokenId best = 0;
    for (Eigen::Index i = 1; i < lp.size(); ++i) {
      if (lp[i] > lp[best]) best = static_cast<TokenId>(i);
    }
    out.tokens.push_back(best);
    if (best == stop) {
      out.truncated = false;
      break;
    }
    session->push(best);
  }
  return out;
}

}  // namespace cotlab
