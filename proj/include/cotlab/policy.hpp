#pragma once

#include "cotlab/rng.hpp"
#include "cotlab/types.hpp"
#include "cotlab/vocab.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotlab {

struct ContextTooLongError : std::runtime_error {
  explicit ContextTooLongError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat gradient accumulator aligned with a model's parameter vector.
struct GradBuffer {
  Vec g;
  long samples = 0;

  explicit GradBuffer(Eigen::Index n) : g(Vec::Zero(n)) {}
  void reset() {
    g.setZero();
    samples = 0;
  }
  void add(const GradBuffer& other) {
    g += other.g;
    samples += other.samples;
  }
};

/// Description of one named slice of the flat parameter vector.
struct ParamSegment {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Incremental decoding state. Parameters are read-only while any session
/// is alive (generate -> accumulate -> update phases).
class DecodeSession {
 public:
  virtual ~DecodeSession() = default;
  /// Log-softmax over the vocab for the token after the current context.
  virtual const Vec& next_logprobs() = 0;
  virtual void push(TokenId token) = 0;
  virtual int context_length() const = 0;
};

class PolicyModel {
 public:
  virtual ~PolicyModel() = default;

  virtual const Vocab& vocab() const = 0;
  virtual int context_limit() const = 0;

  virtual Eigen::Index param_count() const = 0;
  virtual Vec& params() = 0;
  virtual const Vec& params() const = 0;
  virtual std::vector<ParamSegment> segments() const = 0;

  /// Log-softmax over the vocab for the token following `context`.
  /// Entries may be -inf for models with restricted support.
  virtual Vec next_token_logprobs(TokenSpan context) const = 0;

  /// buffer.g += sum_t weights[t] * grad log pi(continuation[t] | prefix ++ continuation[:t]).
  virtual void accumulate_logprob_grad(TokenSpan prefix, TokenSpan continuation,
                                       std::span<const double> token_weights,
                                       GradBuffer& buffer) const = 0;

  /// logprobs[t] = log pi(continuation[t] | prefix ++ continuation[:t]).
  virtual std::vector<double> score_continuation(TokenSpan prefix, TokenSpan continuation) const;

  virtual std::unique_ptr<DecodeSession> start_session(TokenSpan prefix) const;
};

/// Probability vector over the vocab; sums to 1 within 1e-9.
Vec next_token_distribution(const PolicyModel& model, TokenSpan context);

/// buffer.g += weight * grad log pi(continuation | prefix).
void accumulate_weighted_logprob_grad(const PolicyModel& model, GradBuffer& buffer,
                                      TokenSpan prefix, TokenSpan continuation, double weight);

struct SampledContinuation {
  TokenSeq tokens;               // includes the stop token when emitted
  std::vector<double> logprobs;  // T=1 logprobs of the emitted tokens
  bool truncated = false;        // stop never emitted within max_new
};

/// Samples until `stop` is emitted or max_new tokens are out. Logprobs are
/// recorded from the temperature-1 distribution regardless of `temperature`.
SampledContinuation sample_continuation(const PolicyModel& model, TokenSpan prefix,
                                        double temperature, int max_new, TokenId stop,
                                        CounterRng& rng);

struct GreedyContinuation {
  TokenSeq tokens;
  bool truncated = false;
};

/// Argmax decoding; ties break to the lowest token id.
GreedyContinuation greedy_continuation(const PolicyModel& model, TokenSpan prefix, int max_new,
                                       TokenId stop);

}  // namespace cotlab
