#pragma once

#include "cotlab/core.hpp"
#include "cotlab/policy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cotlab {

struct AllDegenerateError : std::runtime_error {
  AllDegenerateError() : std::runtime_error("every question had zero variance; no local correlation") {}
};

enum class LogprobAveraging { PerToken, PerAnswer };

struct EvalConfig {
  int cot_max_new = 64;
  int answer_max_new = 48;
  int mc_extra_n = 0;  // 0 = MC1 only; 32 adds the MC32 fields
  std::uint64_t seed = 0;
  int threads = 1;
};

/// One evaluation snapshot. perplexity == exp(-per_answer_logprob_mc1).
struct MetricRecord {
  long step = -1;
  double greedy_success = 0.0;
  double sampled_success_t1 = 0.0;
  double sampled_success_wilson_half = 0.0;
  double success_rate_expectation = 0.0;
  double per_token_logprob_mc1 = 0.0;
  double per_answer_logprob_mc1 = 0.0;
  double mean_answer_sum_logprob = 0.0;  // the logprob reward measured on this set
  std::optional<double> per_token_logprob_mc32;
  std::optional<double> per_answer_logprob_mc32;
  double perplexity = 1.0;
  double mean_cot_length = 0.0;
  long n_examples = 0;
  long n_cot_samples = 0;
};

double greedy_success(const PolicyModel& model, std::span<const Example> examples,
                      const EvalConfig& cfg);
double sampled_success(const PolicyModel& model, std::span<const Example> examples,
                       const EvalConfig& cfg, double* wilson_half = nullptr);
double success_rate_expectation(const PolicyModel& model, std::span<const Example> examples,
                                const EvalConfig& cfg);

struct LogprobMc {
  double per_token = 0.0;
  double per_answer = 0.0;
};

/// logprob-MCN: per example, ln((1/N) sum_i pi(a*|p,z_i)) over N sampled
/// CoTs, then averaged per-token or per-answer across the dataset.
LogprobMc logprob_mc(const PolicyModel& model, std::span<const Example> examples, int n,
                     const EvalConfig& cfg);

double perplexity(double per_answer_logprob_mc1);

double mean_cot_length(const PolicyModel& model, std::span<const Example> examples,
                       const EvalConfig& cfg);

/// Full suite with shared rollouts per example; one pass over the data.
MetricRecord evaluate(const PolicyModel& model, std::span<const Example> examples,
                      const EvalConfig& cfg, long step = -1);

enum class CorrelationReward { Logprob, Probability };

struct CorrelationQuestion {
  std::string id;
  double r = 0.0;
  bool skipped = false;
};

struct CorrelationReport {
  double global_r = 0.0;
  double mean_local_r = 0.0;
  int n_skipped = 0;
  std::vector<CorrelationQuestion> questions;
};

/// Pearson correlation between CoT length and the reward of a*, pooled
/// (global) and per-question averaged (local). Zero-variance questions are
/// skipped; if all are, AllDegenerateError is thrown.
CorrelationReport correlation_analysis(const PolicyModel& model, std::span<const Example> questions,
                                       int samples_per_question, CorrelationReward reward_kind,
                                       const EvalConfig& cfg);

}  // namespace cotlab
