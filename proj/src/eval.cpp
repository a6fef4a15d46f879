#include "cotlab/eval.hpp"

#include "cotlab/logmath.hpp"
#include "cotlab/parallel.hpp"
#include "cotlab/rewards.hpp"

#include <cmath>

namespace cotlab {

namespace {

struct ExampleEval {
  bool greedy_ok = false;
  bool sampled_ok = false;
  double prob_reward = 0.0;
  double cot_len = 0.0;
  std::vector<double> answer_sums;  // one per sampled CoT
  long answer_len = 0;
};

CounterRng cot_stream(const EvalConfig& cfg, const std::string& id, int i) {
  return CounterRng(
      StreamKey(cfg.seed).with("eval").with(id).with("cot").with(static_cast<std::uint64_t>(i)));
}

/// CoT sampled at temperature 1, truncated at <answer>.
Rollout sample_eval_cot(const PolicyModel& model, TokenSpan rendered, const EvalConfig& cfg,
                        CounterRng& rng) {
  const SampledContinuation sc =
      sample_continuation(model, rendered, 1.0, cfg.cot_max_new, ANS_OPEN, rng);
  Rollout r;
  const size_t cot_len = sc.truncated ? sc.tokens.size() : sc.tokens.size() - 1;
  r.cot.assign(sc.tokens.begin(), sc.tokens.begin() + static_cast<long>(cot_len));
  r.cot_logprobs.assign(sc.logprobs.begin(), sc.logprobs.begin() + static_cast<long>(cot_len));
  r.truncated = sc.truncated;
  return r;
}

bool answer_matches(TokenSpan emitted, bool truncated, TokenSpan reference) {
  if (truncated) return false;  // </answer> never emitted
  if (emitted.size() != reference.size() + 1) return false;
  for (size_t i = 0; i < reference.size(); ++i) {
    if (emitted[i] != reference[i]) return false;
  }
  return emitted.back() == ANS_CLOSE;
}

ExampleEval evaluate_example(const PolicyModel& model, const Example& example,
                             const EvalConfig& cfg, int n_cots) {
  const TokenSeq rendered = render_prompt(example);
  ExampleEval ee;
  ee.answer_len = static_cast<long>(example.answer.size());
  ee.answer_sums.reserve(static_cast<size_t>(n_cots));

  TokenSeq first_prefix;
  for (int i = 0; i < n_cots; ++i) {
    CounterRng rng = cot_stream(cfg, example.id, i);
    const Rollout cot = sample_eval_cot(model, rendered, cfg, rng);
    const TokenSeq prefix = cot_prefix_for_scoring(cot, rendered);
    const AnswerScore score = make_answer_score(model, prefix, example.answer);
    ee.answer_sums.push_back(score.sum_logprob);
    if (i == 0) {
      first_prefix = prefix;
      ee.cot_len = static_cast<double>(cot.cot.size());
      ee.prob_reward = probability_reward(score);
    }
  }

  const GreedyContinuation greedy =
      greedy_continuation(model, first_prefix, cfg.answer_max_new, ANS_CLOSE);
  ee.greedy_ok = answer_matches(greedy.tokens, greedy.truncated, example.answer);

  CounterRng arng(StreamKey(cfg.seed).with("eval").with(example.id).with("answer"));
  const SampledContinuation sampled =
      sample_continuation(model, first_prefix, 1.0, cfg.answer_max_new, ANS_CLOSE, arng);
  ee.sampled_ok = answer_matches(sampled.tokens, sampled.truncated, example.answer);
  return ee;
}

std::vector<ExampleEval> evaluate_all(const PolicyModel& model, std::span<const Example> examples,
                                      const EvalConfig& cfg, int n_cots) {
  std::vector<ExampleEval> slots(examples.size());
  parallel_for(examples.size(), cfg.threads, [&](size_t i) {
    slots[i] = evaluate_example(model, examples[i], cfg, n_cots);
  });
  return slots;
}

LogprobMc aggregate_mc(const std::vector<ExampleEval>& slots, int n) {
  LogprobMc out;
  double sum_s = 0.0, sum_len = 0.0, sum_ratio = 0.0;
  for (const auto& ee : slots) {
    const std::span<const double> sums(ee.answer_sums.data(), static_cast<size_t>(n));
    const double s = log_mean_exp(sums);
    sum_s += s;
    sum_len += static_cast<double>(ee.answer_len);
    sum_ratio += s / static_cast<double>(ee.answer_len);
  }
  out.per_token = sum_s / sum_len;
  out.per_answer = sum_ratio / static_cast<double>(slots.size());
  return out;
}

double wilson_half_width(double p_hat, double n) {
  constexpr double z = 1.959963984540054;
  const double z2 = z * z;
  return (z / (1.0 + z2 / n)) * std::sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n));
}

}  // namespace

double greedy_success(const PolicyModel& model, std::span<const Example> examples,
                      const EvalConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("greedy_success: no examples");
  const auto slots = evaluate_all(model, examples, cfg, 1);
  double ok = 0.0;
  for (const auto& ee : slots) ok += ee.greedy_ok ? 1.0 : 0.0;
  return ok / static_cast<double>(slots.size());
}

double sampled_success(const PolicyModel& model, std::span<const Example> examples,
                       const EvalConfig& cfg, double* wilson_half) {
  if (examples.empty()) throw std::invalid_argument("sampled_success: no examples");
  const auto slots = evaluate_all(model, examples, cfg, 1);
  double ok = 0.0;
  for (const auto& ee : slots) ok += ee.sampled_ok ? 1.0 : 0.0;
  const double rate = ok / static_cast<double>(slots.size());
  if (wilson_half) *wilson_half = wilson_half_width(rate, static_cast<double>(slots.size()));
  return rate;
}

double success_rate_expectation(const PolicyModel& model, std::span<const Example> examples,
                                const EvalConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("success_rate_expectation: no examples");
  const auto slots = evaluate_all(model, examples, cfg, 1);
  double acc = 0.0;
  for (const auto& ee : slots) acc += ee.prob_reward;
  return acc / static_cast<double>(slots.size());
}

LogprobMc logprob_mc(const PolicyModel& model, std::span<const Example> examples, int n,
                     const EvalConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("logprob_mc: no examples");
  if (n < 1) throw std::invalid_argument("logprob_mc: n must be >= 1");
  return aggregate_mc(evaluate_all(model, examples, cfg, n), n);
}

double perplexity(double per_answer_logprob_mc1) {
  if (!std::isfinite(per_answer_logprob_mc1)) throw std::invalid_argument("perplexity: non-finite input");
  return std::exp(-per_answer_logprob_mc1);
}

double mean_cot_length(const PolicyModel& model, std::span<const Example> examples,
                       const EvalConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("mean_cot_length: no examples");
  const auto slots = evaluate_all(model, examples, cfg, 1);
  double acc = 0.0;
  for (const auto& ee : slots) acc += ee.cot_len;
  return acc / static_cast<double>(slots.size());
}

MetricRecord evaluate(const PolicyModel& model, std::span<const Example> examples,
                      const EvalConfig& cfg, long step) {
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  const int n_cots = std::max(1, cfg.mc_extra_n);
  const auto slots = evaluate_all(model, examples, cfg, n_cots);

  MetricRecord rec;
  rec.step = step;
  rec.n_examples = static_cast<long>(slots.size());
  rec.n_cot_samples = static_cast<long>(slots.size()) * n_cots;

  double greedy_ok = 0.0, sampled_ok = 0.0, prob = 0.0, len = 0.0;
  for (const auto& ee : slots) {
    greedy_ok += ee.greedy_ok ? 1.0 : 0.0;
    sampled_ok += ee.sampled_ok ? 1.0 : 0.0;
    prob += ee.prob_reward;
    len += ee.cot_len;
  }
  const double n = static_cast<double>(slots.size());
  rec.greedy_success = greedy_ok / n;
  rec.sampled_success_t1 = sampled_ok / n;
  rec.sampled_success_wilson_half = wilson_half_width(rec.sampled_success_t1, n);
  rec.success_rate_expectation = prob / n;
  rec.mean_cot_length = len / n;

  const LogprobMc mc1 = aggregate_mc(slots, 1);
  rec.per_token_logprob_mc1 = mc1.per_token;
  rec.per_answer_logprob_mc1 = mc1.per_answer;
  double sum_s = 0.0;
  for (const auto& ee : slots) sum_s += ee.answer_sums[0];
  rec.mean_answer_sum_logprob = sum_s / n;
  if (cfg.mc_extra_n > 1) {
    const LogprobMc mcn = aggregate_mc(slots, cfg.mc_extra_n);
    rec.per_token_logprob_mc32 = mcn.per_token;
    rec.per_answer_logprob_mc32 = mcn.per_answer;
  }
  rec.perplexity = perplexity(rec.per_answer_logprob_mc1);
  return rec;
}

CorrelationReport correlation_analysis(const PolicyModel& model, std::span<const Example> questions,
                                       int samples_per_question, CorrelationReward reward_kind,
                                       const EvalConfig& cfg) {
  if (questions.size() < 2) throw std::invalid_argument("correlation: need at least 2 questions");
  if (samples_per_question < 3) throw std::invalid_argument("correlation: need at least 3 samples");

  const size_t q = questions.size();
  const size_t s = static_cast<size_t>(samples_per_question);
  std::vector<std::vector<double>> xs(q, std::vector<double>(s));
  std::vector<std::vector<double>> ys(q, std::vector<double>(s));

  parallel_for(q * s, cfg.threads, [&](size_t idx) {
    const size_t qi = idx / s;
    const size_t si = idx % s;
    const Example& example = questions[qi];
    const TokenSeq rendered = render_prompt(example);
    CounterRng rng(StreamKey(cfg.seed)
                       .with("corr")
                       .with(example.id)
                       .with(static_cast<std::uint64_t>(si)));
    const Rollout cot = sample_eval_cot(model, rendered, cfg, rng);
    const TokenSeq prefix = cot_prefix_for_scoring(cot, rendered);
    const AnswerScore score = make_answer_score(model, prefix, example.answer);
    xs[qi][si] = static_cast<double>(cot.cot.size());
    ys[qi][si] = reward_kind == CorrelationReward::Logprob ? logprob_reward(score)
                                                           : probability_reward(score);
  });

  CorrelationReport report;
  std::vector<double> all_x, all_y;
  all_x.reserve(q * s);
  all_y.reserve(q * s);
  double local_sum = 0.0;
  int local_n = 0;
  for (size_t qi = 0; qi < q; ++qi) {
    all_x.insert(all_x.end(), xs[qi].begin(), xs[qi].end());
    all_y.insert(all_y.end(), ys[qi].begin(), ys[qi].end());
    CorrelationQuestion cq;
    cq.id = questions[qi].id;
    const double r = pearson(xs[qi], ys[qi]);
    if (std::isnan(r)) {
      cq.skipped = true;
      ++report.n_skipped;
    } else {
      cq.r = r;
      local_sum += r;
      ++local_n;
    }
    report.questions.push_back(std::move(cq));
  }
  if (local_n == 0) throw AllDegenerateError();
  report.mean_local_r = local_sum / static_cast<double>(local_n);
  report.global_r = pearson(all_x, all_y);
  return report;
}

}  // namespace cotlab
