#include "cotlab/trainer.hpp"

#include "cotlab/logmath.hpp"
#include "cotlab/parallel.hpp"

#include <cmath>
#include <cstdlib>

namespace cotlab {

namespace {

bool advantage_sign_flip_hook() {
  // Sentinel for the verify suites: lets tests inject a corrupted build.
  static const bool flip = std::getenv("COTLAB_TEST_FLIP_ADVANTAGE") != nullptr;
  return flip;
}

void check_finite(const GradBuffer& grad, long step) {
  if (!grad.g.allFinite()) {
    throw NonFiniteLossError("non-finite gradient at step " + std::to_string(step));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (questions_per_step < 1) throw std::invalid_argument("questions_per_step must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("grad_clip_norm must be > 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (max_new < 1 || answer_max_new < 1) throw std::invalid_argument("generation budgets must be >= 1");
}

double lr_at(long step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) throw std::invalid_argument("lr_at: step out of range");
  const double lr_max = cfg.learning_rate;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    return lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const long span = cfg.total_steps - cfg.warmup_steps;
  if (span <= 0) return lr_max;
  const double progress = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_global_norm(GradBuffer& grad, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip threshold must be > 0");
  const double norm = grad.g.norm();
  if (norm > threshold) grad.g *= threshold / norm;
  return norm;
}

void adamw_update(Vec& theta, const Vec& grad_ascent, OptimizerState& opt, const AdamConfig& cfg,
                  double lr) {
  if (opt.m.size() != theta.size()) throw std::invalid_argument("optimizer state size mismatch");
  ++opt.t;
  // descent on the negated ascent gradient
  opt.m = cfg.beta1 * opt.m - (1.0 - cfg.beta1) * grad_ascent;
  opt.v = cfg.beta2 * opt.v + (1.0 - cfg.beta2) * grad_ascent.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
  theta.array() -= lr * (opt.m.array() / bc1) / ((opt.v.array() / bc2).sqrt() + cfg.eps);
  if (cfg.weight_decay != 0.0) theta.array() -= lr * cfg.weight_decay * theta.array();
}

std::vector<GroupRollout> sample_group(const PolicyModel& model, const Example& example,
                                       const TrainConfig& cfg, long step) {
  const bool binary = cfg.reward.variant == RewardVariant::BinaryVerifier;
  const TokenSeq rendered = render_prompt(example);
  std::vector<GroupRollout> group(static_cast<size_t>(cfg.group_size));

  parallel_for(group.size(), cfg.threads, [&](size_t i) {
    CounterRng rng(StreamKey(cfg.seed)
                       .with("rollout")
                       .with(static_cast<std::uint64_t>(step))
                       .with(example.id)
                       .with(static_cast<std::uint64_t>(i)));
    GroupRollout& gr = group[i];
    if (binary) {
      gr.emission = sample_continuation(model, rendered, 1.0, cfg.full_budget(), ANS_CLOSE, rng);
      gr.rollout = parse_completion(gr.emission.tokens);
      gr.rollout.truncated = gr.emission.truncated;
    } else {
      gr.emission = sample_continuation(model, rendered, 1.0, cfg.max_new, ANS_OPEN, rng);
      const auto& toks = gr.emission.tokens;
      const size_t cot_len = gr.emission.truncated ? toks.size() : toks.size() - 1;
      gr.rollout.cot.assign(toks.begin(), toks.begin() + static_cast<long>(cot_len));
      gr.rollout.cot_logprobs.assign(gr.emission.logprobs.begin(),
                                     gr.emission.logprobs.begin() + static_cast<long>(cot_len));
      gr.rollout.truncated = gr.emission.truncated;
      gr.rollout.parse_ok = false;  // no answer span was sampled
    }
    gr.scoring_prefix = cot_prefix_for_scoring(gr.rollout, rendered);
    if (!binary) gr.score = make_answer_score(model, gr.scoring_prefix, example.answer);
  });
  return group;
}

std::vector<double> group_rewards(const std::vector<GroupRollout>& group, const Example& example,
                                  const RewardSpec& spec) {
  std::vector<double> rewards(group.size());
  for (size_t i = 0; i < group.size(); ++i) {
    switch (spec.variant) {
      case RewardVariant::BinaryVerifier:
        rewards[i] = binary_verifier_reward(group[i].rollout, example, spec.binary_values);
        break;
      case RewardVariant::Probability: rewards[i] = probability_reward(group[i].score); break;
      case RewardVariant::AvgProbability: rewards[i] = avg_probability_reward(group[i].score); break;
      case RewardVariant::Logprob:
      case RewardVariant::Jepo: rewards[i] = logprob_reward(group[i].score); break;
      case RewardVariant::AvgLogprob: rewards[i] = avg_logprob_reward(group[i].score); break;
    }
  }
  return rewards;
}

std::vector<double> group_advantages(const std::vector<GroupRollout>& group,
                                     const std::vector<double>& rewards, const RewardSpec& spec) {
  std::vector<double> adv;
  if (spec.variant == RewardVariant::Jepo) {
    std::vector<AnswerScore> scores;
    scores.reserve(group.size());
    for (const auto& g : group) scores.push_back(g.score);
    adv = jepo_advantages(scores);
  } else {
    adv = rloo_advantages(rewards);
  }
  if (spec.length_penalty) {
    std::vector<double> penalties(group.size());
    for (size_t i = 0; i < group.size(); ++i) {
      penalties[i] = length_penalty(static_cast<Eigen::Index>(group[i].rollout.cot.size()),
                                    spec.length_penalty->rate, spec.length_penalty->threshold);
    }
    const std::vector<double> padv = rloo_advantages(penalties);
    for (size_t i = 0; i < group.size(); ++i) adv[i] += padv[i];
  }
  if (advantage_sign_flip_hook()) {
    for (double& a : adv) a = -a;
  }
  return adv;
}

void accumulate_group_gradient(const PolicyModel& model, const Example& example,
                               const std::vector<GroupRollout>& group,
                               const std::vector<double>& advantages, const RewardSpec& spec,
                               double scale, const PolicyModel* ref, GradBuffer& out) {
  const TokenSeq rendered = render_prompt(example);
  const bool binary = spec.variant == RewardVariant::BinaryVerifier;

  // Jepo's grad R term is softmax-weighted over the group
  std::vector<double> jepo_w;
  if (spec.variant == RewardVariant::Jepo) {
    std::vector<double> sums(group.size());
    for (size_t i = 0; i < group.size(); ++i) sums[i] = group[i].score.sum_logprob;
    const double z = log_sum_exp(sums);
    jepo_w.resize(group.size());
    for (size_t i = 0; i < group.size(); ++i) jepo_w[i] = std::exp(sums[i] - z);
  }

  for (size_t i = 0; i < group.size(); ++i) {
    const GroupRollout& gr = group[i];
    const TokenSeq& action = gr.emission.tokens;

    // Reinforce weights on the sampled tokens, plus the per-token KL term
    std::vector<double> action_w(action.size(), advantages[i] * scale);
    if (spec.kl_coeff > 0.0 && ref != nullptr && !action.empty()) {
      const std::vector<double> ref_lp = ref->score_continuation(rendered, action);
      for (size_t t = 0; t < action.size(); ++t) {
        const double u = ref_lp[t] - gr.emission.logprobs[t];
        action_w[t] += spec.kl_coeff * (std::exp(u) - 1.0) * scale;
      }
    }

    if (binary) {
      if (!action.empty()) model.accumulate_logprob_grad(rendered, action, action_w, out);
      out.samples += 1;
      continue;
    }

    // One pass over rendered ++ cot ++ <answer> ++ a* ++ </answer>:
    // sampled tokens carry the reinforce weight, the reference answer the
    // grad-R weight, and a forced <answer> (truncated rollout) carries none.
    TokenSeq continuation = gr.rollout.cot;
    std::vector<double> weights(continuation.size());
    for (size_t t = 0; t < continuation.size(); ++t) weights[t] = action_w[t];
    continuation.push_back(ANS_OPEN);
    weights.push_back(gr.emission.truncated ? 0.0 : action_w[gr.rollout.cot.size()]);

    const AnswerScore& score = gr.score;
    const double alen = static_cast<double>(score.answer_len);
    double direct = 0.0;
    switch (spec.variant) {
      case RewardVariant::Logprob: direct = 1.0; break;
      case RewardVariant::AvgLogprob: direct = 1.0 / alen; break;
      case RewardVariant::Probability: direct = std::exp(score.sum_logprob); break;
      case RewardVariant::Jepo: direct = jepo_w[i]; break;
      default: break;
    }
    for (Eigen::Index t = 0; t <= score.answer_len; ++t) {
      const bool terminator = t == score.answer_len;
      double w = direct;
      if (spec.variant == RewardVariant::AvgProbability) {
        w = terminator ? 0.0
                       : std::exp(score.per_token_logprobs[static_cast<size_t>(t)]) / alen;
      }
      continuation.push_back(terminator ? static_cast<TokenId>(ANS_CLOSE)
                                        : example.answer[static_cast<size_t>(t)]);
      weights.push_back(w * scale);
    }
    model.accumulate_logprob_grad(rendered, continuation, weights, out);
    out.samples += 1;
  }
}

StepReport compute_rl_gradient(const PolicyModel& model, std::span<const Example> batch,
                               const TrainConfig& cfg, long step, const PolicyModel* ref,
                               GradBuffer& out) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  StepReport report;
  report.step = step;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * cfg.group_size);

  for (const Example& example : batch) {
    const std::vector<GroupRollout> group = sample_group(model, example, cfg, step);
    const std::vector<double> rewards = group_rewards(group, example, cfg.reward);
    const std::vector<double> advantages = group_advantages(group, rewards, cfg.reward);
    accumulate_group_gradient(model, example, group, advantages, cfg.reward, scale, ref, out);

    const TokenSeq rendered = render_prompt(example);
    for (size_t i = 0; i < group.size(); ++i) {
      const GroupRollout& gr = group[i];
      double penalty = 0.0;
      if (cfg.reward.length_penalty) {
        penalty = length_penalty(static_cast<Eigen::Index>(gr.rollout.cot.size()),
                                 cfg.reward.length_penalty->rate,
                                 cfg.reward.length_penalty->threshold);
      }
      report.mean_reward += rewards[i] + penalty;
      report.mean_cot_len += static_cast<double>(gr.rollout.cot.size());
      report.tag_rate += gr.emission.truncated ? 0.0 : 1.0;
      if (cfg.reward.variant != RewardVariant::BinaryVerifier) {
        report.mean_answer_logprob += gr.score.sum_logprob;
      }
      if (cfg.reward.kl_coeff > 0.0 && ref != nullptr && !gr.emission.tokens.empty()) {
        const std::vector<double> ref_lp = ref->score_continuation(rendered, gr.emission.tokens);
        double kl = 0.0;
        for (size_t t = 0; t < ref_lp.size(); ++t) {
          kl += kl_penalty_term(gr.emission.logprobs[t], ref_lp[t]);
        }
        report.mean_kl += kl;
      }
      ++report.n_rollouts;
    }
  }
  const double inv = 1.0 / static_cast<double>(report.n_rollouts);
  report.mean_reward *= inv;
  report.mean_cot_len *= inv;
  report.tag_rate *= inv;
  report.mean_answer_logprob *= inv;
  report.mean_kl *= inv;
  return report;
}

StepReport rl_train_step(PolicyModel& model, OptimizerState& opt, std::span<const Example> batch,
                         const TrainConfig& cfg, long step, const PolicyModel* ref) {
  GradBuffer grad(model.param_count());
  StepReport report = compute_rl_gradient(model, batch, cfg, step, ref, grad);
  check_finite(grad, step);
  report.grad_norm = clip_global_norm(grad, cfg.grad_clip_norm);
  report.lr = lr_at(step, cfg);
  adamw_update(model.params(), grad.g, opt, cfg.adam, report.lr);
  return report;
}

StepReport sft_step(PolicyModel& model, OptimizerState& opt, std::span<const Example> batch,
                    const TrainConfig& cfg, long step) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  GradBuffer grad(model.param_count());
  StepReport report;
  report.step = step;
  const double scale = 1.0 / static_cast<double>(batch.size());

  for (const Example& example : batch) {
    const TokenSeq rendered = render_prompt(example);
    TokenSeq target = {THINK_CLOSE, ANS_OPEN};
    target.insert(target.end(), example.answer.begin(), example.answer.end());
    target.push_back(ANS_CLOSE);
    accumulate_weighted_logprob_grad(model, grad, rendered, target, scale);
    grad.samples += 1;

    const std::vector<double> lp = model.score_continuation(rendered, target);
    double sum = 0.0;
    for (double x : lp) sum += x;
    report.mean_answer_logprob += sum;
    report.mean_reward += sum;  // comparable to the logprob reward scale
    report.mean_cot_len += 1.0;  // the parsed think span is [</think>]
    ++report.n_rollouts;
  }
  const double inv = 1.0 / static_cast<double>(report.n_rollouts);
  report.mean_answer_logprob *= inv;
  report.mean_reward *= inv;
  report.mean_cot_len *= inv;
  report.tag_rate = 1.0;

  check_finite(grad, step);
  report.grad_norm = clip_global_norm(grad, cfg.grad_clip_norm);
  report.lr = lr_at(step, cfg);
  adamw_update(model.params(), grad.g, opt, cfg.adam, report.lr);
  return report;
}

std::vector<WarmstartTriple> build_warmstart_dataset(const PolicyModel& model,
                                                     std::span<const Example> examples, int k,
                                                     const TrainConfig& cfg) {
  if (k < 1) throw std::invalid_argument("warmstart k must be >= 1");
  std::vector<WarmstartTriple> out(examples.size() * static_cast<size_t>(k));
  parallel_for(out.size(), cfg.threads, [&](size_t idx) {
    const Example& example = examples[idx / static_cast<size_t>(k)];
    const size_t j = idx % static_cast<size_t>(k);
    CounterRng rng(StreamKey(cfg.seed)
                       .with("warmstart")
                       .with(example.id)
                       .with(static_cast<std::uint64_t>(j)));
    const TokenSeq rendered = render_prompt(example);
    const SampledContinuation sc =
        sample_continuation(model, rendered, 1.0, cfg.max_new, ANS_OPEN, rng);
    const size_t cot_len = sc.truncated ? sc.tokens.size() : sc.tokens.size() - 1;
    WarmstartTriple& t = out[idx];
    t.example_id = example.id;
    t.prompt = example.prompt;
    t.cot.assign(sc.tokens.begin(), sc.tokens.begin() + static_cast<long>(cot_len));
    t.answer = example.answer;
  });
  return out;
}

StepReport warmstart_sft_step(PolicyModel& model, OptimizerState& opt,
                              std::span<const WarmstartTriple> batch, const TrainConfig& cfg,
                              long step) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  GradBuffer grad(model.param_count());
  StepReport report;
  report.step = step;
  const double scale = 1.0 / static_cast<double>(batch.size());

  for (const WarmstartTriple& triple : batch) {
    Example shell{triple.example_id, triple.prompt, triple.answer};
    TokenSeq prefix = render_prompt(shell);
    prefix.insert(prefix.end(), triple.cot.begin(), triple.cot.end());
    prefix.push_back(ANS_OPEN);
    TokenSeq target(triple.answer.begin(), triple.answer.end());
    target.push_back(ANS_CLOSE);
    accumulate_weighted_logprob_grad(model, grad, prefix, target, scale);
    grad.samples += 1;

    const std::vector<double> lp = model.score_continuation(prefix, target);
    double sum = 0.0;
    for (double x : lp) sum += x;
    report.mean_answer_logprob += sum;
    report.mean_reward += sum;
    report.mean_cot_len += static_cast<double>(triple.cot.size());
    ++report.n_rollouts;
  }
  const double inv = 1.0 / static_cast<double>(report.n_rollouts);
  report.mean_answer_logprob *= inv;
  report.mean_reward *= inv;
  report.mean_cot_len *= inv;

  check_finite(grad, step);
  report.grad_norm = clip_global_norm(grad, cfg.grad_clip_norm);
  report.lr = lr_at(step, cfg);
  adamw_update(model.params(), grad.g, opt, cfg.adam, report.lr);
  return report;
}

}  // namespace cotlab
