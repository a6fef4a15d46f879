#pragma once

#include "cotlab/advantages.hpp"
#include "cotlab/core.hpp"
#include "cotlab/policy.hpp"
#include "cotlab/rewards.hpp"

#include <span>
#include <stdexcept>

namespace cotlab {

struct NonFiniteLossError : std::runtime_error {
  explicit NonFiniteLossError(const std::string& what) : std::runtime_error(what) {}
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct TrainConfig {
  int group_size = 8;
  int questions_per_step = 8;
  double learning_rate = 3e-4;  // desk-scale default; 1e-5 suits large checkpoints
  int warmup_steps = 20;
  int total_steps = 500;
  double grad_clip_norm = 1.0;
  RewardSpec reward;
  int eval_every = 100;
  std::uint64_t seed = 1;
  int max_new = 64;         // CoT budget per rollout
  int answer_max_new = 48;  // answer region budget (binary sampling, eval decoding)
  AdamConfig adam;
  int threads = 1;

  /// Total emission budget when sampling through the answer tags.
  int full_budget() const { return max_new + answer_max_new + 2; }

  void validate() const;
};

struct OptimizerState {
  Vec m, v;
  long t = 0;

  void init(Eigen::Index n) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
    t = 0;
  }
};

/// Linear warmup to learning_rate over warmup_steps, then cosine to zero at
/// total_steps.
double lr_at(long step, const TrainConfig& cfg);

/// Scales the buffer to `threshold` when its L2 norm exceeds it.
/// Returns the pre-clip norm.
double clip_global_norm(GradBuffer& grad, double threshold);

/// One AdamW update ascending the objective whose gradient is `grad_ascent`.
void adamw_update(Vec& theta, const Vec& grad_ascent, OptimizerState& opt, const AdamConfig& cfg,
                  double lr);

struct StepReport {
  long step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;       // pre-clip
  double mean_reward = 0.0;
  double mean_cot_len = 0.0;
  double mean_kl = 0.0;
  double mean_answer_logprob = 0.0;  // teacher-forced sum logprob of a*
  double tag_rate = 0.0;             // fraction of rollouts that emitted their stop tag
  long n_rollouts = 0;
};

struct GroupRollout {
  SampledContinuation emission;
  Rollout rollout;
  TokenSeq scoring_prefix;  // rendered + cot + [<answer>]
  AnswerScore score;        // filled for likelihood variants
};

/// Samples G rollouts for one example. Streams are keyed by
/// (seed, step, example id, rollout index): reproducible and order-free.
std::vector<GroupRollout> sample_group(const PolicyModel& model, const Example& example,
                                       const TrainConfig& cfg, long step);

/// Group advantages for the configured variant; length penalties are
/// baselined with their own leave-one-out term so they compose with the
/// group-level Jepo reward as well.
std::vector<double> group_advantages(const std::vector<GroupRollout>& group,
                                     const std::vector<double>& rewards, const RewardSpec& spec);

/// Per-rollout rewards (penalty excluded; it enters via group_advantages).
std::vector<double> group_rewards(const std::vector<GroupRollout>& group, const Example& example,
                                  const RewardSpec& spec);

/// Accumulates the surrogate gradient for one example's group into `out`,
/// scaled by `scale` (typically 1/(batch*G)). `ref` enables the KL term.
void accumulate_group_gradient(const PolicyModel& model, const Example& example,
                               const std::vector<GroupRollout>& group,
                               const std::vector<double>& advantages, const RewardSpec& spec,
                               double scale, const PolicyModel* ref, GradBuffer& out);

/// Full stochastic gradient for a batch: sample, reward, advantage,
/// accumulate. No parameter update. Returns usage stats.
StepReport compute_rl_gradient(const PolicyModel& model, std::span<const Example> batch,
                               const TrainConfig& cfg, long step, const PolicyModel* ref,
                               GradBuffer& out);

/// compute_rl_gradient + clip + AdamW with the scheduled rate.
StepReport rl_train_step(PolicyModel& model, OptimizerState& opt, std::span<const Example> batch,
                         const TrainConfig& cfg, long step, const PolicyModel* ref = nullptr);

/// No-CoT supervised step on [</think><answer>] ++ a* ++ [</answer>].
StepReport sft_step(PolicyModel& model, OptimizerState& opt, std::span<const Example> batch,
                    const TrainConfig& cfg, long step);

struct WarmstartTriple {
  std::string example_id;
  TokenSeq prompt;
  TokenSeq cot;
  TokenSeq answer;  // the reference answer, not a sampled one
};

/// K temperature-1 rollouts per example, CoT truncated at <answer>.
std::vector<WarmstartTriple> build_warmstart_dataset(const PolicyModel& model,
                                                     std::span<const Example> examples, int k,
                                                     const TrainConfig& cfg);

/// Supervised step on a* ++ [</answer>] given prompt ++ cot ++ [<answer>];
/// CoT tokens provide context only, no loss.
StepReport warmstart_sft_step(PolicyModel& model, OptimizerState& opt,
                              std::span<const WarmstartTriple> batch, const TrainConfig& cfg,
                              long step);

}  // namespace cotlab
