// Acceptance suite: one pass/fail line per criterion.
//
// Fast criteria (1-6, 10, 11) run oracle enumerations and identity checks;
// criteria 7-9 train TinyLM models end to end and check the qualitative
// trends, so they take minutes.

#include "cotlab/instances.hpp"
#include "cotlab/logmath.hpp"
#include "cotlab/metrics_io.hpp"
#include "cotlab/oracle.hpp"
#include "cotlab/run.hpp"
#include "cotlab/tasks.hpp"
#include "cotlab/verify.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cotlab;

namespace {

int g_threads = 2;

struct Outcome {
  bool passed = false;
  std::string details;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("cotlab_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

const RewardVariant kPerSampleVariants[] = {
    RewardVariant::Logprob, RewardVariant::AvgLogprob, RewardVariant::Probability,
    RewardVariant::AvgProbability, RewardVariant::BinaryVerifier,
};

/// Instances stay under 500 parameters with CoT horizon 2 and a 4-token
/// (likelihood) or 3-token (binary) emission alphabet. The two-token answer
/// keeps the averaged variants distinct from their plain forms.
TabularInstance acceptance_instance(std::uint64_t seed, RewardVariant variant) {
  TabularInstanceOptions opts;
  if (variant == RewardVariant::BinaryVerifier) {
    opts.n_letters = 1;
    opts.cot_budget = 2;
    opts.answer_len = 1;
    opts.full_budget = opts.cot_budget + opts.answer_len + 2;  // cot + tags + answer
  } else {
    opts.n_letters = 2;
    opts.cot_budget = 2;
    opts.answer_len = 2;
    opts.full_budget = 0;
  }
  opts.answer_decode_budget = 0;  // no greedy decoding in these criteria
  return make_tabular_instance(seed, opts);
}

/// Familywise threshold: the z with the same false-alarm budget as one
/// two-sided 3-sigma test, Bonferroni-split over m coordinates.
double familywise_z(Eigen::Index m) {
  const double alpha = 0.0026997960632602 / static_cast<double>(m);
  double lo = 3.0, hi = 10.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- criteria

Outcome criterion_1_lemma() {
  Outcome out;
  double worst = 0.0;
  Eigen::Index max_params = 0;
  std::string worst_name;
  for (std::uint64_t k = 0; k < 5; ++k) {
    for (RewardVariant variant : kPerSampleVariants) {
      TabularInstance inst = acceptance_instance(101 + k, variant);
      max_params = std::max(max_params, inst.policy->param_count());
      RewardSpec spec;
      spec.variant = variant;
      GradBuffer analytic(inst.policy->param_count());
      enumerate_surrogate_gradient(*inst.policy, inst.example, spec, inst.cot_budget,
                                   inst.full_budget, analytic);
      const Vec fd = finite_difference_grad(
          [&] {
            return enumerate_expected_reward(*inst.policy, inst.example, spec, inst.cot_budget,
                                             inst.full_budget);
          },
          inst.policy->params(), 1e-4);
      const double rel = (fd - analytic.g).norm() / std::max(fd.norm(), 1e-12);
      if (rel > worst) {
        worst = rel;
        worst_name = std::string(to_string(variant)) + "/inst" + std::to_string(k);
      }
    }
  }
  out.passed = worst < 1e-3 && max_params <= 500;
  out.details = "worst rel L2 " + fmt("%.3e", worst) + " (" + worst_name + "), tol 1e-3, " +
                "5 instances x 5 variants, h=1e-4, max " + std::to_string(max_params) + " params";
  return out;
}

Outcome criterion_2_unbiased() {
  Outcome out;
  const int n_steps = 50000;
  double worst_z = 0.0;
  long total_over3 = 0;
  Eigen::Index total_coords = 0;
  std::string worst_name;

  for (std::uint64_t k = 0; k < 5; ++k) {
    for (RewardVariant variant : kPerSampleVariants) {
      TabularInstance inst = acceptance_instance(101 + k, variant);
      const Example batch[] = {inst.example};
      RewardSpec spec;
      spec.variant = variant;
      const Eigen::Index n = inst.policy->param_count();
      GradBuffer exact(n);
      enumerate_surrogate_gradient(*inst.policy, inst.example, spec, inst.cot_budget,
                                   inst.full_budget, exact);

      TrainConfig tc;
      tc.group_size = 4;
      tc.questions_per_step = 1;
      tc.reward = spec;
      tc.seed = 211 + k;
      tc.max_new = inst.cot_budget;
      tc.answer_max_new = std::max(1, inst.full_budget - inst.cot_budget - 2);

      Vec sum = Vec::Zero(n), sumsq = Vec::Zero(n);
      GradBuffer grad(n);
      for (int s = 0; s < n_steps; ++s) {
        grad.reset();
        compute_rl_gradient(*inst.policy, batch, tc, s, nullptr, grad);
        sum += grad.g;
        sumsq += grad.g.array().square().matrix();
      }
      const double m = static_cast<double>(n_steps);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = sum[i] / m;
        const double var = std::max(sumsq[i] / m - mean * mean, 0.0);
        const double se = std::sqrt(var / m);
        const double err = std::abs(mean - exact.g[i]);
        double z;
        if (err < 1e-12) {
          z = 0.0;  // numerically exact coordinate; no meaningful z statistic
        } else if (se == 0.0) {
          z = 1e9;
        } else {
          z = err / se;
        }
        if (z > worst_z) {
          worst_z = z;
          worst_name = std::string(to_string(variant)) + "/inst" + std::to_string(k);
        }
        if (z > 3.0) ++total_over3;
        ++total_coords;
      }
    }
  }
  const double limit = familywise_z(total_coords);
  const double expected_over3 = 0.0027 * static_cast<double>(total_coords);
  out.passed = worst_z < limit;
  out.details = "50k,G=4: max |z| " + fmt("%.2f", worst_z) + " (" + worst_name + ") vs 3-sigma " +
                fmt("familywise limit %.2f over %.0f coords; ", limit,
                    static_cast<double>(total_coords)) +
                std::to_string(total_over3) + " coords above 3 (" + fmt("%.1f", expected_over3) +
                " expected by chance)";
  return out;
}

Outcome criterion_3_match_identity() {
  Outcome out;
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    TabularInstanceOptions opts;
    opts.n_letters = 2;
    opts.cot_budget = 1;
    opts.answer_len = k == 2 ? 2 : 1;
    opts.full_budget = 5;
    TabularInstance inst = make_tabular_instance(301 + k, opts);
    const TokenSeq rendered = render_prompt(inst.example);
    TokenSeq expected(inst.example.answer.begin(), inst.example.answer.end());
    expected.push_back(ANS_CLOSE);

    for (const auto& leaf :
         enumerate_emissions(*inst.policy, rendered, inst.cot_budget, ANS_OPEN)) {
      Rollout roll;
      const size_t cot_len = leaf.truncated ? leaf.tokens.size() : leaf.tokens.size() - 1;
      roll.cot.assign(leaf.tokens.begin(), leaf.tokens.begin() + static_cast<long>(cot_len));
      const TokenSeq prefix = cot_prefix_for_scoring(roll, rendered);
      const AnswerScore score = make_answer_score(*inst.policy, prefix, inst.example.answer);
      double match = 0.0;
      const int budget = static_cast<int>(expected.size());
      for (const auto& a : enumerate_emissions(*inst.policy, prefix, budget, ANS_CLOSE)) {
        if (!a.truncated && a.tokens == expected) match += std::exp(a.logprob);
      }
      worst = std::max(worst, std::abs(probability_reward(score) - match));
      ++checked;
    }
  }
  out.passed = worst < 1e-12;
  out.details = fmt("max |prob_reward - enumerated match| %.2e over %.0f CoT leaves, tol 1e-12",
                    worst, static_cast<double>(checked));
  return out;
}

Outcome criterion_4_jensen() {
  Outcome out;
  CounterRng rng(StreamKey(401).with("jensen"));
  double min_gap = 1e300;
  bool ok = true;
  for (int g = 0; g < 10000 && ok; ++g) {
    const size_t size = 2 + rng.next_u64() % 7;
    std::vector<AnswerScore> scores(size);
    double mean = 0.0;
    for (auto& s : scores) {
      s.sum_logprob = -8.0 * rng.uniform();
      s.answer_len = 1;
      mean += s.sum_logprob;
    }
    mean /= static_cast<double>(size);
    const double jepo = jepo_group_reward(scores);
    min_gap = std::min(min_gap, jepo - mean);
    ok = jepo >= mean - 1e-12;
  }
  std::vector<AnswerScore> flat(4);
  for (auto& s : flat) {
    s.sum_logprob = -2.5;
    s.answer_len = 1;
  }
  const bool eq = std::abs(jepo_group_reward(flat) - (-2.5)) < 1e-12;
  out.passed = ok && eq;
  out.details = fmt("min(jepo - mean logprob) %.3e over 10k groups; ", min_gap) +
                std::string("equality for constant groups: ") + (eq ? "exact" : "VIOLATED");
  return out;
}

Outcome criterion_5_mc_monotone() {
  Outcome out;
  double worst_gap = 0.0;
  std::string shape;
  for (int budget : {1, 2}) {
    TabularInstanceOptions opts;
    opts.n_letters = 1;
    opts.cot_budget = budget;
    TabularInstance inst = make_tabular_instance(501 + static_cast<std::uint64_t>(budget), opts);
    std::vector<double> lp, sums;
    cot_leaf_scores(*inst.policy, inst.example, inst.cot_budget, lp, sums);
    const double e1 = enumerate_expected_logprob_mc(lp, sums, 1);
    const double e4 = enumerate_expected_logprob_mc(lp, sums, 4);
    const double e32 = enumerate_expected_logprob_mc(lp, sums, 32);
    const double truth = enumerate_true_log_marginal(lp, sums);
    worst_gap = std::max({worst_gap, e1 - e4, e4 - e32, e32 - truth});
    shape += std::to_string(lp.size()) + "-leaf: " +
             fmt("E[MC1]=%.4f E[MC4]=%.4f ", e1, e4) + fmt("E[MC32]=%.4f true=%.4f; ", e32, truth);
  }
  out.passed = worst_gap < 1e-9;
  out.details = shape + fmt("worst reversed gap %.2e (tol 1e-9)", worst_gap);
  return out;
}

Outcome criterion_6_rloo_algebra() {
  Outcome out;
  CounterRng rng(StreamKey(601).with("rloo"));
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const size_t g = 2 + rng.next_u64() % 7;
    std::vector<double> rewards(g);
    for (double& r : rewards) r = 200.0 * rng.uniform() - 100.0;
    const auto adv = rloo_advantages(rewards);
    double total = 0.0;
    for (double a : adv) total += a;
    worst_sum = std::max(worst_sum, std::abs(total));

    const double c = 40.0 * rng.uniform() - 20.0;
    std::vector<double> shifted = rewards;
    for (double& r : shifted) r += c;
    const auto adv2 = rloo_advantages(shifted);
    for (size_t i = 0; i < g; ++i) worst_shift = std::max(worst_shift, std::abs(adv[i] - adv2[i]));
  }

  // one optimizer step under a constant reward shift
  TabularInstance a = acceptance_instance(611, RewardVariant::BinaryVerifier);
  TabularInstance b = acceptance_instance(611, RewardVariant::BinaryVerifier);
  TrainConfig tc;
  tc.group_size = 4;
  tc.questions_per_step = 1;
  tc.reward.variant = RewardVariant::BinaryVerifier;
  tc.seed = 613;
  tc.max_new = a.cot_budget;
  tc.answer_max_new = std::max(1, a.full_budget - a.cot_budget - 2);
  tc.warmup_steps = 0;
  tc.learning_rate = 1e-3;
  tc.total_steps = 1;
  TrainConfig shifted = tc;
  shifted.reward.binary_values = {100.0 + 31.5, 10.0 + 31.5, 31.5};
  OptimizerState oa, ob;
  oa.init(a.policy->param_count());
  ob.init(b.policy->param_count());
  const Example batch_a[] = {a.example};
  const Example batch_b[] = {b.example};
  rl_train_step(*a.policy, oa, batch_a, tc, 0);
  rl_train_step(*b.policy, ob, batch_b, shifted, 0);
  const double update_diff = (a.policy->params() - b.policy->params()).lpNorm<Eigen::Infinity>();

  out.passed = worst_sum < 1e-9 && worst_shift < 1e-9 && update_diff < 1e-9;
  out.details = fmt("10k groups: max |sum adv| %.2e, max shift effect %.2e; ", worst_sum,
                    worst_shift) +
                fmt("one-step update diff under +31.5 shift %.2e (tol 1e-9)", update_diff);
  return out;
}

// ------------------------------------------------------------- trend runs

/// Verifiable trend runs train from scratch (an "untrained checkpoint"
/// baseline is part of the criterion). ModSum at k=3, m=10 needs the wider
/// TinyLM to get past digit marginals within the step budget.
RunConfig modsum_config(RewardVariant variant, bool sft, std::uint64_t seed, int total_steps) {
  RunConfig cfg;
  cfg.algorithm = sft ? Algorithm::Sft : Algorithm::Rl;
  cfg.model.embed_dim = 64;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.ff_dim = 256;
  cfg.model.context_len = 64;
  TaskSpec task;
  task.kind = TaskKind::ModSum;
  task.size = 2222;  // 10% val leaves ~2k train examples
  task.seed = 7;
  task.operands = 3;
  task.modulus = 10;
  cfg.data.task = task;
  cfg.data.val_fraction = 0.1;
  cfg.train.reward.variant = variant;
  cfg.train.group_size = 8;
  cfg.train.questions_per_step = 8;
  cfg.train.learning_rate = 1e-3;
  cfg.train.warmup_steps = 20;
  cfg.train.total_steps = total_steps;
  cfg.train.eval_every = total_steps;  // evaluate at step 0 and the end
  cfg.train.seed = seed;
  cfg.train.max_new = 16;
  cfg.train.answer_max_new = 8;
  cfg.eval.n_examples = 200;
  return cfg;
}

/// Non-verifiable trend runs start from a per-seed base checkpoint trained
/// without CoTs (the pretrained-model stand-in; collapse dynamics need a
/// starting point that answers well without a CoT).
RunConfig longtransform_config(RewardVariant variant, bool sft, std::uint64_t seed,
                               int total_steps) {
  RunConfig cfg;
  cfg.algorithm = sft ? Algorithm::Sft : Algorithm::Rl;
  cfg.model.embed_dim = 32;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.ff_dim = 128;
  cfg.model.context_len = 192;
  TaskSpec task;
  task.kind = TaskKind::LongTransform;
  task.size = 1000;
  task.seed = 11;
  task.multiplier = 4;
  cfg.data.task = task;
  cfg.data.val_fraction = 0.1;
  cfg.train.reward.variant = variant;
  cfg.train.group_size = 8;
  cfg.train.questions_per_step = 8;
  cfg.train.learning_rate = 1e-3;
  cfg.train.warmup_steps = 20;
  cfg.train.total_steps = total_steps;
  cfg.train.eval_every = 40;  // matches the length-rate calibration window
  cfg.train.seed = seed;
  cfg.train.max_new = 64;
  cfg.train.answer_max_new = 40;
  cfg.eval.n_examples = 96;
  return cfg;
}

/// SFT base for the non-verifiable criteria, cached per seed.
fs::path lt_base_checkpoint(std::uint64_t seed) {
  const fs::path dir = work_dir() / ("c8_base_s" + std::to_string(seed));
  if (!fs::exists(dir / "ckpt_final" / "manifest.json")) {
    std::cerr << "  [run] base s" << seed << "..." << std::flush;
    // stopped well before convergence: the base answers from the prompt but
    // still emits sizable CoTs, leaving room for the collapse to show
    RunConfig cfg = longtransform_config(RewardVariant::Logprob, true, seed, 250);
    cfg.train.eval_every = 250;
    run_training(cfg, dir, std::nullopt, g_threads);
    std::cerr << " done\n";
  }
  return dir / "ckpt_final";
}

struct RunMetrics {
  std::vector<MetricRecord> evals;
  std::vector<json> train_reports;
};

RunMetrics read_metrics(const fs::path& run_dir) {
  RunMetrics out;
  std::ifstream in(run_dir / "metrics.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json obj = json::parse(line);
    if (obj.value("kind", "") == "eval") {
      out.evals.push_back(metric_record_from_json(obj));
    } else {
      out.train_reports.push_back(obj);
    }
  }
  return out;
}

RunMetrics run_and_read(const RunConfig& cfg, const std::string& tag) {
  const fs::path dir = work_dir() / tag;
  if (!fs::exists(dir / "metrics.jsonl")) {
    std::cerr << "  [run] " << tag << "..." << std::flush;
    run_training(cfg, dir, std::nullopt, g_threads);
    std::cerr << " done\n";
  }
  return read_metrics(dir);
}

int g_steps_verifiable = 600;
int g_steps_nonverifiable = 500;

/// Base checkpoint for the verifiable runs (the pretrained stand-in),
/// cached per seed.
fs::path modsum_base_checkpoint(std::uint64_t seed) {
  const fs::path dir = work_dir() / ("c7_base_s" + std::to_string(seed));
  if (!fs::exists(dir / "ckpt_final" / "manifest.json")) {
    std::cerr << "  [run] c7 base s" << seed << "..." << std::flush;
    RunConfig cfg = modsum_config(RewardVariant::Logprob, true, seed, 1500);
    cfg.train.eval_every = 1500;
    run_training(cfg, dir, std::nullopt, g_threads);
    std::cerr << " done\n";
  }
  return dir / "ckpt_final";
}

Outcome criterion_7_verifiable_trend() {
  Outcome out;
  const std::uint64_t seeds[] = {1, 2, 3};
  const int steps = g_steps_verifiable;

  struct VariantRun {
    RewardVariant variant;
    const char* name;
  };
  const VariantRun variants[] = {
      {RewardVariant::BinaryVerifier, "binary"},   {RewardVariant::Probability, "prob"},
      {RewardVariant::AvgProbability, "avgprob"},  {RewardVariant::Logprob, "logprob"},
      {RewardVariant::AvgLogprob, "avglogprob"},   {RewardVariant::Jepo, "jepo"},
  };

  std::ostringstream detail;
  bool ok = true;

  // the untrained-checkpoint baseline
  double untrained_mean = 0.0;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = modsum_config(RewardVariant::Logprob, false, seed, steps);
    auto vocab = std::make_shared<Vocab>(builtin_vocab());
    TinyLM fresh(vocab, cfg.model, cfg.train.seed);
    auto [train, val] = prepare_data(cfg, *vocab);
    const auto subset = eval_subset(val, train, cfg.eval.n_examples, cfg.train.seed);
    EvalConfig ec;
    ec.cot_max_new = cfg.train.max_new;
    ec.answer_max_new = cfg.train.answer_max_new;
    ec.seed = cfg.train.seed;
    ec.threads = g_threads;
    untrained_mean += evaluate(fresh, subset, ec, 0).greedy_success;
  }
  untrained_mean /= 3.0;

  std::map<std::string, double> success_mean, perplexity_mean;
  for (const auto& vr : variants) {
    double succ = 0.0, perp = 0.0;
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = modsum_config(vr.variant, false, seed, steps);
      cfg.init_checkpoint = modsum_base_checkpoint(seed).string();
      cfg.train.reward.kl_coeff = 0.001;  // the verifiable-domain protocol
      const RunMetrics m =
          run_and_read(cfg, std::string("c7_") + vr.name + "_s" + std::to_string(seed));
      succ += m.evals.back().greedy_success;
      perp += m.evals.back().perplexity;
    }
    success_mean[vr.name] = succ / 3.0;
    perplexity_mean[vr.name] = perp / 3.0;
  }
  double sft_perp = 0.0;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = modsum_config(RewardVariant::Logprob, true, seed, steps);
    cfg.init_checkpoint = modsum_base_checkpoint(seed).string();
    const RunMetrics m = run_and_read(cfg, "c7_sft_s" + std::to_string(seed));
    sft_perp += m.evals.back().perplexity;
  }
  sft_perp /= 3.0;

  detail << fmt("untrained greedy %.3f; ", untrained_mean);
  for (const auto& vr : variants) {
    const double lift_floor = std::max(5.0 * untrained_mean, 0.05);
    const bool lifted = success_mean[vr.name] >= lift_floor;
    ok = ok && lifted;
    detail << vr.name << " " << fmt("%.3f", success_mean[vr.name]) << (lifted ? " ok; " : " LOW; ");
  }
  const bool logprob_vs_sft = perplexity_mean["logprob"] <= 1.3 * sft_perp;
  const bool binary_vs_logprob = perplexity_mean["binary"] >= 2.0 * perplexity_mean["logprob"];
  ok = ok && logprob_vs_sft && binary_vs_logprob;
  detail << fmt("perplexity: logprob %.2f vs sft %.2f (need <=1.3x)", perplexity_mean["logprob"],
                sft_perp)
         << (logprob_vs_sft ? "; " : " FAIL; ");
  detail << fmt("binary %.2f vs logprob %.2f (need >=2x)", perplexity_mean["binary"],
                perplexity_mean["logprob"])
         << (binary_vs_logprob ? "" : " FAIL");

  out.passed = ok;
  out.details = detail.str();
  return out;
}

struct NonVerifiableSummary {
  double step0_len = 0.0;
  double final_len = 0.0;
  double lp_improvement_prob = 0.0;
  double lp_improvement_logprob = 0.0;
  double final_lp_logprob = 0.0;
  double final_lp_sft = 0.0;
  bool collapse_held = false;
};

NonVerifiableSummary nonverifiable_seed_summary(std::uint64_t seed, int steps) {
  NonVerifiableSummary s;
  const std::string base = lt_base_checkpoint(seed).string();
  RunConfig lp_cfg = longtransform_config(RewardVariant::Logprob, false, seed, steps);
  lp_cfg.init_checkpoint = base;
  RunConfig pr_cfg = longtransform_config(RewardVariant::Probability, false, seed, steps);
  pr_cfg.init_checkpoint = base;
  RunConfig sft_cfg = longtransform_config(RewardVariant::Logprob, true, seed, steps);
  sft_cfg.init_checkpoint = base;
  const RunMetrics lp = run_and_read(lp_cfg, "c8_logprob_s" + std::to_string(seed));
  const RunMetrics pr = run_and_read(pr_cfg, "c8_prob_s" + std::to_string(seed));
  const RunMetrics sft = run_and_read(sft_cfg, "c8_sft_s" + std::to_string(seed));

  s.step0_len = lp.evals.front().mean_cot_length;
  s.final_len = lp.evals.back().mean_cot_length;
  s.lp_improvement_logprob =
      lp.evals.back().per_answer_logprob_mc1 - lp.evals.front().per_answer_logprob_mc1;
  s.lp_improvement_prob =
      pr.evals.back().per_answer_logprob_mc1 - pr.evals.front().per_answer_logprob_mc1;
  s.final_lp_logprob = lp.evals.back().per_answer_logprob_mc1;
  s.final_lp_sft = sft.evals.back().per_answer_logprob_mc1;

  const long cutoff = 2L * steps / 3L;
  s.collapse_held = true;
  for (const auto& rec : lp.evals) {
    if (rec.step >= cutoff && rec.mean_cot_length >= 0.25 * s.step0_len) s.collapse_held = false;
  }
  return s;
}

Outcome criterion_8_nonverifiable_trend() {
  Outcome out;
  const int steps = g_steps_nonverifiable;
  std::ostringstream detail;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const NonVerifiableSummary s = nonverifiable_seed_summary(seed, steps);
    const bool flatline = s.lp_improvement_prob < 0.10 * s.lp_improvement_logprob;
    // "on par with SFT": no worse than 5% below; beating SFT is not a failure
    const bool matches_sft =
        s.final_lp_logprob >= s.final_lp_sft - 0.05 * std::abs(s.final_lp_sft);
    ok = ok && flatline && matches_sft && s.collapse_held;
    detail << "s" << seed << ": d(prob) " << fmt("%.3f", s.lp_improvement_prob) << " vs d(logprob) "
           << fmt("%.3f", s.lp_improvement_logprob) << (flatline ? " ok" : " FAIL") << ", final lp "
           << fmt("%.3f vs sft %.3f", s.final_lp_logprob, s.final_lp_sft)
           << (matches_sft ? " ok" : " FAIL") << ", len " << fmt("%.1f -> %.1f", s.step0_len, s.final_len)
           << (s.collapse_held ? " collapsed; " : " NOT collapsed; ");
  }
  out.passed = ok;
  out.details = detail.str();
  return out;
}

Outcome criterion_9_length_penalty() {
  Outcome out;
  const int steps = g_steps_nonverifiable;
  std::ostringstream detail;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    // calibration from criterion 8's logprob run: validation reward increase
    // against CoT-length decrease over the initial drop (records every 40
    // steps; if the reward dips first, extend to its recovery point)
    const std::string base = lt_base_checkpoint(seed).string();
    RunConfig base_cfg = longtransform_config(RewardVariant::Logprob, false, seed, steps);
    base_cfg.init_checkpoint = base;
    const RunMetrics ref = run_and_read(base_cfg, "c8_logprob_s" + std::to_string(seed));

    const double l0 = ref.evals.front().mean_cot_length;
    const double reward0 = ref.evals.front().mean_answer_sum_logprob;
    double delta_reward = 0.0, delta_len = 0.0;
    for (size_t i = 1; i < ref.evals.size(); ++i) {
      delta_reward = ref.evals[i].mean_answer_sum_logprob - reward0;
      delta_len = l0 - ref.evals[i].mean_cot_length;
      if (delta_reward > 0.0) break;  // first window with a reward increase
    }
    const double rate = (delta_reward > 0.0 && delta_len > 0.0)
                            ? calibrate_length_rate(delta_reward, delta_len)
                            : 0.0;

    RunConfig cfg = longtransform_config(RewardVariant::Logprob, false, seed, steps);
    cfg.init_checkpoint = base;
    LengthPenalty pen;
    pen.rate = rate;
    pen.threshold = l0;
    cfg.train.reward.length_penalty = pen;
    const RunMetrics m = run_and_read(cfg, "c9_penalty_s" + std::to_string(seed));
    const double final_len = m.evals.back().mean_cot_length;
    const bool held = final_len >= 0.6 * l0;
    ok = ok && held;
    detail << "s" << seed << ": r=" << fmt("%.4f", rate) << " l0=" << fmt("%.1f", l0) << " final len "
           << fmt("%.1f (need >= %.1f)", final_len, 0.6 * l0) << (held ? " ok; " : " FAIL; ");
  }
  out.passed = ok;
  out.details = detail.str();
  return out;
}

/// Two-question tabular policy pair where each question's reward falls with
/// CoT length while the longer-CoT question scores higher overall.
Outcome criterion_10_correlation() {
  Outcome out;
  std::ostringstream detail;

  // direct Pearson on the Simpson fixture
  const std::vector<double> xs{1, 2, 3, 4};
  const std::vector<double> ys{1, 0, 3, 2};
  const double global = pearson(xs, ys);
  // hand-rolled second route
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < 4; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    syy += ys[i] * ys[i];
    sxy += xs[i] * ys[i];
  }
  const double direct =
      (4 * sxy - sx * sy) / std::sqrt((4 * sxx - sx * sx) * (4 * syy - sy * sy));
  const double local1 = pearson(std::vector<double>{1, 2}, std::vector<double>{1, 0});
  const double local2 = pearson(std::vector<double>{3, 4}, std::vector<double>{3, 2});
  const double mean_local = 0.5 * (local1 + local2);
  bool ok = std::abs(global - direct) < 1e-9 && global > 0.0 && mean_local < 0.0;
  detail << fmt("fixture: global %.4f (direct %.4f), mean local %.1f; ", global, direct, mean_local);

  // full-pipeline Simpson pattern on a constructed two-question policy
  {
    auto vocab = std::make_shared<Vocab>(std::vector<std::string>{"x", "y"});
    const TokenId x = vocab->id_of("x"), y = vocab->id_of("y");
    Example q1{"q1", {x}, {x}};
    Example q2{"q2", {y}, {x}};
    const TokenSeq r1 = render_prompt(q1), r2 = render_prompt(q2);

    TabularPolicyBuilder b(vocab, {x, y, ANS_OPEN, ANS_CLOSE});
    const TokenSeq target{x, ANS_CLOSE};
    for (const TokenSeq& root : {r1, r2}) {
      b.add_sampling_tree(root, 4, ANS_OPEN);
      b.add_scoring_paths(root, 4, ANS_OPEN, target);
    }
    auto policy = b.build();
    auto row = [&](TokenSpan ctx) { return policy->row_of(ctx); };
    auto set = [&](TokenSpan ctx, double ao, double ac, double lx, double ly) {
      const Eigen::Index r = row(ctx);
      policy->params()[r * 4 + 0] = ao;
      policy->params()[r * 4 + 1] = ac;
      policy->params()[r * 4 + 2] = lx;
      policy->params()[r * 4 + 3] = ly;
    };
    // q1: CoT length 0 or 1 (about half each); reward falls with length
    set(r1, 0, -800, 0, -800);                       // <answer> or x, even odds
    set(concat(r1, x), 800, -800, -800, -800);       // then close the think span
    // q2: two forced tokens, then length 2 or 3
    set(r2, -800, -800, 800, -800);
    set(concat(r2, x), -800, -800, 800, -800);
    TokenSeq r2xx = concat(r2, x);
    r2xx.push_back(x);
    set(r2xx, 0, -800, 0, -800);                     // length 2 or 3, even odds
    set(concat(r2xx, x), 800, -800, -800, -800);

    // answer heads: y(len) decreasing within each question, q2 higher overall
    auto set_answer = [&](const TokenSeq& root, const TokenSeq& cot, double sum_logprob) {
      Rollout roll;
      roll.cot = cot;
      TokenSeq prefix = cot_prefix_for_scoring(roll, root);
      // give the answer token the requested logprob, terminator certain
      const double p = std::exp(sum_logprob);
      const double lx = std::log(p / (1.0 - p));
      set(prefix, -800, -800, lx, 0.0);  // sigmoid-style two-way split
      set(concat(prefix, x), -800, 800, -800, -800);
    };
    set_answer(r1, {}, std::log(0.35));
    set_answer(r1, {x}, std::log(0.12));
    set_answer(r2, {x, x}, std::log(0.90));
    set_answer(r2, {x, x, x}, std::log(0.70));

    EvalConfig ec;
    ec.cot_max_new = 4;
    ec.answer_max_new = 2;
    ec.seed = 17;
    const Example questions[] = {q1, q2};
    const CorrelationReport rep =
        correlation_analysis(*policy, questions, 64, CorrelationReward::Logprob, ec);
    const bool simpson = rep.global_r > 0.0 && rep.mean_local_r < 0.0 && rep.n_skipped == 0;
    ok = ok && simpson;
    detail << fmt("pipeline: global %.3f, mean local %.3f; ", rep.global_r, rep.mean_local_r);
  }

  // the step-0 checkpoints of the LongTransform runs (the per-seed base
  // models, trained without CoTs): local correlation is negative
  int negative = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto vocab = std::make_shared<Vocab>(builtin_vocab());
    RunConfig cfg = longtransform_config(RewardVariant::Logprob, false, seed, 1);
    LoadedCheckpoint base = load_checkpoint(lt_base_checkpoint(seed));
    auto [train, val] = prepare_data(cfg, *vocab);
    const std::vector<Example> questions = eval_subset(val, train, 20, seed);
    EvalConfig ec;
    ec.cot_max_new = cfg.train.max_new;
    ec.answer_max_new = cfg.train.answer_max_new;
    ec.seed = seed;
    ec.threads = g_threads;
    const CorrelationReport rep =
        correlation_analysis(*base.model, questions, 200, CorrelationReward::Logprob, ec);
    if (rep.mean_local_r < 0.0) ++negative;
    detail << "s" << seed << fmt(" local %.3f; ", rep.mean_local_r);
  }
  ok = ok && negative >= 2;
  detail << negative << "/3 seeds negative (need >=2)";

  out.passed = ok;
  out.details = detail.str();
  return out;
}

Outcome criterion_11_identities() {
  Outcome out;
  std::ostringstream detail;
  bool ok = true;

  // logprob == ln(probability) on shared scores
  {
    CounterRng rng(StreamKey(1101).with("scores"));
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      AnswerScore s;
      const size_t len = 1 + rng.next_u64() % 6;
      s.answer_len = static_cast<Eigen::Index>(len);
      for (size_t t = 0; t <= len; ++t) {
        s.per_token_logprobs.push_back(-4.0 * rng.uniform());
        s.sum_logprob += s.per_token_logprobs.back();
      }
      worst = std::max(worst, std::abs(logprob_reward(s) - std::log(probability_reward(s))));
    }
    ok = ok && worst < 1e-12;
    detail << fmt("ln(prob) identity worst |diff| %.2e; ", worst);
  }

  // determinism + resume equivalence on a 200-step run
  RunConfig cfg;
  cfg.algorithm = Algorithm::Rl;
  cfg.model.embed_dim = 16;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.ff_dim = 32;
  cfg.model.context_len = 48;
  TaskSpec task;
  task.kind = TaskKind::ModSum;
  task.size = 120;
  task.seed = 3;
  cfg.data.task = task;
  cfg.train.reward.variant = RewardVariant::Logprob;
  cfg.train.group_size = 4;
  cfg.train.questions_per_step = 4;
  cfg.train.total_steps = 200;
  cfg.train.eval_every = 50;
  cfg.train.seed = 19;
  cfg.train.max_new = 8;
  cfg.train.answer_max_new = 4;
  cfg.eval.n_examples = 24;

  const fs::path dir_a = work_dir() / "c11_run_a";
  const fs::path dir_b = work_dir() / "c11_run_b";
  const fs::path dir_r = work_dir() / "c11_resume";
  run_training(cfg, dir_a, std::nullopt, 1);
  run_training(cfg, dir_b, std::nullopt, 2);  // different thread count, same bits

  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  const std::string metrics_a = slurp(dir_a / "metrics.jsonl");
  const bool deterministic = !metrics_a.empty() && metrics_a == slurp(dir_b / "metrics.jsonl") &&
                             slurp(dir_a / "ckpt_final" / "params.bin") ==
                                 slurp(dir_b / "ckpt_final" / "params.bin");
  ok = ok && deterministic;
  detail << "determinism across runs/threads: " << (deterministic ? "bitwise" : "BROKEN") << "; ";

  run_training(cfg, dir_r, dir_a / "ckpt_step_000100", 1);
  // the resumed metrics must equal the tail of the full run
  std::string line;
  std::vector<std::string> tail;
  {
    std::istringstream full(metrics_a);
    while (std::getline(full, line)) {
      if (line.empty()) continue;
      if (json::parse(line).at("step").get<long>() >= 100) tail.push_back(line);
    }
  }
  std::vector<std::string> resumed;
  {
    std::ifstream f(dir_r / "metrics.jsonl");
    while (std::getline(f, line)) {
      if (!line.empty()) resumed.push_back(line);
    }
  }
  const bool resume_ok = tail == resumed &&
                         slurp(dir_a / "ckpt_final" / "params.bin") ==
                             slurp(dir_r / "ckpt_final" / "params.bin");
  ok = ok && resume_ok;
  detail << "resume tail (" << resumed.size() << " records): " << (resume_ok ? "identical" : "DIVERGED")
         << "; ";

  // perplexity identity over every emitted record
  double worst_ppl = 0.0;
  long n_records = 0;
  for (const fs::path& dir : {dir_a, dir_b, dir_r}) {
    const RunMetrics m = read_metrics(dir);
    for (const auto& rec : m.evals) {
      worst_ppl = std::max(worst_ppl,
                           std::abs(rec.perplexity - std::exp(-rec.per_answer_logprob_mc1)));
      ++n_records;
    }
  }
  ok = ok && worst_ppl < 1e-9 && n_records > 0;
  detail << "perplexity identity over " << n_records << " records, worst " << fmt("%.2e", worst_ppl);

  out.passed = ok;
  out.details = detail.str();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string criteria = "1,2,3,4,5,6,7,8,9,10,11";
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criteria") == 0 && i + 1 < argc) criteria = argv[++i];
    if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc) g_threads = std::atoi(argv[++i]);
    if (std::strcmp(argv[i], "--steps-verifiable") == 0 && i + 1 < argc) {
      g_steps_verifiable = std::atoi(argv[++i]);
    }
    if (std::strcmp(argv[i], "--steps-nonverifiable") == 0 && i + 1 < argc) {
      g_steps_nonverifiable = std::atoi(argv[++i]);
    }
  }

  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "lemma equivalence (finite differences vs surrogate gradient)", criterion_1_lemma},
      {2, "estimator unbiasedness (50k stochastic gradients, RLOO G=4)", criterion_2_unbiased},
      {3, "match identity (probability reward = enumerated exact-match rate)", criterion_3_match_identity},
      {4, "jensen property of the group log-mean-exp reward", criterion_4_jensen},
      {5, "MC monotonicity (E[MC1] <= E[MC4] <= E[MC32] <= true)", criterion_5_mc_monotone},
      {6, "RLOO algebra (zero-sum, shift invariance, bitwise updates)", criterion_6_rloo_algebra},
      {7, "verifiable trend (success lift; perplexity ordering)", criterion_7_verifiable_trend},
      {8, "non-verifiable trend (flatline, SFT match, CoT collapse)", criterion_8_nonverifiable_trend},
      {9, "length-penalty intervention maintains CoT length", criterion_9_length_penalty},
      {10, "correlation methodology (Simpson fixture; step-0 local)", criterion_10_correlation},
      {11, "identities, determinism and resume equivalence", criterion_11_identities},
  };

  bool all_ok = true;
  for (const auto& e : entries) {
    const std::string token = std::to_string(e.id);
    bool selected = false;
    std::stringstream ss(criteria);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == token) selected = true;
    }
    if (!selected) continue;
    Outcome result;
    try {
      result = e.fn();
    } catch (const std::exception& ex) {
      result.passed = false;
      result.details = std::string("exception: ") + ex.what();
    }
    all_ok = all_ok && result.passed;
    std::cout << (result.passed ? "[PASS]" : "[FAIL]") << " criterion " << e.id << ": " << e.name
              << " | " << result.details << "\n";
  }
  return all_ok ? 0 : 1;
}
