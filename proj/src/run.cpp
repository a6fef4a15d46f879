#include "cotlab/run.hpp"

#include "cotlab/metrics_io.hpp"
#include "cotlab/tasks.hpp"

#include <fstream>

namespace cotlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string step_dir_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_step_%06ld", step);
  return buf;
}

std::vector<Example> pick_batch(const std::vector<Example>& train, int n, std::uint64_t seed,
                                long step) {
  CounterRng rng(StreamKey(seed).with("batch").with(static_cast<std::uint64_t>(step)));
  std::vector<Example> batch;
  batch.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    batch.push_back(train[rng.next_u64() % train.size()]);
  }
  return batch;
}

}  // namespace

std::pair<std::vector<Example>, std::vector<Example>> prepare_data(const RunConfig& cfg,
                                                                   const Vocab& vocab) {
  std::vector<Example> all;
  if (cfg.data.path) {
    all = load_jsonl(*cfg.data.path, vocab);
  } else {
    all = generate_task(*cfg.data.task, vocab);
  }
  if (all.empty()) throw std::runtime_error("dataset is empty");
  return split(all, cfg.data.val_fraction, cfg.train.seed);
}

std::vector<Example> eval_subset(const std::vector<Example>& val, const std::vector<Example>& train,
                                 int n, std::uint64_t seed) {
  const std::vector<Example>& pool = val.empty() ? train : val;
  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(StreamKey(seed).with("evalset"));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.next_u64() % i]);
  }
  std::vector<Example> out;
  const size_t take = std::min(pool.size(), static_cast<size_t>(n));
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(pool[order[i]]);
  return out;
}

RunResult run_training(const RunConfig& cfg, const fs::path& out_dir,
                       const std::optional<fs::path>& resume, int threads) {
  auto vocab = std::make_shared<Vocab>(builtin_vocab());
  auto [train, val] = prepare_data(cfg, *vocab);

  fs::create_directories(out_dir);
  {
    std::ofstream snap(out_dir / "config.snapshot.json", std::ios::trunc);
    snap << run_config_to_json(cfg).dump(2) << "\n";
  }

  TrainConfig tc = cfg.train;
  tc.threads = threads;

  std::unique_ptr<TinyLM> model;
  OptimizerState opt;
  long start_step = 0;
  std::unique_ptr<TinyLM> ref;  // KL reference: the step-0 model

  if (resume) {
    LoadedCheckpoint loaded = load_checkpoint(*resume);
    if (!loaded.opt) {
      throw std::runtime_error("checkpoint " + resume->string() + " has no training state (opt.bin)");
    }
    model = std::move(loaded.model);
    opt = std::move(*loaded.opt);
    start_step = loaded.meta.step;
    if (tc.reward.kl_coeff > 0.0 && cfg.algorithm == Algorithm::Rl) {
      const fs::path initial = resume->parent_path() / "ckpt_initial";
      if (!fs::exists(initial / "manifest.json")) {
        throw std::runtime_error("KL run resume needs ckpt_initial next to " + resume->string());
      }
      ref = std::move(load_checkpoint(initial).model);
    }
  } else {
    if (cfg.init_checkpoint) {
      LoadedCheckpoint base = load_checkpoint(*cfg.init_checkpoint);
      const TinyLmConfig& bc = base.model->config();
      if (bc.embed_dim != cfg.model.embed_dim || bc.n_layers != cfg.model.n_layers ||
          bc.n_heads != cfg.model.n_heads || bc.ff_dim != cfg.model.ff_dim ||
          bc.context_len != cfg.model.context_len) {
        throw std::runtime_error("init_ckpt architecture does not match the configured model");
      }
      model = std::move(base.model);
    } else {
      model = std::make_unique<TinyLM>(vocab, cfg.model, tc.seed);
    }
    opt.init(model->param_count());
    if (tc.reward.kl_coeff > 0.0 && cfg.algorithm == Algorithm::Rl) {
      if (cfg.init_checkpoint) {
        ref = std::move(load_checkpoint(*cfg.init_checkpoint).model);
      } else {
        ref = std::make_unique<TinyLM>(vocab, cfg.model, tc.seed);
      }
    }
  }

  const CheckpointMeta initial_meta{tc.seed, start_step};
  if (!resume) {
    save_checkpoint(out_dir / "ckpt_initial", *model, initial_meta, &opt);
  }

  const std::vector<Example> eval_examples =
      eval_subset(val, train, cfg.eval.n_examples, tc.seed);
  EvalConfig ec;
  ec.cot_max_new = tc.max_new;
  ec.answer_max_new = tc.answer_max_new;
  ec.mc_extra_n = cfg.eval.mc_extra_n;
  ec.seed = tc.seed;
  ec.threads = threads;

  const fs::path metrics_path = out_dir / "metrics.jsonl";
  RunResult result;

  for (long step = start_step; step <= tc.total_steps; ++step) {
    const bool eval_now = step == tc.total_steps || step % tc.eval_every == 0;
    if (eval_now) {
      result.last_eval = evaluate(*model, eval_examples, ec, step);
      append_jsonl_line(metrics_path, to_json(result.last_eval));
      save_checkpoint(out_dir / step_dir_name(step), *model, {tc.seed, step}, &opt);
    }
    if (step == tc.total_steps) break;

    const std::vector<Example> batch = pick_batch(train, tc.questions_per_step, tc.seed, step);
    StepReport report;
    if (cfg.algorithm == Algorithm::Sft) {
      report = sft_step(*model, opt, batch, tc, step);
    } else {
      report = rl_train_step(*model, opt, batch, tc, step, ref.get());
    }
    append_jsonl_line(metrics_path, to_json(report));
    ++result.steps_run;
  }

  result.final_checkpoint = out_dir / "ckpt_final";
  save_checkpoint(result.final_checkpoint, *model, {tc.seed, tc.total_steps}, &opt);
  return result;
}

}  // namespace cotlab
