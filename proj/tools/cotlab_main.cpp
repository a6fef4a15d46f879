#include "cotlab/checkpoint.hpp"
#include "cotlab/config.hpp"
#include "cotlab/metrics_io.hpp"
#include "cotlab/run.hpp"
#include "cotlab/tasks.hpp"
#include "cotlab/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cotlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int thread_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("COTLAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::unique_ptr<TinyLM> load_model_or_die(const std::string& ckpt) {
  if (!fs::exists(fs::path(ckpt) / "manifest.json")) {
    throw IoError("checkpoint not found: " + ckpt);
  }
  return std::move(load_checkpoint(ckpt).model);
}

int run_gen_data(const std::string& task, int n, std::uint64_t seed, const std::string& out,
                 int modulus, int operands, int multiplier) {
  const Vocab vocab = builtin_vocab();
  TaskSpec spec;
  spec.size = n;
  spec.seed = seed;
  spec.modulus = modulus;
  spec.operands = operands;
  spec.multiplier = multiplier;
  if (task == "modsum") {
    spec.kind = TaskKind::ModSum;
  } else if (task == "longtransform") {
    spec.kind = TaskKind::LongTransform;
  } else {
    std::cerr << "unknown task: " << task << " (expected modsum|longtransform)\n";
    return kExitUsage;
  }
  save_jsonl(out, generate_task(spec, vocab), vocab);
  return kExitOk;
}

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, const std::string& resume, int threads) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.train.seed = *seed;
  std::optional<fs::path> resume_path;
  if (!resume.empty()) resume_path = fs::path(resume);
  run_training(cfg, out_dir, resume_path, threads);
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& data, int mc, int samples,
             std::uint64_t seed, const std::string& metrics_out, int threads) {
  auto model = load_model_or_die(ckpt);
  const std::vector<Example> examples = load_jsonl(data, model->vocab());
  if (examples.empty()) throw IoError("dataset is empty: " + data);

  std::vector<Example> subset = examples;
  if (samples > 0 && samples < static_cast<int>(examples.size())) {
    subset = eval_subset(examples, examples, samples, seed);
  }
  EvalConfig ec;
  ec.mc_extra_n = mc == 32 ? 32 : 0;
  ec.seed = seed;
  ec.threads = threads;
  const MetricRecord rec = evaluate(*model, subset, ec, -1);
  const json j = to_json(rec);
  std::cout << j.dump() << "\n";
  if (!metrics_out.empty()) append_jsonl_line(metrics_out, j);
  return kExitOk;
}

int run_correlate(const std::string& ckpt, const std::string& data, int questions, int samples,
                  const std::string& reward, std::uint64_t seed, const std::string& out,
                  int threads) {
  auto model = load_model_or_die(ckpt);
  const std::vector<Example> examples = load_jsonl(data, model->vocab());
  if (static_cast<int>(examples.size()) < questions) {
    throw IoError("dataset smaller than --questions");
  }
  const std::vector<Example> subset = eval_subset(examples, examples, questions, seed);
  CorrelationReward kind;
  if (reward == "logprob") {
    kind = CorrelationReward::Logprob;
  } else if (reward == "probability") {
    kind = CorrelationReward::Probability;
  } else {
    std::cerr << "unknown reward kind: " << reward << " (expected logprob|probability)\n";
    return kExitUsage;
  }
  EvalConfig ec;
  ec.seed = seed;
  ec.threads = threads;
  const CorrelationReport report = correlation_analysis(*model, subset, samples, kind, ec);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError("cannot write " + out);
  f << to_json(report).dump(2) << "\n";
  std::cout << "global_r=" << report.global_r << " mean_local_r=" << report.mean_local_r
            << " skipped=" << report.n_skipped << "\n";
  return kExitOk;
}

int run_warmstart(const std::string& ckpt, const std::string& data, int k, int steps,
                  const std::string& out_dir, std::uint64_t seed, double lr, int threads) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  TinyLM& model = *loaded.model;
  const std::vector<Example> examples = load_jsonl(data, model.vocab());
  if (examples.empty()) throw IoError("dataset is empty: " + data);

  TrainConfig tc;
  tc.seed = seed;
  tc.learning_rate = lr;
  tc.total_steps = steps;
  tc.threads = threads;

  const std::vector<WarmstartTriple> triples = build_warmstart_dataset(model, examples, k, tc);
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "cots.jsonl", std::ios::trunc);
    if (!f) throw IoError("cannot write cots.jsonl");
    for (const auto& t : triples) {
      json obj;
      obj["id"] = t.example_id;
      obj["prompt"] = model.vocab().decode(t.prompt);
      obj["cot"] = model.vocab().decode(t.cot);
      obj["answer"] = model.vocab().decode(t.answer);
      f << obj.dump() << "\n";
    }
  }

  OptimizerState opt;
  opt.init(model.param_count());
  const fs::path metrics_path = fs::path(out_dir) / "metrics.jsonl";
  for (int step = 0; step < steps; ++step) {
    CounterRng rng(StreamKey(seed).with("ws-batch").with(static_cast<std::uint64_t>(step)));
    std::vector<WarmstartTriple> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(triples[rng.next_u64() % triples.size()]);
    const StepReport report = warmstart_sft_step(model, opt, batch, tc, step);
    append_jsonl_line(metrics_path, to_json(report));
  }
  save_checkpoint(fs::path(out_dir) / "ckpt_final", model, {seed, steps}, &opt);
  return kExitOk;
}

int run_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> results;
  if (suite == "lemma") {
    results = verify_lemma(seed);
  } else if (suite == "unbiased") {
    results = verify_unbiased(seed);
  } else if (suite == "jensen") {
    results = verify_jensen(seed);
  } else if (suite == "mc") {
    results = verify_mc(seed);
  } else if (suite == "all") {
    results = verify_all(seed);
  } else {
    std::cerr << "unknown suite: " << suite << " (expected lemma|unbiased|jensen|mc|all)\n";
    return kExitUsage;
  }
  bool all_ok = true;
  json checks = json::array();
  for (const auto& r : results) {
    all_ok = all_ok && r.passed;
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.details << "\n";
    checks.push_back({{"name", r.name}, {"passed", r.passed}, {"details", r.details}});
  }
  const json report = {{"suite", suite}, {"seed", seed}, {"passed", all_ok}, {"checks", checks}};
  std::cout << report.dump() << "\n";
  return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cotlab: chain-of-thought RL fine-tuning laboratory"};
  app.require_subcommand(1);
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (default 1; COTLAB_THREADS)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_task, gen_out;
  int gen_n = 100, gen_modulus = 10, gen_operands = 3, gen_multiplier = 4;
  std::uint64_t gen_seed = 0;
  gen->add_option("--task", gen_task, "modsum|longtransform")->required();
  gen->add_option("--n", gen_n, "number of examples")->required();
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--modulus", gen_modulus, "modsum: answer modulus");
  gen->add_option("--operands", gen_operands, "modsum: operand count");
  gen->add_option("--multiplier", gen_multiplier, "longtransform: answer length multiplier");

  // train
  auto* train = app.add_subcommand("train", "run a training loop");
  std::string train_config, train_out, train_resume;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--seed", train_seed, "override config seed")->each([&](const std::string&) {
    train_seed_set = true;
  });
  train->add_option("--resume", train_resume, "checkpoint directory to resume from");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_metrics = "metrics.jsonl";
  int eval_mc = 1, eval_samples = 0;
  std::uint64_t eval_seed = 0;
  ev->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", eval_data, "JSONL dataset")->required();
  ev->add_option("--mc", eval_mc, "1 or 32")->check(CLI::IsMember({1, 32}));
  ev->add_option("--samples", eval_samples, "evaluate at most this many examples");
  ev->add_option("--seed", eval_seed, "evaluation seed");
  ev->add_option("--metrics-out", eval_metrics, "metrics.jsonl to append to");

  // correlate
  auto* corr = app.add_subcommand("correlate", "CoT length vs reward correlation");
  std::string corr_ckpt, corr_data, corr_reward = "logprob", corr_out;
  int corr_questions = 20, corr_samples = 200;
  std::uint64_t corr_seed = 0;
  corr->add_option("--ckpt", corr_ckpt)->required();
  corr->add_option("--data", corr_data)->required();
  corr->add_option("--questions", corr_questions, "questions sampled from the dataset");
  corr->add_option("--samples", corr_samples, "CoT samples per question");
  corr->add_option("--reward", corr_reward, "logprob|probability");
  corr->add_option("--seed", corr_seed);
  corr->add_option("--out", corr_out, "correlations.json path")->required();

  // warmstart
  auto* warm = app.add_subcommand("warmstart", "build CoT dataset and SFT on answers");
  std::string warm_ckpt, warm_data, warm_out;
  int warm_k = 1, warm_steps = 0;
  std::uint64_t warm_seed = 0;
  double warm_lr = 3e-4;
  warm->add_option("--ckpt", warm_ckpt)->required();
  warm->add_option("--data", warm_data)->required();
  warm->add_option("--k", warm_k, "rollouts per prompt");
  warm->add_option("--steps", warm_steps, "SFT steps after dataset generation");
  warm->add_option("--out", warm_out)->required();
  warm->add_option("--seed", warm_seed);
  warm->add_option("--lr", warm_lr, "warm-start learning rate");

  // verify
  auto* ver = app.add_subcommand("verify", "run estimator ground-truth checks");
  std::string ver_suite = "all";
  std::uint64_t ver_seed = 1;
  ver->add_option("--suite", ver_suite, "lemma|unbiased|jensen|mc|all");
  ver->add_option("--seed", ver_seed);

  // export-csv
  auto* csv = app.add_subcommand("export-csv", "flatten metrics.jsonl to CSV");
  std::string csv_in, csv_out, csv_kind = "eval";
  csv->add_option("--metrics", csv_in)->required();
  csv->add_option("--out", csv_out)->required();
  csv->add_option("--kind", csv_kind, "eval|train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  const int threads = thread_count(threads_flag);
  try {
    if (gen->parsed()) {
      return run_gen_data(gen_task, gen_n, gen_seed, gen_out, gen_modulus, gen_operands,
                          gen_multiplier);
    }
    if (train->parsed()) {
      return run_train(train_config, train_out,
                       train_seed_set ? std::optional<std::uint64_t>(train_seed) : std::nullopt,
                       train_resume, threads);
    }
    if (ev->parsed()) {
      return run_eval(eval_ckpt, eval_data, eval_mc, eval_samples, eval_seed, eval_metrics,
                      threads);
    }
    if (corr->parsed()) {
      return run_correlate(corr_ckpt, corr_data, corr_questions, corr_samples, corr_reward,
                           corr_seed, corr_out, threads);
    }
    if (warm->parsed()) {
      return run_warmstart(warm_ckpt, warm_data, warm_k, warm_steps, warm_out, warm_seed, warm_lr,
                           threads);
    }
    if (ver->parsed()) return run_verify(ver_suite, ver_seed);
    if (csv->parsed()) {
      export_csv(csv_in, csv_out, csv_kind);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const NonFiniteLossError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const AllDegenerateError& e) {
    std::cerr << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
