#pragma once

#include "cotlab/checkpoint.hpp"
#include "cotlab/config.hpp"

#include <filesystem>
#include <optional>

namespace cotlab {

struct RunResult {
  std::filesystem::path final_checkpoint;
  long steps_run = 0;
  MetricRecord last_eval;
};

/// Runs the configured training loop into out_dir:
///   config.snapshot.json, metrics.jsonl, ckpt_initial/,
///   ckpt_step_NNNNNN/ at every eval point, ckpt_final/.
/// Resuming from a checkpoint continues the identical trajectory.
RunResult run_training(const RunConfig& cfg, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume = std::nullopt,
                       int threads = 1);

/// The deterministic evaluation subset a run uses (first n of a seeded
/// shuffle of the validation split; falls back to train when val is empty).
std::vector<Example> eval_subset(const std::vector<Example>& val, const std::vector<Example>& train,
                                 int n, std::uint64_t seed);

/// Loads or generates the configured dataset and splits it.
std::pair<std::vector<Example>, std::vector<Example>> prepare_data(const RunConfig& cfg,
                                                                   const Vocab& vocab);

}  // namespace cotlab
