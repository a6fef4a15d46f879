#pragma once

#include "cotlab/eval.hpp"
#include "cotlab/tasks.hpp"
#include "cotlab/tiny_lm.hpp"
#include "cotlab/trainer.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace cotlab {

/// Config problems carry a JSON pointer to the offending field.
struct ConfigError : std::runtime_error {
  std::string pointer;
  ConfigError(std::string pointer_, const std::string& message)
      : std::runtime_error("config error at " + pointer_ + ": " + message),
        pointer(std::move(pointer_)) {}
};

enum class Algorithm { Rl, Sft };

struct DataConfig {
  std::optional<std::string> path;   // JSONL dataset
  std::optional<TaskSpec> task;      // or a generated one
  double val_fraction = 0.1;
};

struct EvalSettings {
  int n_examples = 256;  // evaluation subset size (capped by the val split)
  int mc_extra_n = 0;    // 32 enables the MC32 fields
};

struct RunConfig {
  Algorithm algorithm = Algorithm::Rl;
  TinyLmConfig model;
  DataConfig data;
  TrainConfig train;  // train.reward holds the RewardSpec
  EvalSettings eval;
  // Start from this checkpoint's parameters (fresh optimizer, step 0).
  // The architecture must match `model`.
  std::optional<std::string> init_checkpoint;
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

}  // namespace cotlab
