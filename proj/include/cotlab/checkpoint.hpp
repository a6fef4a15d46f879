#pragma once

#include "cotlab/tiny_lm.hpp"
#include "cotlab/trainer.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace cotlab {

/// Checkpoint directory layout:
///   manifest.json  architecture, vocab, seed, step, segment table
///   params.bin     little-endian float32, flat in segment order
///   opt.bin        optional training state (float64 moments + exact params)
///
/// params.bin is the interchange surface; opt.bin carries the full-precision
/// state so a resumed run continues bit-for-bit.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  long step = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const TinyLM& model,
                     const CheckpointMeta& meta, const OptimizerState* opt = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<TinyLM> model;
  CheckpointMeta meta;
  std::optional<OptimizerState> opt;
  bool exact_params = false;  // params came from opt.bin (float64)
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cotlab
