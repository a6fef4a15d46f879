#pragma once

#include "cotlab/core.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cotlab {

enum class TaskKind { ModSum, LongTransform };

struct TaskSpec {
  TaskKind kind = TaskKind::ModSum;
  int size = 1000;
  std::uint64_t seed = 0;
  // ModSum
  int operands = 3;
  int modulus = 10;
  // LongTransform
  int multiplier = 4;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct ParseError : std::runtime_error {
  long line;
  ParseError(long line_, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_) + ": " + what), line(line_) {}
};
struct UnknownTokenError : std::runtime_error {
  long line;
  std::string symbol;
  UnknownTokenError(long line_, std::string symbol_)
      : std::runtime_error("line " + std::to_string(line_) + ": unknown token \"" + symbol_ + "\""),
        line(line_),
        symbol(std::move(symbol_)) {}
};
struct DuplicateIdError : std::runtime_error {
  explicit DuplicateIdError(const std::string& id)
      : std::runtime_error("duplicate example id: " + id) {}
};

/// Sums of k uniform digits mod m; single-digit answer.
std::vector<Example> gen_modsum(const TaskSpec& spec, const Vocab& vocab);

/// Answer = reverse(prompt) repeated `multiplier` times; prompt is 3-8
/// letters, so exact-match probability under an untrained model vanishes.
std::vector<Example> gen_longtransform(const TaskSpec& spec, const Vocab& vocab);

std::vector<Example> generate_task(const TaskSpec& spec, const Vocab& vocab);

/// JSON Lines: {"id": str, "prompt": [symbols], "answer": [symbols]}.
std::vector<Example> load_jsonl(const std::string& path, const Vocab& vocab);
void save_jsonl(const std::string& path, const std::vector<Example>& examples, const Vocab& vocab);

/// Seeded-shuffle split into (train, val); disjoint and exhaustive.
std::pair<std::vector<Example>, std::vector<Example>> split(const std::vector<Example>& examples,
                                                            double val_fraction,
                                                            std::uint64_t seed);

}  // namespace cotlab
