#include "cotlab/tasks.hpp"

#include "cotlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace cotlab {

using nlohmann::json;

std::vector<Example> gen_modsum(const TaskSpec& spec, const Vocab& vocab) {
  if (spec.operands < 2) throw std::invalid_argument("modsum: operands must be >= 2");
  if (spec.modulus < 2 || spec.modulus > 10) throw std::invalid_argument("modsum: modulus in [2, 10]");
  const TokenId plus = vocab.id_of("+");
  TokenId digits[10];
  for (int d = 0; d < 10; ++d) digits[d] = vocab.id_of(std::string(1, static_cast<char>('0' + d)));

  std::vector<Example> out;
  out.reserve(static_cast<size_t>(spec.size));
  for (int i = 0; i < spec.size; ++i) {
    CounterRng rng(StreamKey(spec.seed).with("modsum").with(static_cast<std::uint64_t>(i)));
    Example e;
    e.id = "modsum-" + std::to_string(i);
    int sum = 0;
    for (int k = 0; k < spec.operands; ++k) {
      const int d = static_cast<int>(rng.next_u64() % 10);
      sum += d;
      if (k > 0) e.prompt.push_back(plus);
      e.prompt.push_back(digits[d]);
    }
    e.answer.push_back(digits[sum % spec.modulus]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> gen_longtransform(const TaskSpec& spec, const Vocab& vocab) {
  if (spec.multiplier < 1) throw std::invalid_argument("longtransform: multiplier must be >= 1");
  std::vector<TokenId> letters;
  for (char c = 'a'; c <= 'l'; ++c) letters.push_back(vocab.id_of(std::string(1, c)));

  std::vector<Example> out;
  out.reserve(static_cast<size_t>(spec.size));
  for (int i = 0; i < spec.size; ++i) {
    CounterRng rng(StreamKey(spec.seed).with("longtransform").with(static_cast<std::uint64_t>(i)));
    Example e;
    e.id = "longtransform-" + std::to_string(i);
    const int len = 3 + static_cast<int>(rng.next_u64() % 6);  // 3..8
    for (int k = 0; k < len; ++k) {
      e.prompt.push_back(letters[rng.next_u64() % letters.size()]);
    }
    for (int rep = 0; rep < spec.multiplier; ++rep) {
      for (int k = len - 1; k >= 0; --k) e.answer.push_back(e.prompt[static_cast<size_t>(k)]);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> generate_task(const TaskSpec& spec, const Vocab& vocab) {
  return spec.kind == TaskKind::ModSum ? gen_modsum(spec, vocab) : gen_longtransform(spec, vocab);
}

std::vector<Example> load_jsonl(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Example> out;
  std::unordered_map<std::string, bool> ids;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("prompt") || !obj.contains("answer")) {
      throw ParseError(lineno, "expected object with id/prompt/answer");
    }
    Example e;
    try {
      e.id = obj.at("id").get<std::string>();
    } catch (const json::exception& e2) {
      throw ParseError(lineno, e2.what());
    }
    auto read_tokens = [&](const json& arr, TokenSeq& dst) {
      if (!arr.is_array()) throw ParseError(lineno, "prompt/answer must be arrays of symbols");
      for (const auto& item : arr) {
        if (!item.is_string()) throw ParseError(lineno, "tokens must be strings");
        TokenId id;
        if (!vocab.lookup(item.get<std::string>(), id)) {
          throw UnknownTokenError(lineno, item.get<std::string>());
        }
        dst.push_back(id);
      }
    };
    read_tokens(obj.at("prompt"), e.prompt);
    read_tokens(obj.at("answer"), e.answer);
    e.validate(vocab);
    if (ids.count(e.id)) throw DuplicateIdError(e.id);
    ids.emplace(e.id, true);
    out.push_back(std::move(e));
  }
  return out;
}

void save_jsonl(const std::string& path, const std::vector<Example>& examples, const Vocab& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const Example& e : examples) {
    json obj;
    obj["id"] = e.id;
    obj["prompt"] = vocab.decode(e.prompt);
    obj["answer"] = vocab.decode(e.answer);
    out << obj.dump() << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::pair<std::vector<Example>, std::vector<Example>> split(const std::vector<Example>& examples,
                                                            double val_fraction,
                                                            std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must be in (0, 1)");
  }
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(StreamKey(seed).with("split"));
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = rng.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }
  const size_t n_val = static_cast<size_t>(
      std::llround(val_fraction * static_cast<double>(examples.size())));
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? out.second : out.first).push_back(examples[order[i]]);
  }
  return out;
}

}  // namespace cotlab
