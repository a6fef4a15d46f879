#include "cotlab/config.hpp"

#include <fstream>

namespace cotlab {

using nlohmann::json;

namespace {

const json& member(const json& j, const std::string& parent, const char* key) {
  if (!j.is_object()) throw ConfigError(parent.empty() ? "/" : parent, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(parent + "/" + key, "missing field");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& pointer) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(pointer, "wrong type");
  }
}

template <typename T>
T field(const json& j, const std::string& parent, const char* key) {
  return get_as<T>(member(j, parent, key), parent + "/" + key);
}

template <typename T>
T field_or(const json& j, const std::string& parent, const char* key, T fallback) {
  if (!j.is_object()) throw ConfigError(parent.empty() ? "/" : parent, "expected an object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return get_as<T>(*it, parent + "/" + key);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;

  const std::string algorithm = field_or<std::string>(j, "", "algorithm", "rl");
  if (algorithm == "rl") {
    cfg.algorithm = Algorithm::Rl;
  } else if (algorithm == "sft") {
    cfg.algorithm = Algorithm::Sft;
  } else {
    throw ConfigError("/algorithm", "expected \"rl\" or \"sft\", got \"" + algorithm + "\"");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.embed_dim = field_or(m, "/model", "embed_dim", cfg.model.embed_dim);
    cfg.model.n_layers = field_or(m, "/model", "n_layers", cfg.model.n_layers);
    cfg.model.n_heads = field_or(m, "/model", "n_heads", cfg.model.n_heads);
    cfg.model.ff_dim = field_or(m, "/model", "ff_dim", cfg.model.ff_dim);
    cfg.model.context_len = field_or(m, "/model", "context_len", cfg.model.context_len);
    cfg.model.init_std = field_or(m, "/model", "init_std", cfg.model.init_std);
    try {
      cfg.model.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("/model", e.what());
    }
  }

  const json& data = member(j, "", "data");
  cfg.data.val_fraction = field_or(data, "/data", "val_fraction", 0.1);
  if (data.contains("path") && data.contains("task")) {
    throw ConfigError("/data", "give either path or task, not both");
  }
  if (data.contains("path")) {
    cfg.data.path = field<std::string>(data, "/data", "path");
  } else if (data.contains("task")) {
    const json& t = data.at("task");
    TaskSpec spec;
    const std::string kind = field<std::string>(t, "/data/task", "kind");
    if (kind == "modsum") {
      spec.kind = TaskKind::ModSum;
    } else if (kind == "longtransform") {
      spec.kind = TaskKind::LongTransform;
    } else {
      throw ConfigError("/data/task/kind", "unknown task \"" + kind + "\"");
    }
    spec.size = field<int>(t, "/data/task", "size");
    spec.seed = field_or<std::uint64_t>(t, "/data/task", "seed", 0);
    spec.operands = field_or(t, "/data/task", "operands", spec.operands);
    spec.modulus = field_or(t, "/data/task", "modulus", spec.modulus);
    spec.multiplier = field_or(t, "/data/task", "multiplier", spec.multiplier);
    cfg.data.task = spec;
  } else {
    throw ConfigError("/data", "needs a path or a task");
  }
  if (!(cfg.data.val_fraction > 0.0 && cfg.data.val_fraction < 1.0)) {
    throw ConfigError("/data/val_fraction", "must be in (0, 1)");
  }

  if (cfg.algorithm == Algorithm::Rl || j.contains("reward")) {
    const json& r = member(j, "", "reward");
    const std::string variant = field<std::string>(r, "/reward", "variant");
    const auto parsed = reward_variant_from_string(variant);
    if (!parsed) throw ConfigError("/reward/variant", "unknown reward variant \"" + variant + "\"");
    cfg.train.reward.variant = *parsed;
    if (r.contains("binary_values") && !r.at("binary_values").is_null()) {
      const auto vals = get_as<std::vector<double>>(r.at("binary_values"), "/reward/binary_values");
      if (vals.size() != 3) throw ConfigError("/reward/binary_values", "expected [correct, format_only, unparsable]");
      cfg.train.reward.binary_values = {vals[0], vals[1], vals[2]};
    }
    if (r.contains("length_penalty") && !r.at("length_penalty").is_null()) {
      const json& lp = r.at("length_penalty");
      LengthPenalty pen;
      pen.rate = field<double>(lp, "/reward/length_penalty", "rate");
      pen.threshold = field<double>(lp, "/reward/length_penalty", "threshold");
      if (pen.rate < 0.0) throw ConfigError("/reward/length_penalty/rate", "must be >= 0");
      if (pen.threshold < 0.0) throw ConfigError("/reward/length_penalty/threshold", "must be >= 0");
      cfg.train.reward.length_penalty = pen;
    }
    cfg.train.reward.kl_coeff = field_or(r, "/reward", "kl_coeff", 0.0);
    if (cfg.train.reward.kl_coeff < 0.0) throw ConfigError("/reward/kl_coeff", "must be >= 0");
  }

  const json& t = member(j, "", "train");
  cfg.train.group_size = field_or(t, "/train", "group_size", cfg.train.group_size);
  cfg.train.questions_per_step = field_or(t, "/train", "questions_per_step", cfg.train.questions_per_step);
  cfg.train.learning_rate = field_or(t, "/train", "learning_rate", cfg.train.learning_rate);
  cfg.train.warmup_steps = field_or(t, "/train", "warmup_steps", cfg.train.warmup_steps);
  cfg.train.total_steps = field<int>(t, "/train", "total_steps");
  cfg.train.grad_clip_norm = field_or(t, "/train", "grad_clip_norm", cfg.train.grad_clip_norm);
  cfg.train.eval_every = field_or(t, "/train", "eval_every", cfg.train.eval_every);
  cfg.train.seed = field_or<std::uint64_t>(t, "/train", "seed", cfg.train.seed);
  cfg.train.max_new = field_or(t, "/train", "max_new", cfg.train.max_new);
  cfg.train.answer_max_new = field_or(t, "/train", "answer_max_new", cfg.train.answer_max_new);
  if (t.contains("betas") && !t.at("betas").is_null()) {
    const auto betas = get_as<std::vector<double>>(t.at("betas"), "/train/betas");
    if (betas.size() != 2) throw ConfigError("/train/betas", "expected [beta1, beta2]");
    cfg.train.adam.beta1 = betas[0];
    cfg.train.adam.beta2 = betas[1];
  }
  cfg.train.adam.eps = field_or(t, "/train", "eps", cfg.train.adam.eps);
  cfg.train.adam.weight_decay = field_or(t, "/train", "weight_decay", cfg.train.adam.weight_decay);
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/train", e.what());
  }

  if (j.contains("init_ckpt") && !j.at("init_ckpt").is_null()) {
    cfg.init_checkpoint = field<std::string>(j, "", "init_ckpt");
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    cfg.eval.n_examples = field_or(e, "/eval", "n_examples", cfg.eval.n_examples);
    cfg.eval.mc_extra_n = field_or(e, "/eval", "mc", cfg.eval.mc_extra_n);
    if (cfg.eval.n_examples < 1) throw ConfigError("/eval/n_examples", "must be >= 1");
    if (cfg.eval.mc_extra_n != 0 && cfg.eval.mc_extra_n != 32 && cfg.eval.mc_extra_n != 1) {
      throw ConfigError("/eval/mc", "expected 1 or 32");
    }
    if (cfg.eval.mc_extra_n == 1) cfg.eval.mc_extra_n = 0;
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["algorithm"] = cfg.algorithm == Algorithm::Rl ? "rl" : "sft";
  j["model"] = {
      {"embed_dim", cfg.model.embed_dim},   {"n_layers", cfg.model.n_layers},
      {"n_heads", cfg.model.n_heads},       {"ff_dim", cfg.model.ff_dim},
      {"context_len", cfg.model.context_len}, {"init_std", cfg.model.init_std},
  };
  json data;
  data["val_fraction"] = cfg.data.val_fraction;
  if (cfg.data.path) {
    data["path"] = *cfg.data.path;
  } else if (cfg.data.task) {
    const TaskSpec& s = *cfg.data.task;
    data["task"] = {
        {"kind", s.kind == TaskKind::ModSum ? "modsum" : "longtransform"},
        {"size", s.size},
        {"seed", s.seed},
        {"operands", s.operands},
        {"modulus", s.modulus},
        {"multiplier", s.multiplier},
    };
  }
  j["data"] = data;
  const RewardSpec& r = cfg.train.reward;
  json reward;
  reward["variant"] = to_string(r.variant);
  reward["binary_values"] = {r.binary_values.correct, r.binary_values.format_only,
                             r.binary_values.unparsable};
  reward["length_penalty"] =
      r.length_penalty
          ? json{{"rate", r.length_penalty->rate}, {"threshold", r.length_penalty->threshold}}
          : json(nullptr);
  reward["kl_coeff"] = r.kl_coeff;
  j["reward"] = reward;
  j["train"] = {
      {"group_size", cfg.train.group_size},
      {"questions_per_step", cfg.train.questions_per_step},
      {"learning_rate", cfg.train.learning_rate},
      {"warmup_steps", cfg.train.warmup_steps},
      {"total_steps", cfg.train.total_steps},
      {"grad_clip_norm", cfg.train.grad_clip_norm},
      {"eval_every", cfg.train.eval_every},
      {"seed", cfg.train.seed},
      {"max_new", cfg.train.max_new},
      {"answer_max_new", cfg.train.answer_max_new},
      {"betas", {cfg.train.adam.beta1, cfg.train.adam.beta2}},
      {"eps", cfg.train.adam.eps},
      {"weight_decay", cfg.train.adam.weight_decay},
  };
  j["eval"] = {{"n_examples", cfg.eval.n_examples}, {"mc", cfg.eval.mc_extra_n}};
  j["init_ckpt"] = cfg.init_checkpoint ? json(*cfg.init_checkpoint) : json(nullptr);
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace cotlab
