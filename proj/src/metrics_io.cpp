#include "cotlab/metrics_io.hpp"

#include "cotlab/tasks.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace cotlab {

using nlohmann::json;

json to_json(const StepReport& r) {
  return {
      {"kind", "train"},
      {"step", r.step},
      {"lr", r.lr},
      {"grad_norm", r.grad_norm},
      {"mean_reward", r.mean_reward},
      {"mean_cot_len", r.mean_cot_len},
      {"mean_kl", r.mean_kl},
      {"mean_answer_logprob", r.mean_answer_logprob},
      {"tag_rate", r.tag_rate},
      {"n_rollouts", r.n_rollouts},
  };
}

json to_json(const MetricRecord& r) {
  json j = {
      {"kind", "eval"},
      {"step", r.step},
      {"greedy_success", r.greedy_success},
      {"sampled_success_t1", r.sampled_success_t1},
      {"sampled_success_wilson_half", r.sampled_success_wilson_half},
      {"success_rate_expectation", r.success_rate_expectation},
      {"per_token_logprob_mc1", r.per_token_logprob_mc1},
      {"per_answer_logprob_mc1", r.per_answer_logprob_mc1},
      {"mean_answer_sum_logprob", r.mean_answer_sum_logprob},
      {"perplexity", r.perplexity},
      {"mean_cot_length", r.mean_cot_length},
      {"n_examples", r.n_examples},
      {"n_cot_samples", r.n_cot_samples},
  };
  j["per_token_logprob_mc32"] = r.per_token_logprob_mc32 ? json(*r.per_token_logprob_mc32) : json(nullptr);
  j["per_answer_logprob_mc32"] = r.per_answer_logprob_mc32 ? json(*r.per_answer_logprob_mc32) : json(nullptr);
  return j;
}

json to_json(const CorrelationReport& r) {
  json questions = json::array();
  for (const auto& q : r.questions) {
    questions.push_back({{"id", q.id}, {"r", q.skipped ? json(nullptr) : json(q.r)}, {"skipped", q.skipped}});
  }
  return {
      {"global_r", std::isnan(r.global_r) ? json(nullptr) : json(r.global_r)},
      {"mean_local_r", r.mean_local_r},
      {"n_skipped", r.n_skipped},
      {"questions", questions},
  };
}

MetricRecord metric_record_from_json(const json& j) {
  MetricRecord r;
  r.step = j.at("step").get<long>();
  r.greedy_success = j.at("greedy_success").get<double>();
  r.sampled_success_t1 = j.at("sampled_success_t1").get<double>();
  r.sampled_success_wilson_half = j.at("sampled_success_wilson_half").get<double>();
  r.success_rate_expectation = j.at("success_rate_expectation").get<double>();
  r.per_token_logprob_mc1 = j.at("per_token_logprob_mc1").get<double>();
  r.per_answer_logprob_mc1 = j.at("per_answer_logprob_mc1").get<double>();
  r.mean_answer_sum_logprob = j.value("mean_answer_sum_logprob", 0.0);
  if (!j.at("per_token_logprob_mc32").is_null()) {
    r.per_token_logprob_mc32 = j.at("per_token_logprob_mc32").get<double>();
  }
  if (!j.at("per_answer_logprob_mc32").is_null()) {
    r.per_answer_logprob_mc32 = j.at("per_answer_logprob_mc32").get<double>();
  }
  r.perplexity = j.at("perplexity").get<double>();
  r.mean_cot_length = j.at("mean_cot_length").get<double>();
  r.n_examples = j.at("n_examples").get<long>();
  r.n_cot_samples = j.at("n_cot_samples").get<long>();
  return r;
}

void append_jsonl_line(const std::filesystem::path& path, const json& obj) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << obj.dump() << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

void export_csv(const std::filesystem::path& metrics_path, const std::filesystem::path& out_path,
                const std::string& kind) {
  std::ifstream in(metrics_path);
  if (!in) throw IoError("cannot open " + metrics_path.string());
  std::vector<json> records;
  std::set<std::string> keys;
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
    if (obj.value("kind", "") != kind) continue;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it.key() != "kind") keys.insert(it.key());
    }
    records.push_back(std::move(obj));
  }

  // step first, the rest alphabetical
  std::vector<std::string> columns;
  if (keys.count("step")) columns.push_back("step");
  for (const auto& k : keys) {
    if (k != "step") columns.push_back(k);
  }

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << "\n";
  for (const auto& rec : records) {
    for (size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ",";
      auto it = rec.find(columns[c]);
      if (it == rec.end() || it->is_null()) continue;
      if (it->is_string()) {
        out << it->get<std::string>();
      } else {
        out << it->dump();
      }
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + out_path.string());
}

}  // namespace cotlab
