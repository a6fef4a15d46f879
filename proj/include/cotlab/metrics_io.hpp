#pragma once

#include "cotlab/eval.hpp"
#include "cotlab/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace cotlab {

nlohmann::json to_json(const StepReport& report);
nlohmann::json to_json(const MetricRecord& record);
nlohmann::json to_json(const CorrelationReport& report);

MetricRecord metric_record_from_json(const nlohmann::json& j);

void append_jsonl_line(const std::filesystem::path& path, const nlohmann::json& obj);

/// Flattens metrics.jsonl records of one kind ("eval" or "train") to CSV:
/// header row then one row per record. Missing/null fields are left empty.
void export_csv(const std::filesystem::path& metrics_path, const std::filesystem::path& out_path,
                const std::string& kind);

}  // namespace cotlab
