#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "neurongauge/estimator.hpp"

namespace ngauge {

/// Audit/replay document for a plan and, optionally, the sample drawn from it:
/// {"strategy":..., "epsilon":..., "q":[...], "indices":[...], "seed":...}
/// plus optional "neuron_id" / "concept_id" / "input_ids" context.
struct PlanDocument {
  SamplingPlan plan;
  std::optional<Sample> sample;
  std::string neuron_id;
  std::string concept_id;
  std::vector<std::string> input_ids;  // empty when not recorded
};

nlohmann::json to_json(const PlanDocument& doc);

/// Weights are recomputed from q, so a written document replays bit-exactly.
PlanDocument plan_document_from_json(const nlohmann::json& j);

void write_plan_document(const PlanDocument& doc, const std::filesystem::path& path);
PlanDocument read_plan_document(const std::filesystem::path& path);

}  // namespace ngauge
