#include "neurongauge/plan_io.hpp"

#include <fstream>

#include "neurongauge/error.hpp"

namespace ngauge {

nlohmann::json to_json(const PlanDocument& doc) {
  nlohmann::json j;
  j["strategy"] = to_string(doc.plan.strategy);
  j["epsilon"] = doc.plan.epsilon;
  if (!doc.neuron_id.empty()) j["neuron_id"] = doc.neuron_id;
  if (!doc.concept_id.empty()) j["concept_id"] = doc.concept_id;
  if (!doc.input_ids.empty()) j["input_ids"] = doc.input_ids;
  j["q"] = doc.plan.q;
  if (doc.sample) {
    j["indices"] = doc.sample->indices;
    j["seed"] = doc.sample->seed;
  }
  return j;
}

PlanDocument plan_document_from_json(const nlohmann::json& j) {
  PlanDocument doc;
  try {
    doc.plan.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    doc.plan.epsilon = j.at("epsilon").get<double>();
    doc.plan.q = j.at("q").get<std::vector<double>>();
    doc.neuron_id = j.value("neuron_id", std::string{});
    doc.concept_id = j.value("concept_id", std::string{});
    if (j.contains("input_ids")) doc.input_ids = j["input_ids"].get<std::vector<std::string>>();
    finalize_plan(doc.plan);
    if (j.contains("indices")) {
      Sample s;
      s.indices = j["indices"].get<std::vector<std::size_t>>();
      s.seed = j.value("seed", std::uint64_t{0});
      for (std::size_t idx : s.indices) {
        require(idx < doc.plan.size(), ErrorCode::IndexOutOfRange,
                "plan document index " + std::to_string(idx) + " outside proposal");
        s.weights.push_back(doc.plan.weight(idx));
      }
      doc.sample = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("plan document: ") + e.what());
  }
  if (!doc.input_ids.empty()) {
    require(doc.input_ids.size() == doc.plan.size(), ErrorCode::DimensionMismatch,
            "plan document input_ids length does not match q");
  }
  return doc;
}

void write_plan_document(const PlanDocument& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(doc).dump() << "\n";
}

PlanDocument read_plan_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return plan_document_from_json(j);
}

}  // namespace ngauge
