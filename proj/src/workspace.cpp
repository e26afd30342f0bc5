#include "neurongauge/workspace.hpp"

#include "neurongauge/error.hpp"

namespace ngauge {

namespace {

template <typename Vec, typename Key>
const Vec* find_by(const std::vector<Vec>& items, std::string_view id, Key key) {
  for (const auto& item : items) {
    if (item.*key == id) return &item;
  }
  return nullptr;
}

ErrorCode code_for(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::ProvenanceViolation: return ErrorCode::ProvenanceViolation;
    case ViolationKind::RangeError: return ErrorCode::RangeError;
    case ViolationKind::NonFinite: return ErrorCode::ParseError;
    default: return ErrorCode::DimensionMismatch;
  }
}

}  // namespace

const ActivationVector* Workspace::activation(std::string_view neuron_id) const {
  return find_by(activations, neuron_id, &ActivationVector::neuron_id);
}

const ConceptVector* Workspace::truth_for(std::string_view concept_id) const {
  return find_by(truth, concept_id, &ConceptVector::concept_id);
}

const ConceptVector* Workspace::guide_for(std::string_view concept_id) const {
  return find_by(guides, concept_id, &ConceptVector::concept_id);
}

void Workspace::validate() const {
  std::vector<ConceptVector> concepts = truth;
  concepts.insert(concepts.end(), guides.begin(), guides.end());
  const auto report = validate_workspace(index, activations, concepts);
  if (!report.empty()) {
    const auto& v = report.front();
    fail(code_for(v.kind), std::string(to_string(v.kind)) + " (" + v.subject + "): " + v.message);
  }
  for (const auto& c : truth) {
    require(c.provenance == Provenance::ground_truth, ErrorCode::ProvenanceViolation,
            "concept '" + c.concept_id + "' is not ground truth");
  }
}

Workspace load_workspace(const std::filesystem::path& activations, const std::filesystem::path& truth,
                         const std::filesystem::path& guides) {
  Workspace ws;
  auto acts = load_activations(activations);
  auto gt = load_concepts(truth, Provenance::ground_truth);
  require(gt.index == acts.index, ErrorCode::DimensionMismatch,
          truth.string() + ": input ids differ from " + activations.string());
  ws.index = std::move(acts.index);
  ws.activations = std::move(acts.vectors);
  ws.truth = std::move(gt.vectors);
  if (!guides.empty()) {
    auto g = load_concepts(guides, Provenance::cheap_estimator);
    require(g.index == ws.index, ErrorCode::DimensionMismatch,
            guides.string() + ": input ids differ from " + activations.string());
    ws.guides = std::move(g.vectors);
  }
  ws.validate();
  return ws;
}

}  // namespace ngauge
