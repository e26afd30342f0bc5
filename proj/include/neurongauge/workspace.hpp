#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "neurongauge/dataset.hpp"

namespace ngauge {

/// Everything the simulator needs about one probing dataset: neuron
/// activations, binary ground-truth concepts and, optionally, cheap-estimator
/// scores for the same concept ids.
struct Workspace {
  ProbingIndex index;
  std::vector<ActivationVector> activations;
  std::vector<ConceptVector> truth;
  std::vector<ConceptVector> guides;

  const ActivationVector* activation(std::string_view neuron_id) const;
  const ConceptVector* truth_for(std::string_view concept_id) const;
  const ConceptVector* guide_for(std::string_view concept_id) const;

  /// Throws the first violation reported by validate_workspace.
  void validate() const;
};

/// Loads activations, ground truth and an optional guide file; every file must
/// share the same input_id order.
Workspace load_workspace(const std::filesystem::path& activations, const std::filesystem::path& truth,
                         const std::filesystem::path& guides = {});

}  // namespace ngauge
