#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "neurongauge/dataset.hpp"
#include "neurongauge/explanation.hpp"

namespace ngauge {

/// Predicted activation s(x_i, E) for every input of `split` (all inputs when
/// the split is empty):
///   Simple        [c_t]_i
///   Linear        Σ w_j [c_tj]_i
///   Compositional AND = x·y, OR = 1 − (1 − x)(1 − y), NOT = 1 − x
///   Clustered     Σ (l_j + u_j)/2 · s(x_i, F_j)
/// Throws UnknownConcept and EmptyExplanation.
std::vector<double> predict(const Explanation& e, const ConceptSet& concepts,
                            std::span<const std::size_t> split = {});

/// Correlation between the neuron's activations and the prediction over the split.
double score_explanation(const Explanation& e, const ActivationVector& a, const ConceptSet& concepts,
                         std::span<const std::size_t> split = {});

struct ExplanationEntry {
  std::string neuron_id;
  std::string text;  // as written in the input file
  Explanation explanation;
};

/// JSON Lines: {"neuron_id": ..., "explanation": "<text>" | {"clusters": [...]}}
std::vector<ExplanationEntry> read_explanations(const std::filesystem::path& path);

struct ScoreRow {
  std::string neuron_id;
  std::string explanation;
  std::size_t length = 0;
  double score = 0.0;
};

std::vector<ScoreRow> score_explanations(std::span<const ExplanationEntry> entries, const ActivationSet& activations,
                                         const ConceptSet& concepts, std::span<const std::size_t> split = {});

/// CSV with header neuron_id,explanation,length,score.
void write_scores_csv(std::span<const ScoreRow> rows, std::ostream& out);

}  // namespace ngauge
