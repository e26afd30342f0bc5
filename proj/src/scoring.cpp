#include "neurongauge/scoring.hpp"

#include <fstream>
#include <ostream>
#include <unordered_map>

#include "neurongauge/error.hpp"
#include "neurongauge/estimator.hpp"

namespace ngauge {

namespace {

/// Resolved concept columns, looked up once per prediction.
class Columns {
 public:
  Columns(const Explanation& e, const ConceptSet& concepts) {
    for (const auto& id : referenced_concepts(e)) {
      const ConceptVector* c = concepts.find(id);
      if (!c) fail(ErrorCode::UnknownConcept, "explanation references unknown concept '" + id + "'");
      require(c->values.size() == concepts.index.size(), ErrorCode::DimensionMismatch,
              "concept '" + id + "' length differs from the probing dataset");
      by_id_.emplace(id, c->values.data());
    }
  }

  double at(const std::string& id, std::size_t i) const { return by_id_.at(id)[i]; }

 private:
  std::unordered_map<std::string, const double*> by_id_;
};

double eval(const LogicNode& n, const Columns& cols, std::size_t i) {
  switch (n.op) {
    case LogicNode::Op::leaf: return cols.at(n.concept_id, i);
    case LogicNode::Op::not_op: return 1.0 - eval(n.children.front(), cols, i);
    case LogicNode::Op::and_op: {
      double acc = eval(n.children.front(), cols, i);
      for (std::size_t j = 1; j < n.children.size(); ++j) acc = acc * eval(n.children[j], cols, i);
      return acc;
    }
    case LogicNode::Op::or_op: {
      double acc = eval(n.children.front(), cols, i);
      for (std::size_t j = 1; j < n.children.size(); ++j) acc = 1.0 - (1.0 - acc) * (1.0 - eval(n.children[j], cols, i));
      return acc;
    }
  }
  return 0.0;
}

void check_formula(const LogicNode& n) {
  switch (n.op) {
    case LogicNode::Op::leaf:
      require(!n.concept_id.empty(), ErrorCode::EmptyExplanation, "formula leaf has no concept");
      return;
    case LogicNode::Op::not_op:
      require(n.children.size() == 1, ErrorCode::EmptyExplanation, "NOT takes exactly one operand");
      break;
    default:
      require(!n.children.empty(), ErrorCode::EmptyExplanation, "AND/OR node has no operands");
  }
  for (const auto& c : n.children) check_formula(c);
}

void check_explanation(const Explanation& e) {
  if (const auto* s = std::get_if<SimpleExplanation>(&e)) {
    require(!s->concept_id.empty(), ErrorCode::EmptyExplanation, "explanation names no concept");
  } else if (const auto* l = std::get_if<LinearExplanation>(&e)) {
    require(!l->terms.empty(), ErrorCode::EmptyExplanation, "linear explanation has no terms");
  } else if (const auto* c = std::get_if<CompositionalExplanation>(&e)) {
    check_formula(c->root);
  } else if (const auto* k = std::get_if<ClusteredExplanation>(&e)) {
    require(!k->clusters.empty(), ErrorCode::EmptyExplanation, "clustered explanation has no clusters");
    for (const auto& cl : k->clusters) check_formula(cl.formula);
  }
}

double predict_one(const Explanation& e, const Columns& cols, std::size_t i) {
  if (const auto* s = std::get_if<SimpleExplanation>(&e)) return cols.at(s->concept_id, i);
  if (const auto* l = std::get_if<LinearExplanation>(&e)) {
    double acc = 0.0;
    for (const auto& t : l->terms) acc += t.weight * cols.at(t.concept_id, i);
    return acc;
  }
  if (const auto* c = std::get_if<CompositionalExplanation>(&e)) return eval(c->root, cols, i);
  const auto& k = std::get<ClusteredExplanation>(e);
  double acc = 0.0;
  for (const auto& cl : k.clusters) acc += (cl.lower + cl.upper) / 2.0 * eval(cl.formula, cols, i);
  return acc;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<double> predict(const Explanation& e, const ConceptSet& concepts, std::span<const std::size_t> split) {
  check_explanation(e);
  const Columns cols(e, concepts);
  const std::size_t n = concepts.index.size();
  std::vector<double> out;
  if (split.empty()) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = predict_one(e, cols, i);
  } else {
    out.reserve(split.size());
    for (std::size_t i : split) {
      require(i < n, ErrorCode::IndexOutOfRange, "evaluation split index " + std::to_string(i) + " out of range");
      out.push_back(predict_one(e, cols, i));
    }
  }
  return out;
}

double score_explanation(const Explanation& e, const ActivationVector& a, const ConceptSet& concepts,
                         std::span<const std::size_t> split) {
  require(a.values.size() == concepts.index.size(), ErrorCode::DimensionMismatch,
          "activation length differs from the concept matrix");
  const std::vector<double> pred = predict(e, concepts, split);
  if (split.empty()) return exact_correlation(a.values, pred);
  std::vector<double> act;
  act.reserve(split.size());
  for (std::size_t i : split) act.push_back(a.values[i]);
  return exact_correlation(act, pred);
}

std::vector<ExplanationEntry> read_explanations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<ExplanationEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("neuron_id") || !j["neuron_id"].is_string() || !j.contains("explanation")) {
      fail(ErrorCode::ParseError, where + ": expected {\"neuron_id\": ..., \"explanation\": ...}");
    }
    ExplanationEntry entry;
    entry.neuron_id = j["neuron_id"].get<std::string>();
    const auto& ex = j["explanation"];
    entry.text = ex.is_string() ? ex.get<std::string>() : ex.dump();
    try {
      entry.explanation = explanation_from_json(ex);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<ScoreRow> score_explanations(std::span<const ExplanationEntry> entries, const ActivationSet& activations,
                                         const ConceptSet& concepts, std::span<const std::size_t> split) {
  require(activations.index == concepts.index, ErrorCode::DimensionMismatch,
          "activation and concept files list different inputs");
  std::vector<ScoreRow> rows;
  rows.reserve(entries.size());
  for (const auto& entry : entries) {
    const ActivationVector* a = activations.find(entry.neuron_id);
    if (!a) fail(ErrorCode::InvalidArgument, "no activations for neuron '" + entry.neuron_id + "'");
    rows.push_back({entry.neuron_id, entry.text, explanation_length(entry.explanation),
                    score_explanation(entry.explanation, *a, concepts, split)});
  }
  return rows;
}

void write_scores_csv(std::span<const ScoreRow> rows, std::ostream& out) {
  out << "neuron_id,explanation,length,score\n";
  for (const auto& r : rows) {
    out << csv_field(r.neuron_id) << ',' << csv_field(r.explanation) << ',' << r.length << ','
        << format_double(r.score) << '\n';
  }
}

}  // namespace ngauge
