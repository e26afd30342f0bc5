#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace ngauge {

/// Node of a compositional formula. AND/OR take two or more children and fold
/// left; NOT takes exactly one.
struct LogicNode {
  enum class Op { leaf, and_op, or_op, not_op };

  Op op = Op::leaf;
  std::string concept_id;  // leaf only
  std::vector<LogicNode> children;

  static LogicNode leaf(std::string concept_id);
  static LogicNode make(Op op, std::vector<LogicNode> children);

  bool operator==(const LogicNode&) const = default;
};

struct SimpleExplanation {
  std::string concept_id;
  bool operator==(const SimpleExplanation&) const = default;
};

struct LinearTerm {
  double weight = 0.0;
  std::string concept_id;
  bool operator==(const LinearTerm&) const = default;
};

struct LinearExplanation {
  std::vector<LinearTerm> terms;
  bool operator==(const LinearExplanation&) const = default;
};

struct CompositionalExplanation {
  LogicNode root;
  bool operator==(const CompositionalExplanation&) const = default;
};

/// Activation range [lower, upper] paired with the formula that selects it.
struct Cluster {
  double lower = 0.0;
  double upper = 0.0;
  LogicNode formula;
  bool operator==(const Cluster&) const = default;
};

struct ClusteredExplanation {
  std::vector<Cluster> clusters;
  bool operator==(const ClusteredExplanation&) const = default;
};

using Explanation = std::variant<SimpleExplanation, LinearExplanation, CompositionalExplanation, ClusteredExplanation>;

/// Text grammar:
///   expr    := linear | logic
///   linear  := term ('+' term)*          term := number ('*' | '·') ident
///   logic   := or;  or := and ('OR' and)*;  and := not ('AND' not)*
///   not     := 'NOT' not | '(' or ')' | ident
///   ident   := [A-Za-z_][A-Za-z0-9_.'-]* (adjacent words join with a space)
///            | "quoted text"
/// Keywords are uppercase. A lone identifier parses as SimpleExplanation.
/// Throws SyntaxError with the byte offset of the problem.
Explanation parse_explanation(std::string_view text);

/// A string is parsed as text; an object {"clusters":[{"lower","upper","formula"}]}
/// gives a clustered explanation whose formulas use the logic grammar.
Explanation explanation_from_json(const nlohmann::json& j);

/// Canonical text form (JSON for clustered explanations).
std::string to_text(const Explanation& e);

/// Sorted unique concept ids referenced by the explanation.
std::vector<std::string> referenced_concepts(const Explanation& e);

/// Complexity ℓ: the number of unique concepts.
std::size_t explanation_length(const Explanation& e);

}  // namespace ngauge
