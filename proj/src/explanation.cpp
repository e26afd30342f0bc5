#include "neurongauge/explanation.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "neurongauge/dataset.hpp"
#include "neurongauge/error.hpp"

namespace ngauge {

namespace {

enum class Tok { number, ident, and_kw, or_kw, not_kw, lparen, rparen, plus, times, end };

struct Token {
  Tok kind = Tok::end;
  std::size_t pos = 0;
  std::string text;
  double value = 0.0;
  bool quoted = false;
};

bool is_middle_dot(std::string_view s, std::size_t i) {
  return i + 1 < s.size() && static_cast<unsigned char>(s[i]) == 0xC2 && static_cast<unsigned char>(s[i + 1]) == 0xB7;
}

bool ident_start(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  return std::isalpha(c) || c == '_' || (c >= 0x80 && !is_middle_dot(s, i));
}

bool ident_char(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  return ident_start(s, i) || std::isdigit(c) || c == '.' || c == '\'' || c == '-';
}

bool number_start(std::string_view s, std::size_t i) {
  auto digit_at = [&](std::size_t j) { return j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])); };
  if (digit_at(i)) return true;
  if (s[i] == '.') return digit_at(i + 1);
  if (s[i] == '-') return digit_at(i + 1) || (i + 1 < s.size() && s[i + 1] == '.' && digit_at(i + 2));
  return false;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (c == '(') {
      t.kind = Tok::lparen;
      ++i;
    } else if (c == ')') {
      t.kind = Tok::rparen;
      ++i;
    } else if (c == '+') {
      t.kind = Tok::plus;
      ++i;
    } else if (c == '*') {
      t.kind = Tok::times;
      ++i;
    } else if (is_middle_dot(s, i)) {
      t.kind = Tok::times;
      i += 2;
    } else if (c == '"') {
      ++i;
      while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        t.text += s[i++];
      }
      if (i >= s.size()) throw SyntaxError(t.pos, "unterminated quoted concept");
      ++i;
      if (t.text.empty()) throw SyntaxError(t.pos, "empty quoted concept");
      t.kind = Tok::ident;
      t.quoted = true;
    } else if (number_start(s, i)) {
      const auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + s.size(), t.value);
      if (ec != std::errc() || !std::isfinite(t.value)) throw SyntaxError(i, "malformed number");
      i = static_cast<std::size_t>(ptr - s.data());
      t.kind = Tok::number;
    } else if (ident_start(s, i)) {
      const std::size_t begin = i;
      while (i < s.size() && ident_char(s, i)) ++i;
      t.text = std::string(s.substr(begin, i - begin));
      if (t.text == "AND") t.kind = Tok::and_kw;
      else if (t.text == "OR") t.kind = Tok::or_kw;
      else if (t.text == "NOT") t.kind = Tok::not_kw;
      else t.kind = Tok::ident;
    } else {
      throw SyntaxError(i, std::string("unexpected character '") + c + "'");
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.pos = s.size();
  out.push_back(end);
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Explanation parse() {
    if (peek().kind == Tok::end) throw SyntaxError(0, "empty explanation");
    if (peek().kind == Tok::number) {
      LinearExplanation lin;
      lin.terms.push_back(term());
      while (peek().kind == Tok::plus) {
        next();
        lin.terms.push_back(term());
      }
      expect_end();
      return lin;
    }
    LogicNode root = logic();
    expect_end();
    if (root.op == LogicNode::Op::leaf) return SimpleExplanation{root.concept_id};
    return CompositionalExplanation{std::move(root)};
  }

  LogicNode logic() { return or_expr(); }

  void expect_end() {
    if (peek().kind != Tok::end) throw SyntaxError(peek().pos, "unexpected token after end of explanation");
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  LinearTerm term() {
    const Token& num = next();
    if (num.kind != Tok::number) throw SyntaxError(num.pos, "expected a weight");
    if (peek().kind != Tok::times) throw SyntaxError(peek().pos, "expected '*' after weight");
    next();
    if (peek().kind != Tok::ident) throw SyntaxError(peek().pos, "expected a concept after '*'");
    return LinearTerm{num.value, ident()};
  }

  std::string ident() {
    const Token& first = next();
    std::string name = first.text;
    if (!first.quoted) {
      while (peek().kind == Tok::ident && !peek().quoted) name += " " + next().text;
    }
    return name;
  }

  LogicNode or_expr() {
    std::vector<LogicNode> parts{and_expr()};
    while (peek().kind == Tok::or_kw) {
      next();
      parts.push_back(and_expr());
    }
    return parts.size() == 1 ? std::move(parts.front()) : LogicNode::make(LogicNode::Op::or_op, std::move(parts));
  }

  LogicNode and_expr() {
    std::vector<LogicNode> parts{not_expr()};
    while (peek().kind == Tok::and_kw) {
      next();
      parts.push_back(not_expr());
    }
    return parts.size() == 1 ? std::move(parts.front()) : LogicNode::make(LogicNode::Op::and_op, std::move(parts));
  }

  LogicNode not_expr() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::not_kw:
        next();
        return LogicNode::make(LogicNode::Op::not_op, {not_expr()});
      case Tok::lparen: {
        next();
        LogicNode inner = or_expr();
        if (peek().kind != Tok::rparen) throw SyntaxError(peek().pos, "expected ')'");
        next();
        return inner;
      }
      case Tok::ident: return LogicNode::leaf(ident());
      case Tok::end: throw SyntaxError(t.pos, "unexpected end of explanation");
      case Tok::number: throw SyntaxError(t.pos, "weights are only allowed in linear explanations");
      default: throw SyntaxError(t.pos, "expected a concept, 'NOT' or '('");
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

LogicNode parse_formula(std::string_view text) {
  Parser p(text);
  LogicNode root = p.logic();
  p.expect_end();
  return root;
}

bool plain_ident(const std::string& id) {
  if (id.empty() || id == "AND" || id == "OR" || id == "NOT") return false;
  if (!ident_start(id, 0)) return false;
  for (std::size_t i = 0; i < id.size(); ++i) {
    if (!ident_char(id, i)) return false;
  }
  return true;
}

std::string quote_ident(const std::string& id) {
  if (plain_ident(id)) return id;
  std::string out = "\"";
  for (char c : id) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

int precedence(const LogicNode& n) {
  switch (n.op) {
    case LogicNode::Op::or_op: return 1;
    case LogicNode::Op::and_op: return 2;
    case LogicNode::Op::not_op: return 3;
    case LogicNode::Op::leaf: return 4;
  }
  return 4;
}

std::string formula_text(const LogicNode& n) {
  if (n.op == LogicNode::Op::leaf) return quote_ident(n.concept_id);
  const int prec = precedence(n);
  auto child = [&](const LogicNode& c, bool strict) {
    const bool paren = strict ? precedence(c) <= prec : precedence(c) < prec;
    return paren ? "(" + formula_text(c) + ")" : formula_text(c);
  };
  if (n.op == LogicNode::Op::not_op) return "NOT " + child(n.children.at(0), false);
  const char* kw = n.op == LogicNode::Op::and_op ? " AND " : " OR ";
  std::string out;
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (i) out += kw;
    out += child(n.children[i], true);
  }
  return out;
}

void collect(const LogicNode& n, std::set<std::string>& out) {
  if (n.op == LogicNode::Op::leaf) out.insert(n.concept_id);
  for (const auto& c : n.children) collect(c, out);
}

}  // namespace

LogicNode LogicNode::leaf(std::string concept_id) {
  LogicNode n;
  n.concept_id = std::move(concept_id);
  return n;
}

LogicNode LogicNode::make(Op op, std::vector<LogicNode> children) {
  LogicNode n;
  n.op = op;
  n.children = std::move(children);
  return n;
}

Explanation parse_explanation(std::string_view text) { return Parser(text).parse(); }

Explanation explanation_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_explanation(j.get_ref<const std::string&>());
  if (!j.is_object() || !j.contains("clusters")) {
    fail(ErrorCode::ParseError, "explanation must be a string or an object with \"clusters\"");
  }
  const auto& clusters = j["clusters"];
  if (!clusters.is_array()) fail(ErrorCode::ParseError, "\"clusters\" must be an array");
  if (clusters.empty()) fail(ErrorCode::EmptyExplanation, "clustered explanation has no clusters");
  ClusteredExplanation out;
  for (const auto& c : clusters) {
    Cluster cl;
    try {
      cl.lower = c.at("lower").get<double>();
      cl.upper = c.at("upper").get<double>();
      cl.formula = parse_formula(c.at("formula").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("cluster: ") + e.what());
    }
    require(std::isfinite(cl.lower) && std::isfinite(cl.upper) && cl.lower < cl.upper, ErrorCode::ParseError,
            "cluster bounds must be finite with lower < upper");
    out.clusters.push_back(std::move(cl));
  }
  return out;
}

std::string to_text(const Explanation& e) {
  struct Visitor {
    std::string operator()(const SimpleExplanation& s) const { return quote_ident(s.concept_id); }
    std::string operator()(const LinearExplanation& l) const {
      std::string out;
      for (std::size_t i = 0; i < l.terms.size(); ++i) {
        if (i) out += " + ";
        out += format_double(l.terms[i].weight) + "*" + quote_ident(l.terms[i].concept_id);
      }
      return out;
    }
    std::string operator()(const CompositionalExplanation& c) const { return formula_text(c.root); }
    std::string operator()(const ClusteredExplanation& c) const {
      nlohmann::json clusters = nlohmann::json::array();
      for (const auto& cl : c.clusters) {
        clusters.push_back({{"lower", cl.lower}, {"upper", cl.upper}, {"formula", formula_text(cl.formula)}});
      }
      return nlohmann::json{{"clusters", clusters}}.dump();
    }
  };
  return std::visit(Visitor{}, e);
}

std::vector<std::string> referenced_concepts(const Explanation& e) {
  std::set<std::string> ids;
  struct Visitor {
    std::set<std::string>& ids;
    void operator()(const SimpleExplanation& s) const { ids.insert(s.concept_id); }
    void operator()(const LinearExplanation& l) const {
      for (const auto& t : l.terms) ids.insert(t.concept_id);
    }
    void operator()(const CompositionalExplanation& c) const { collect(c.root, ids); }
    void operator()(const ClusteredExplanation& c) const {
      for (const auto& cl : c.clusters) collect(cl.formula, ids);
    }
  };
  std::visit(Visitor{ids}, e);
  return {ids.begin(), ids.end()};
}

std::size_t explanation_length(const Explanation& e) { return referenced_concepts(e).size(); }

}  // namespace ngauge
