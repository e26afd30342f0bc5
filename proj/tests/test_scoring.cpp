#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "neurongauge/error.hpp"
#include "neurongauge/explanation.hpp"
#include "neurongauge/scoring.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ngauge;
using testutil::TempDir;
using Op = LogicNode::Op;
using namespace oracle;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("parse: the four forms") {
  CHECK(std::get<SimpleExplanation>(parse_explanation("dog")).concept_id == "dog");
  const auto lin = std::get<LinearExplanation>(parse_explanation("2.7*dog + 1.5*cat"));
  REQUIRE(lin.terms.size() == 2);
  CHECK(lin.terms[0].weight == 2.7);
  CHECK(lin.terms[1].concept_id == "cat");
  CHECK(std::get<LinearExplanation>(parse_explanation("2.7·dog + -1.5 * cat")).terms[1].weight == -1.5);

  const auto comp = std::get<CompositionalExplanation>(parse_explanation("(cat OR dog) AND NOT water"));
  CHECK(comp.root.op == Op::and_op);
  REQUIRE(comp.root.children.size() == 2);
  CHECK(comp.root.children[0].op == Op::or_op);
  CHECK(comp.root.children[1].op == Op::not_op);
  CHECK(comp.root.children[1].children[0].concept_id == "water");

  // NOT binds tighter than AND, AND tighter than OR.
  const auto prec = std::get<CompositionalExplanation>(parse_explanation("a OR NOT b AND c"));
  CHECK(prec.root.op == Op::or_op);
  CHECK(prec.root.children[1].op == Op::and_op);
  CHECK(prec.root.children[1].children[0].op == Op::not_op);

  CHECK(std::get<SimpleExplanation>(parse_explanation("traffic light")).concept_id == "traffic light");
  CHECK(std::get<SimpleExplanation>(parse_explanation("\"AND gate\"")).concept_id == "AND gate");
}

TEST_CASE("parse: errors carry positions") {
  for (const char* bad : {"", "dog AND", "(dog", "2.7*", "dog +", "2*dog + cat", "AND dog", "dog)"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_explanation(bad), SyntaxError);
  }
  try {
    parse_explanation("dog AND (cat");
    FAIL("no error");
  } catch (const SyntaxError& e) {
    CHECK(e.position() == 12);
    CHECK(e.code() == ErrorCode::SyntaxError);
  }
}

TEST_CASE("canonical text parses back to an equivalent explanation") {
  Rng rng(31);
  const ConceptSet cs = random_concepts(rng, 20, 4);
  for (int rep = 0; rep < 200; ++rep) {
    const Explanation e = CompositionalExplanation{random_formula(rng, 4, 4)};
    const Explanation back = parse_explanation(to_text(e));
    const auto p1 = predict(e, cs), p2 = predict(back, cs);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-15));
    CHECK(to_text(back) == to_text(parse_explanation(to_text(back))));
  }
}

TEST_CASE("predict: formula arithmetic") {
  ConceptSet cs;
  cs.index = ProbingIndex(testutil::ids(2));
  cs.vectors = {{"x", {1, 0.5}, Provenance::cheap_estimator},
                {"y", {1, 0.5}, Provenance::cheap_estimator},
                {"z", {0, 0}, Provenance::cheap_estimator}};
  CHECK(predict(parse_explanation("x AND y"), cs)[0] == 1.0);
  CHECK(predict(parse_explanation("x OR y"), cs)[1] == 0.75);
  CHECK(predict(parse_explanation("NOT z"), cs)[0] == 1.0);

  ConceptSet animals;
  animals.index = ProbingIndex(testutil::ids(2));
  animals.vectors = {{"dog", {1, 0}, Provenance::ground_truth}, {"cat", {0, 1}, Provenance::ground_truth}};
  const LinearExplanation lin{{{2.0, "dog"}, {1.5, "cat"}}};
  CHECK(predict(lin, animals)[0] == 2.0);

  ClusteredExplanation cl{{{2.0, 4.0, LogicNode::leaf("dog")}}};
  CHECK(predict(cl, animals)[0] == 3.0);
  CHECK(predict(cl, animals)[1] == 0.0);
}

TEST_CASE("predict: exhaustive truth tables to depth 3") {
  const ConceptSet cs = all_assignments();
  const auto all = formulas(3);
  CHECK(all.size() == 3 + 24 + 2 * 24 * 24);
  for (const auto& f : all) {
    const auto p = predict(CompositionalExplanation{f}, cs);
    for (int i = 0; i < 8; ++i) CHECK(p[i] == (truth_table(f, i) ? 1.0 : 0.0));
  }
}

TEST_CASE("predict: De Morgan on binary inputs, range on soft inputs") {
  const ConceptSet bin = all_assignments();
  const auto lhs = predict(parse_explanation("NOT (a AND b)"), bin);
  const auto rhs = predict(parse_explanation("NOT a OR NOT b"), bin);
  CHECK(lhs == rhs);

  Rng rng(12);
  const ConceptSet cs = random_concepts(rng, 50, 5);
  for (int rep = 0; rep < 200; ++rep) {
    for (double v : predict(CompositionalExplanation{random_formula(rng, 5, 5)}, cs)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("predict: linear and clustered against straight-line oracles") {
  Rng rng(99);
  const std::size_t n = 40;
  const ConceptSet cs = random_concepts(rng, n, 5);
  for (int rep = 0; rep < 1000; ++rep) {
    if (rep % 2 == 0) {
      LinearExplanation lin;
      for (std::size_t t = 0, k = 1 + rng.below(4); t < k; ++t) {
        lin.terms.push_back({4 * rng.normal(), "t" + std::to_string(rng.below(5))});
      }
      const auto p = predict(lin, cs);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(p[i] - linear(lin, cs, i)) <= 1e-9);
      }
    } else {
      ClusteredExplanation cl;
      for (std::size_t j = 0, k = 1 + rng.below(3); j < k; ++j) {
        const double lo = 10 * rng.normal();
        cl.clusters.push_back({lo, lo + 0.1 + 5 * rng.uniform(), random_formula(rng, 3, 5)});
      }
      const auto p = predict(cl, cs);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(p[i] - clustered(cl, cs, i)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("predict: linearity") {
  Rng rng(5);
  const ConceptSet cs = random_concepts(rng, 30, 3);
  const LinearExplanation a{{{1.5, "t0"}}}, b{{{-2.0, "t2"}}}, ab{{{1.5, "t0"}, {-2.0, "t2"}}}, a3{{{4.5, "t0"}}};
  const auto pa = predict(a, cs), pb = predict(b, cs), pab = predict(ab, cs), p3 = predict(a3, cs);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(pab[i] == doctest::Approx(pa[i] + pb[i]));
    CHECK(p3[i] == doctest::Approx(3 * pa[i]));
  }
}

TEST_CASE("predict: errors and split") {
  ConceptSet cs;
  cs.index = ProbingIndex(testutil::ids(4));
  cs.vectors = {{"dog", {0, 1, 0, 1}, Provenance::ground_truth}};
  CHECK(code_of([&] { predict(parse_explanation("cat"), cs); }) == ErrorCode::UnknownConcept);
  CHECK(code_of([&] { predict(LinearExplanation{}, cs); }) == ErrorCode::EmptyExplanation);
  CHECK(code_of([&] { predict(ClusteredExplanation{}, cs); }) == ErrorCode::EmptyExplanation);
  const std::vector<std::size_t> split{3, 0};
  CHECK(predict(parse_explanation("dog"), cs, split) == std::vector<double>{1, 0});
  const std::vector<std::size_t> bad{7};
  CHECK(code_of([&] { predict(parse_explanation("dog"), cs, bad); }) == ErrorCode::IndexOutOfRange);
}

TEST_CASE("explanation length counts unique concepts") {
  CHECK(explanation_length(parse_explanation("dog")) == 1);
  CHECK(explanation_length(parse_explanation("(dog OR cat) AND NOT dog")) == 2);
  CHECK(explanation_length(parse_explanation("1*a + 2*b + 3*a")) == 2);
  CHECK(referenced_concepts(parse_explanation("b AND a")) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("score_explanation") {
  const ActivationVector a{"n", {0.1, 2, 0.3, 4, 0.5}};
  ConceptSet cs;
  cs.index = ProbingIndex(testutil::ids(5));
  std::vector<double> affine, complement;
  for (double v : a.values) affine.push_back(0.1 + v / 5.0);
  for (double v : a.values) complement.push_back(v > 1 ? 0.0 : 1.0);
  cs.vectors = {{"aff", affine, Provenance::cheap_estimator}, {"comp", complement, Provenance::ground_truth}};
  CHECK(score_explanation(parse_explanation("aff"), a, cs) == doctest::Approx(1.0));
  CHECK(score_explanation(parse_explanation("comp"), a, cs) < 0.0);
  cs.vectors.push_back({"flat", {0.5, 0.5, 0.5, 0.5, 0.5}, Provenance::cheap_estimator});
  CHECK(code_of([&] { score_explanation(parse_explanation("flat"), a, cs); }) == ErrorCode::DegenerateSignal);
}

TEST_CASE("explanations file and scores csv") {
  TempDir dir;
  testutil::write_text(dir / "e.jsonl",
                       "{\"neuron_id\":\"n1\",\"explanation\":\"dog, cat\"}\n");
  CHECK(code_of([&] { read_explanations(dir / "e.jsonl"); }) == ErrorCode::SyntaxError);
  testutil::write_text(dir / "e.jsonl",
                       "{\"neuron_id\":\"n1\",\"explanation\":\"dog OR cat\"}\n"
                       "\n"
                       "{\"neuron_id\":\"n1\",\"explanation\":{\"clusters\":[{\"lower\":1,\"upper\":3,\"formula\":\"dog\"}]}}\n");
  const auto entries = read_explanations(dir / "e.jsonl");
  REQUIRE(entries.size() == 2);
  CHECK(std::holds_alternative<ClusteredExplanation>(entries[1].explanation));

  ActivationSet acts;
  acts.index = ProbingIndex(testutil::ids(4));
  acts.vectors = {{"n1", {0, 1, 2, 3}}};
  ConceptSet cs;
  cs.index = acts.index;
  cs.vectors = {{"dog", {0, 0, 1, 1}, Provenance::ground_truth}, {"cat", {0, 1, 0, 1}, Provenance::ground_truth}};
  const auto rows = score_explanations(entries, acts, cs);
  std::ostringstream out;
  write_scores_csv(rows, out);
  const std::string csv = out.str();
  CHECK(csv.rfind("neuron_id,explanation,length,score\nn1,dog OR cat,2,", 0) == 0);
  CHECK(csv.find("\"{\"\"clusters\"\"") != std::string::npos);
}
