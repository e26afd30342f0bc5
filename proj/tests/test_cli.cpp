#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "neurongauge/cli.hpp"
#include "support.hpp"

using nlohmann::json;
using testutil::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "neurongauge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = ngauge::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// One small benchmark workspace shared by every case.
const TempDir& workspace() {
  static TempDir dir;
  static const bool made = [] {
    const auto r = cli({"benchmark", "--out", (dir / "ws").string(), "--inputs", "3000", "--neurons", "2",
                        "--prevalence", "0.05", "--seed", "3"});
    REQUIRE(r.code == 0);
    return true;
  }();
  (void)made;
  return dir;
}

std::string ws(const std::string& file) { return (workspace() / "ws" / file).string(); }

}  // namespace

TEST_CASE("cli: benchmark summary and files") {
  TempDir d;
  const auto r = cli({"benchmark", "--out", (d / "b").string(), "--inputs", "500", "--neurons", "1", "--seed", "1"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("neurons").at(0).contains("rho_gt"));
  for (const char* f : {"activations.csv", "truth.csv", "guide.csv", "workspace.manifest.json"}) {
    CHECK(std::filesystem::exists(d / "b" / f));
  }
}

TEST_CASE("cli: estimate prints the result as JSON") {
  const auto r = cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--guide",
                      ws("guide.csv"), "--strategy", "guided", "--labels", ws("truth.csv"), "--concept", "c0", "--seed",
                      "9"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("neuron_id") == "n0");
  CHECK(j.at("concept_id") == "c0");
  CHECK(j.at("strategy") == "guided");
  CHECK(j.at("sample_size") == 90);
  CHECK(std::abs(j.at("rho").get<double>()) <= 1.0);

  const auto exact = cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--labels",
                          ws("truth.csv"), "--concept", "c0", "--exact"});
  REQUIRE(exact.code == 0);
  CHECK(json::parse(exact.out).at("exact") == true);
}

TEST_CASE("cli: plan then estimate from the plan") {
  TempDir d;
  const auto p = cli({"plan", "--activations", ws("activations.csv"), "--neuron", "n1", "--guide", ws("guide.csv"),
                      "--concept", "c1", "--strategy", "guided", "--n-inputs", "40", "--seed", "2", "--out",
                      (d / "plan.json").string()});
  REQUIRE(p.code == 0);
  CHECK(json::parse(p.out).at("sample_size") == 40);
  const auto e = cli({"estimate", "--activations", ws("activations.csv"), "--plan", (d / "plan.json").string(),
                      "--labels", ws("truth.csv"), "--concept", "c1"});
  REQUIRE(e.code == 0);
  CHECK(json::parse(e.out).at("neuron_id") == "n1");
}

TEST_CASE("cli: exit codes") {
  SUBCASE("missing file is 2") {
    const auto r = cli({"estimate", "--activations", "/nonexistent/a.csv", "--labels", ws("truth.csv"), "--exact"});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: IoError:", 0) == 0);
  }
  SUBCASE("malformed input is 3") {
    TempDir d;
    testutil::write_text(d / "labels.csv", "input_id,c0\nx0,1\nx1\n");
    const auto r = cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--labels",
                        (d / "labels.csv").string(), "--exact"});
    CHECK(r.code == 3);
  }
  SUBCASE("all-equal labels are 4") {
    TempDir d;
    std::string text = "input_id,c0\n";
    for (int i = 0; i < 3000; ++i) text += "x" + std::to_string(i) + ",0\n";
    testutil::write_text(d / "zeros.csv", text);
    const auto r = cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--labels",
                        (d / "zeros.csv").string(), "--exact"});
    CHECK(r.code == 4);
    CHECK(r.err.find("Degenerate") != std::string::npos);
  }
  SUBCASE("usage and config errors are 5") {
    CHECK(cli({"estimate", "--bogus"}).code == 5);
    CHECK(cli({}).code == 5);
    CHECK(cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--labels", ws("truth.csv"),
               "--concept", "c0", "--strategy", "best"})
              .code == 5);
  }
  SUBCASE("help is 0") { CHECK(cli({"--help"}).code == 0); }
}

TEST_CASE("cli: simulate writes the cost/error CSV") {
  TempDir d;
  testutil::write_text(d / "cfg.json",
                       R"({"trials":2,"raters":[1,2],"n_inputs":[40],"benchmark":{"inputs":2000,"neurons":2,"prevalence":0.05},"seed":4})");
  const auto r = cli({"simulate", "--config", (d / "cfg.json").string(), "--out", (d / "sim.csv").string()});
  REQUIRE(r.code == 0);
  const std::string csv = testutil::read_text(d / "sim.csv");
  CHECK(csv.rfind("strategy,aggregation,m,n_inputs,cost_usd,rce,stderr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(std::filesystem::exists(d / "sim.csv.manifest.json"));
}

TEST_CASE("cli: sweep with a budget prints the choice") {
  TempDir d;
  testutil::write_text(d / "cfg.json",
                       R"({"trials":2,"raters":[1,2],"n_inputs":[30,60],"benchmark":{"inputs":2000,"neurons":2,"prevalence":0.05},"seed":4})");
  const auto r = cli({"sweep", "--config", (d / "cfg.json").string(), "--budget", "1.0"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  // Money is printed as an exact decimal string.
  CHECK(std::stod(j.at("cost_usd").get<std::string>()) <= 1.0);
  CHECK(j.contains("expected_rce"));
}

TEST_CASE("cli: score") {
  TempDir d;
  testutil::write_text(d / "ex.jsonl",
                       "{\"neuron_id\":\"n0\",\"explanation\":\"c0\"}\n"
                       "{\"neuron_id\":\"n0\",\"explanation\":\"c0 OR c1\"}\n"
                       "{\"neuron_id\":\"n1\",\"explanation\":\"0.5*c1 + 0.2*c0\"}\n");
  const auto r = cli({"score", "--explanations", (d / "ex.jsonl").string(), "--concepts", ws("truth.csv"),
                      "--activations", ws("activations.csv")});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(header == "neuron_id,explanation,length,score");
  CHECK(first.rfind("n0,c0,1,", 0) == 0);

  // A single-concept explanation scores the exact correlation.
  const auto exact = cli({"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--labels",
                          ws("truth.csv"), "--concept", "c0", "--exact"});
  const double rho = json::parse(exact.out).at("rho");
  CHECK(std::stod(first.substr(first.rfind(',') + 1)) == doctest::Approx(rho).epsilon(1e-12));

  testutil::write_text(d / "bad.jsonl", "{\"neuron_id\":\"n0\",\"explanation\":\"c0 AND (\"}\n");
  CHECK(cli({"score", "--explanations", (d / "bad.jsonl").string(), "--concepts", ws("truth.csv"), "--activations",
             ws("activations.csv")})
            .code == 3);
}

TEST_CASE("cli: aggregate and calibrate") {
  TempDir d;
  std::string log;
  for (int i = 0; i < 20; ++i) {
    for (int r = 0; r < 2; ++r) {
      json rec{{"session", "s1"}, {"input_id", "x" + std::to_string(i)}, {"concept", "c0"},
               {"rater", "r" + std::to_string(r)}, {"rating", (i == 3 && r == 0) ? 1 : 0}, {"ts", "t"}};
      log += rec.dump() + "\n";
    }
  }
  testutil::write_text(d / "log.jsonl", log);
  const auto a = cli({"aggregate", "--ratings", (d / "log.jsonl").string(), "--method", "majority"});
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("input_id,c0\n", 0) == 0);
  CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 21);

  const auto c = cli({"calibrate", "--ratings", (d / "log.jsonl").string(), "--truth", ws("truth.csv")});
  REQUIRE(c.code == 0);
  const json j = json::parse(c.out);
  CHECK(j.at("n_ratings") == 40);
  CHECK(j.contains("eta"));
}

TEST_CASE("cli: repeated runs are byte-identical") {
  TempDir d;
  testutil::write_text(d / "cfg.json",
                       R"({"trials":2,"raters":[1,2],"n_inputs":[40],"benchmark":{"inputs":2000,"neurons":2,"prevalence":0.05},"seed":4})");
  const std::vector<std::vector<std::string>> commands{
      {"plan", "--activations", ws("activations.csv"), "--neuron", "n0", "--guide", ws("guide.csv"), "--concept", "c0",
       "--strategy", "guided", "--seed", "5"},
      {"estimate", "--activations", ws("activations.csv"), "--neuron", "n0", "--guide", ws("guide.csv"), "--strategy",
       "guided", "--labels", ws("truth.csv"), "--concept", "c0", "--seed", "5"},
      {"simulate", "--config", (d / "cfg.json").string(), "--jobs", "3"},
      {"sweep", "--config", (d / "cfg.json").string(), "--betas", "0.01,0.1"},
  };
  for (const auto& c : commands) {
    const auto a = cli(c);
    const auto b = cli(c);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }
}
