#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "neurongauge/benchmark.hpp"
#include "neurongauge/http_server.hpp"
#include "neurongauge/plan_io.hpp"
#include "neurongauge/service.hpp"
#include "support.hpp"

using namespace ngauge;
using nlohmann::json;
using testutil::TempDir;

namespace {

const Workspace& bench() {
  static const Workspace ws = [] {
    BenchmarkSpec spec;
    spec.inputs = 20000;
    spec.neurons = 2;
    spec.seed = 17;
    return make_benchmark(spec);
  }();
  return ws;
}

// The service sees activations and guides only.
Workspace service_view() {
  Workspace ws = bench();
  ws.truth.clear();
  return ws;
}

struct FakeClock {
  std::shared_ptr<std::chrono::system_clock::time_point> t =
      std::make_shared<std::chrono::system_clock::time_point>(std::chrono::sys_days{std::chrono::year{2026} / 1 / 1});
  AnnotationService::Clock fn() const {
    auto p = t;
    return [p] { return *p; };
  }
  void advance(std::chrono::seconds s) const { *t += s; }
};

std::vector<int> truth_bits(const json& task) {
  const auto* truth = bench().truth_for("c0");
  std::vector<int> bits;
  for (const auto& in : task.at("inputs")) {
    bits.push_back(static_cast<int>(truth->values[*bench().index.find(in.at("input_id").get<std::string>())]));
  }
  return bits;
}

json submission(const json& task, const std::vector<int>& bits) {
  return json{{"task_id", task.at("task_id")}, {"ratings", bits}};
}

// Drives every task for every rater slot with noiseless raters.
void rate_everything(AnnotationService& svc, const std::string& id, std::size_t m) {
  for (std::size_t r = 1; r <= m; ++r) {
    const std::string rater = "r" + std::to_string(r);
    for (;;) {
      const auto t = svc.next_task(id, rater);
      if (t.status == 204) break;
      REQUIRE(t.status == 200);
      const auto s = svc.submit_ratings(id, rater, submission(t.body, truth_bits(t.body)));
      REQUIRE(s.status == 200);
    }
  }
}

}  // namespace

TEST_CASE("create_session: defaults, validation, unknown neuron") {
  AnnotationService svc(service_view(), {});
  const auto ok = svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"strategy", "uniform"}, {"seed", 3}});
  REQUIRE(ok.status == 201);
  CHECK(ok.body.at("m") == 2);
  CHECK(ok.body.at("n_inputs") == 90);
  REQUIRE(ok.body.at("distinct_inputs") == 90);
  CHECK(ok.body.at("tasks") == 6);
  CHECK(ok.body.at("task_size") == 15);

  const auto one = svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"n_inputs", 15}, {"m", 1},
                                           {"strategy", "uniform"}, {"seed", 1}});
  REQUIRE(one.status == 201);
  CHECK(one.body.at("tasks") == 1);
  CHECK(one.body.at("session_id") != ok.body.at("session_id"));

  CHECK(svc.create_session(json{{"neuron_id", "nope"}, {"concept", "c0"}}).status == 404);
  CHECK(svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"n_inputs", 1}}).status == 400);
  CHECK(svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"eta", 0.7}}).status == 400);
  CHECK(svc.create_session(json{{"neuron_id", "n0"}, {"concept", "zzz"}}).status == 400);
  CHECK(svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"strategy", "oracle"}}).status == 400);
  const auto bad = svc.create_session(json{{"concept", "c0"}});
  CHECK(bad.status == 400);
  CHECK(bad.body.contains("error"));
  CHECK(bad.body.contains("message"));
}

TEST_CASE("tasks, leases and submissions") {
  FakeClock clock;
  AnnotationService::Options opts;
  opts.clock = clock.fn();
  AnnotationService svc(service_view(), opts);
  const std::string id =
      svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"m", 1}, {"n_inputs", 30}, {"strategy", "uniform"},
                              {"seed", 4}})
          .body.at("session_id");

  CHECK(svc.current_estimate(id).status == 425);
  CHECK(svc.next_task("s999999", "alice").status == 404);

  const auto t1 = svc.next_task(id, "alice");
  REQUIRE(t1.status == 200);
  CHECK(t1.body.at("inputs").size() == 15);
  CHECK(t1.body.at("concept") == "c0");
  CHECK(t1.body.at("lease_seconds") == 600);
  CHECK(svc.next_task(id, "alice").status == 409);

  SUBCASE("wrong arity and non-bits are 422") {
    auto bits = truth_bits(t1.body);
    bits.pop_back();
    CHECK(svc.submit_ratings(id, "alice", submission(t1.body, bits)).status == 422);
    bits.push_back(2);
    CHECK(svc.submit_ratings(id, "alice", submission(t1.body, bits)).status == 422);
  }

  SUBCASE("accepted then idempotent") {
    const auto first = svc.submit_ratings(id, "alice", submission(t1.body, truth_bits(t1.body)));
    CHECK(first.status == 200);
    CHECK(first.body.at("accepted") == 15);
    const auto again = svc.submit_ratings(id, "alice", submission(t1.body, truth_bits(t1.body)));
    CHECK(again.status == 200);
    CHECK(again.body.at("accepted") == 0);
    CHECK(again.body.at("duplicate") == true);
  }

  SUBCASE("no lease is 409, unknown task 404") {
    CHECK(svc.submit_ratings(id, "bob", submission(t1.body, truth_bits(t1.body))).status == 409);
    CHECK(svc.submit_ratings(id, "alice", json{{"task_id", "t99"}, {"ratings", json::array()}}).status == 404);
  }

  SUBCASE("expired lease is 410 and the task goes to someone else") {
    // With m=1, the other task is the only one bob can take while alice's lease is live.
    const auto t2 = svc.next_task(id, "bob");
    REQUIRE(t2.status == 200);
    CHECK(t2.body.at("task_id") != t1.body.at("task_id"));
    CHECK(svc.next_task(id, "carol").status == 204);
    clock.advance(std::chrono::seconds(601));
    CHECK(svc.submit_ratings(id, "alice", submission(t1.body, truth_bits(t1.body))).status == 410);
    const auto reissued = svc.next_task(id, "carol");
    REQUIRE(reissued.status == 200);
    CHECK(reissued.body.at("task_id") == t1.body.at("task_id"));
  }

  SUBCASE("rater with everything submitted gets 204") {
    REQUIRE(svc.submit_ratings(id, "alice", submission(t1.body, truth_bits(t1.body))).status == 200);
    const auto t2 = svc.next_task(id, "alice");
    REQUIRE(t2.status == 200);
    REQUIRE(svc.submit_ratings(id, "alice", submission(t2.body, truth_bits(t2.body))).status == 200);
    CHECK(svc.next_task(id, "alice").status == 204);
    CHECK(svc.session_status(id).body.at("status") == "complete");
  }
}

TEST_CASE("noiseless replay matches the offline estimate") {
  AnnotationService svc(service_view(), {});
  const auto created = svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"eta", 0.0}, {"seed", 12}});
  REQUIRE(created.status == 201);
  const std::string id = created.body.at("session_id");

  std::size_t last_labeled = 0;
  for (std::size_t r = 1; r <= 2; ++r) {
    const std::string rater = "r" + std::to_string(r);
    for (;;) {
      const auto t = svc.next_task(id, rater);
      if (t.status == 204) break;
      REQUIRE(svc.submit_ratings(id, rater, submission(t.body, truth_bits(t.body))).status == 200);
      const auto e = svc.current_estimate(id);
      if (e.status == 200) {
        const std::size_t n = e.body.at("n_labeled");
        CHECK(n >= last_labeled);
        last_labeled = n;
      }
    }
  }
  const auto est = svc.current_estimate(id);
  REQUIRE(est.status == 200);
  CHECK(est.body.at("partial") == false);
  CHECK(est.body.at("complete") == true);

  const PlanDocument doc = plan_document_from_json(svc.plan(id).body);
  const auto labels = gather_labels(*doc.sample, bench().truth_for("c0")->values);
  const auto offline = estimate_correlation(*bench().activation("n0"), *doc.sample, labels);
  CHECK(std::abs(est.body.at("rho").get<double>() - offline.rho) <= 1e-9);

  // The exported log through the offline aggregation pipeline gives the same number.
  std::vector<RatingRecord> recs;
  std::istringstream lines(svc.export_ratings(id).text);
  for (std::string line; std::getline(lines, line);) recs.push_back(rating_record_from_json(json::parse(line)));
  CHECK(recs.size() == 2 * created.body.at("distinct_inputs").get<std::size_t>());
  std::map<std::size_t, RatingSet> by_input;
  for (auto& s : group_ratings(recs, bench().index, "c0")) {
    CHECK(s.size() == 2);
    by_input.emplace(s.input_index, std::move(s));
  }
  const auto replay = estimate_from_ratings(CorrelationEstimator(*bench().activation("n0")), *doc.sample, by_input,
                                            NoiseModel{0.0}, Prior::estimator(bench().guide_for("c0")->values));
  REQUIRE(replay.has_value());
  CHECK(replay->result.rho == est.body.at("rho").get<double>());
}

TEST_CASE("restart from disk reaches the same state") {
  TempDir dir;
  AnnotationService::Options opts;
  opts.data_dir = dir.path();
  json before_est, before_status;
  std::string id;
  {
    AnnotationService svc(service_view(), opts);
    id = svc.create_session(json{{"neuron_id", "n1"}, {"concept", "c1"}, {"m", 2}, {"seed", 8}}).body.at("session_id");
    // Rate all tasks once plus a partial second pass.
    rate_everything(svc, id, 1);
    const auto t = svc.next_task(id, "late");
    REQUIRE(t.status == 200);
    const auto* truth = bench().truth_for("c1");
    std::vector<int> bits;
    for (const auto& in : t.body.at("inputs")) {
      bits.push_back(static_cast<int>(truth->values[*bench().index.find(in.at("input_id").get<std::string>())]));
    }
    REQUIRE(svc.submit_ratings(id, "late", submission(t.body, bits)).status == 200);
    before_est = svc.current_estimate(id).body;
    before_status = svc.session_status(id).body;
  }
  AnnotationService again(service_view(), opts);
  CHECK(again.restore() == 1);
  CHECK(again.current_estimate(id).body == before_est);
  CHECK(again.session_status(id).body == before_status);
  // New sessions do not reuse restored ids.
  const auto next = again.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}});
  CHECK(next.body.at("session_id") != id);
}

TEST_CASE("concurrent raters never exceed m ratings per input") {
  AnnotationService svc(service_view(), {});
  const std::string id =
      svc.create_session(json{{"neuron_id", "n0"}, {"concept", "c0"}, {"m", 3}, {"seed", 2}}).body.at("session_id");
  std::vector<std::thread> raters;
  std::atomic<int> accepted{0};
  for (int r = 0; r < 6; ++r) {
    raters.emplace_back([&, r] {
      const std::string rater = "w" + std::to_string(r);
      for (int step = 0; step < 20; ++step) {
        const auto t = svc.next_task(id, rater);
        if (t.status != 200) break;
        const auto s = svc.submit_ratings(id, rater, submission(t.body, truth_bits(t.body)));
        if (s.status == 200) accepted += s.body.at("accepted").get<int>();
      }
    });
  }
  for (auto& t : raters) t.join();
  std::vector<RatingRecord> recs;
  std::istringstream lines(svc.export_ratings(id).text);
  for (std::string line; std::getline(lines, line);) recs.push_back(rating_record_from_json(json::parse(line)));
  CHECK(static_cast<int>(recs.size()) == accepted.load());
  for (const auto& s : group_ratings(recs, bench().index, "c0")) {
    CHECK(s.size() <= 3);
    std::set<std::string> distinct(s.rater_ids.begin(), s.rater_ids.end());
    CHECK(distinct.size() == s.size());
  }
  CHECK(svc.session_status(id).body.at("status") == "complete");
}

TEST_CASE("http front end") {
  AnnotationService svc(service_view(), {});
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread loop([&] { server.serve(); });

  httplib::Client cli("127.0.0.1", port);
  for (int i = 0; i < 100 && !cli.Get("/sessions/none"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));

  auto created = cli.Post("/sessions", R"({"neuron_id":"n0","concept":"c0","n_inputs":15,"m":1,"seed":5})",
                          "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("session_id");

  auto early = cli.Get("/sessions/" + id + "/estimate");
  CHECK(early->status == 425);
  CHECK(json::parse(early->body).at("error") == "too_early");

  auto task = cli.Get("/sessions/" + id + "/task?rater=alice");
  REQUIRE(task);
  REQUIRE(task->status == 200);
  CHECK(task->get_header_value("Access-Control-Allow-Origin") == "*");
  const json t = json::parse(task->body);

  json bad = submission(t, truth_bits(t));
  bad["ratings"].erase(0);
  auto rejected = cli.Post("/sessions/" + id + "/ratings", {{"X-Rater-Id", "alice"}}, bad.dump(), "application/json");
  CHECK(rejected->status == 422);

  auto sent = cli.Post("/sessions/" + id + "/ratings", {{"X-Rater-Id", "alice"}}, submission(t, truth_bits(t)).dump(),
                       "application/json");
  REQUIRE(sent);
  CHECK(sent->status == 200);
  CHECK(json::parse(sent->body).at("accepted") == 15);

  CHECK(cli.Get("/sessions/" + id + "/task?rater=alice")->status == 204);
  auto exported = cli.Get("/sessions/" + id + "/export");
  CHECK(std::count(exported->body.begin(), exported->body.end(), '\n') == 15);
  CHECK(cli.Get("/sessions/" + id + "/plan")->status == 200);
  CHECK(cli.Get("/sessions/" + id)->status == 200);
  CHECK(cli.Get("/sessions/s404")->status == 404);
  CHECK(cli.Post("/sessions", "{not json", "application/json")->status == 400);

  server.stop();
  loop.join();
}
