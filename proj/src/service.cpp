#include "neurongauge/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "neurongauge/error.hpp"
#include "neurongauge/plan_io.hpp"
#include "neurongauge/random.hpp"

namespace ngauge {

namespace {

using TimePoint = std::chrono::system_clock::time_point;

std::string error_slug(ErrorCode code) {
  std::string out;
  for (char c : to_string(code)) {
    if (std::isupper(static_cast<unsigned char>(c)) && !out.empty()) out += '_';
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string session_name(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(n));
  return buf;
}

std::optional<std::uint64_t> session_number(const std::string& id) {
  if (id.size() < 2 || id[0] != 's') return std::nullopt;
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return std::nullopt;
    n = n * 10 + static_cast<std::uint64_t>(id[i] - '0');
  }
  return n;
}

SessionParams params_from_json(const nlohmann::json& body) {
  if (!body.is_object()) fail(ErrorCode::InvalidArgument, "request body must be a JSON object");
  SessionParams p;
  try {
    p.neuron_id = body.at("neuron_id").get<std::string>();
    p.concept_id = body.at("concept").get<std::string>();
    if (body.contains("strategy")) p.strategy = strategy_from_string(body["strategy"].get<std::string>());
    if (body.contains("epsilon")) p.epsilon = body["epsilon"].get<double>();
    if (body.contains("n_inputs")) p.n_inputs = body["n_inputs"].get<std::size_t>();
    if (body.contains("m")) p.raters = body["m"].get<std::size_t>();
    if (body.contains("prior")) {
      const auto prior = body["prior"].get<std::string>();
      if (prior == "estimator") p.prior = PriorKind::estimator;
      else if (prior == "uniform") p.prior = PriorKind::uniform;
      else fail(ErrorCode::InvalidArgument, "prior must be 'uniform' or 'estimator'");
    }
    if (body.contains("beta")) p.beta = body["beta"].get<double>();
    if (body.contains("eta")) p.eta = body["eta"].get<double>();
    if (body.contains("seed")) p.seed = body["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("invalid session request: ") + e.what());
  }
  return p;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

ServiceResponse ServiceResponse::json(int status, nlohmann::json body) {
  ServiceResponse r;
  r.status = status;
  r.body = std::move(body);
  return r;
}

ServiceResponse ServiceResponse::error(int status, std::string code, std::string message) {
  return json(status, {{"error", std::move(code)}, {"message", std::move(message)}});
}

nlohmann::json SessionParams::to_json() const {
  return nlohmann::json{{"neuron_id", neuron_id},
                        {"concept", concept_id},
                        {"strategy", to_string(strategy)},
                        {"epsilon", epsilon},
                        {"n_inputs", n_inputs},
                        {"m", raters},
                        {"prior", prior == PriorKind::estimator ? "estimator" : "uniform"},
                        {"beta", beta},
                        {"eta", eta},
                        {"seed", seed}};
}

std::optional<PipelineEstimate> estimate_from_ratings(const CorrelationEstimator& estimator, const Sample& sample,
                                                      const std::map<std::size_t, RatingSet>& ratings,
                                                      const NoiseModel& noise, const Prior& prior) {
  std::map<std::size_t, double> label_of;
  for (const auto& [idx, set] : ratings) label_of.emplace(idx, aggregate_bayes(set, noise, prior));

  Sample labeled;
  labeled.seed = sample.seed;
  std::vector<double> labels;
  for (std::size_t j = 0; j < sample.size(); ++j) {
    const auto it = label_of.find(sample.indices[j]);
    if (it == label_of.end()) continue;
    labeled.indices.push_back(sample.indices[j]);
    labeled.weights.push_back(sample.weights[j]);
    labels.push_back(it->second);
  }
  if (labeled.size() < 2) return std::nullopt;
  PipelineEstimate out;
  try {
    out.result = estimator.estimate(labeled, labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateConcept) throw;
    return std::nullopt;
  }
  out.labeled_inputs = label_of.size();
  return out;
}

AnnotationService::AnnotationService(Workspace workspace, Options options)
    : workspace_(std::move(workspace)), options_(std::move(options)) {
  require(options_.task_size >= 1, ErrorCode::Config, "task size must be at least 1");
  require(options_.lease.count() > 0, ErrorCode::Config, "lease duration must be positive");
  if (!options_.data_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options_.data_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + options_.data_dir.string() + ": " + ec.message());
  }
}

AnnotationService::~AnnotationService() = default;

std::chrono::system_clock::time_point AnnotationService::now() const {
  return options_.clock ? options_.clock() : std::chrono::system_clock::now();
}

std::filesystem::path AnnotationService::manifest_path(const std::string& id) const {
  return options_.data_dir / (id + ".session.json");
}

std::filesystem::path AnnotationService::log_path(const std::string& id) const {
  return options_.data_dir / (id + ".ratings.jsonl");
}

AnnotationService::Session* AnnotationService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

std::unique_ptr<AnnotationService::Session> AnnotationService::build_session(std::string id,
                                                                           const SessionParams& params,
                                                                           std::size_t task_size) const {
  require(!params.concept_id.empty(), ErrorCode::InvalidArgument, "concept must be non-empty");
  require(params.n_inputs >= 2, ErrorCode::InvalidArgument, "n_inputs must be at least 2");
  require(params.raters >= 1, ErrorCode::InvalidArgument, "m must be at least 1");
  require(params.eta >= 0.0 && params.eta < 0.5, ErrorCode::InvalidArgument, "eta must lie in [0, 0.5)");
  require(params.beta > 0.0 && params.beta < 1.0, ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
  require(params.strategy != Strategy::oracle, ErrorCode::InvalidArgument,
          "the oracle strategy needs ground truth and is for simulation only");

  const ActivationVector* a = workspace_.activation(params.neuron_id);
  if (!a) fail(ErrorCode::InvalidArgument, "unknown neuron '" + params.neuron_id + "'");
  const ConceptVector* guide = workspace_.guide_for(params.concept_id);
  if (!guide && (params.strategy == Strategy::guided || params.prior == PriorKind::estimator)) {
    fail(ErrorCode::MissingGuide, "no cheap-estimator scores for concept '" + params.concept_id + "'");
  }

  auto s = std::make_unique<Session>();
  s->id = std::move(id);
  s->params = params;
  s->task_size = task_size;
  s->guide = guide;
  s->plan = build_plan(*a, guide, params.strategy, params.epsilon);
  s->sample = draw_sample(s->plan, params.n_inputs, params.seed);
  s->estimator.emplace(*a);

  std::vector<std::size_t> distinct;
  for (std::size_t idx : s->sample.indices) {
    if (s->task_of_input.emplace(idx, 0).second) distinct.push_back(idx);
  }
  for (std::size_t start = 0; start < distinct.size(); start += task_size) {
    Task t;
    t.id = "t" + std::to_string(s->tasks.size() + 1);
    t.inputs.assign(distinct.begin() + static_cast<std::ptrdiff_t>(start),
                    distinct.begin() + static_cast<std::ptrdiff_t>(std::min(distinct.size(), start + task_size)));
    for (std::size_t idx : t.inputs) s->task_of_input[idx] = s->tasks.size();
    s->tasks.push_back(std::move(t));
  }
  refresh_snapshot(*s);
  return s;
}

void AnnotationService::persist_manifest(const Session& s) const {
  if (options_.data_dir.empty()) return;
  nlohmann::json j = s.params.to_json();
  j["session_id"] = s.id;
  j["task_size"] = s.task_size;
  j["indices"] = s.sample.indices;
  j["created_at"] = iso8601(now());
  write_file_atomically(manifest_path(s.id), j.dump(2) + "\n");
  std::ofstream touch(log_path(s.id), std::ios::app);
  if (!touch) fail(ErrorCode::Io, "cannot create " + log_path(s.id).string());
}

bool AnnotationService::complete(const Session& s) const {
  return std::all_of(s.tasks.begin(), s.tasks.end(),
                     [&](const Task& t) { return t.submitted.size() >= s.params.raters; });
}

std::size_t AnnotationService::active_leases(const Session& s, std::size_t task, TimePoint at) const {
  std::size_t n = 0;
  for (const auto& [rater, lease] : s.leases) {
    if (lease.task == task && at < lease.expires) ++n;
  }
  return n;
}

void AnnotationService::apply_record(Session& s, const RatingRecord& r) const {
  const auto pos = workspace_.index.find(r.input_id);
  require(pos.has_value(), ErrorCode::ParseError, "rating for unknown input '" + r.input_id + "'");
  const auto task_it = s.task_of_input.find(*pos);
  require(task_it != s.task_of_input.end(), ErrorCode::ParseError,
          "rating for input '" + r.input_id + "' which is not in session " + s.id);
  auto& set = s.ratings[*pos];
  set.input_index = *pos;
  set.concept_id = s.params.concept_id;
  set.ratings.push_back(static_cast<std::uint8_t>(r.rating));
  set.rater_ids.push_back(r.rater);
  s.tasks[task_it->second].submitted.insert(r.rater);
  s.log.push_back(r);
}

void AnnotationService::refresh_snapshot(Session& s) const {
  const bool done = complete(s);
  nlohmann::json progress{{"tasks_total", s.tasks.size()},
                          {"tasks_complete", std::count_if(s.tasks.begin(), s.tasks.end(),
                                                           [&](const Task& t) {
                                                             return t.submitted.size() >= s.params.raters;
                                                           })},
                          {"ratings", s.log.size()},
                          {"complete", done}};
  const Prior prior = s.params.prior == PriorKind::estimator ? Prior::estimator(s.guide->values)
                                                             : Prior::uniform(s.params.beta);
  const auto est = estimate_from_ratings(*s.estimator, s.sample, s.ratings, NoiseModel{s.params.eta}, prior);
  ServiceResponse r;
  if (!est) {
    r = ServiceResponse::error(425, "too_early",
                               "need at least two labeled inputs with differing labels before estimating");
    r.body["n_labeled"] = s.ratings.size();
    r.body.update(progress);
  } else {
    nlohmann::json body{{"session_id", s.id},
                        {"rho", est->result.rho},
                        {"rho_raw", est->result.rho_raw},
                        {"n_labeled", est->labeled_inputs},
                        {"sample_size", est->result.sample_size},
                        {"effective_sample_size", est->result.effective_sample_size},
                        {"concept_mean", est->result.concept_mean},
                        {"concept_std", est->result.concept_std},
                        {"partial", !done}};
    body.update(progress);
    r = ServiceResponse::json(200, std::move(body));
  }
  auto snap = std::make_shared<const ServiceResponse>(std::move(r));
  std::lock_guard lock(s.snapshot_mutex);
  s.snapshot = std::move(snap);
}

std::size_t AnnotationService::restore() {
  if (options_.data_dir.empty()) return 0;
  std::vector<std::filesystem::path> manifests;
  for (const auto& entry : std::filesystem::directory_iterator(options_.data_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 && name.ends_with(".session.json")) manifests.push_back(entry.path());
  }
  std::sort(manifests.begin(), manifests.end());
  std::size_t restored = 0;
  for (const auto& path : manifests) {
    std::ifstream in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    const std::string id = j.at("session_id").get<std::string>();
    if (find(id)) continue;
    auto s = build_session(id, params_from_json(j), j.at("task_size").get<std::size_t>());
    require(j.at("indices").get<std::vector<std::size_t>>() == s->sample.indices, ErrorCode::Config,
            path.string() + ": stored sample does not match the regenerated one");
    if (std::filesystem::exists(log_path(id))) {
      for (const auto& r : read_ratings_log(log_path(id))) apply_record(*s, r);
      s->submissions = 0;
      for (const auto& t : s->tasks) s->submissions += t.submitted.size();
    }
    refresh_snapshot(*s);
    if (const auto n = session_number(id)) next_id_ = std::max(next_id_, *n + 1);
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(id, std::move(s));
    ++restored;
  }
  return restored;
}

ServiceResponse AnnotationService::create_session(const nlohmann::json& body) {
  SessionParams params;
  try {
    params = params_from_json(body);
  } catch (const Error& e) {
    return ServiceResponse::error(400, error_slug(e.code()), e.what());
  }
  if (!workspace_.activation(params.neuron_id)) {
    return ServiceResponse::error(404, "unknown_neuron", "no activations for neuron '" + params.neuron_id + "'");
  }

  std::unique_lock lock(sessions_mutex_);
  const std::uint64_t number = next_id_;
  const std::string id = session_name(number);
  if (!body.contains("seed")) params.seed = derive_seed(number, {0x5e55});
  std::unique_ptr<Session> s;
  try {
    s = build_session(id, params, options_.task_size);
  } catch (const Error& e) {
    return ServiceResponse::error(400, error_slug(e.code()), e.what());
  }
  persist_manifest(*s);
  ++next_id_;
  nlohmann::json out{{"session_id", id},
                     {"neuron_id", params.neuron_id},
                     {"concept", params.concept_id},
                     {"n_inputs", params.n_inputs},
                     {"distinct_inputs", s->task_of_input.size()},
                     {"m", params.raters},
                     {"tasks", s->tasks.size()},
                     {"task_size", s->task_size},
                     {"seed", params.seed}};
  sessions_.emplace(id, std::move(s));
  return ServiceResponse::json(201, std::move(out));
}

ServiceResponse AnnotationService::next_task(const std::string& session_id, const std::string& rater) {
  if (rater.empty()) return ServiceResponse::error(400, "missing_rater", "a rater id is required");
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(s->mutex);
  const TimePoint at = now();
  if (const auto it = s->leases.find(rater); it != s->leases.end()) {
    if (at < it->second.expires) {
      return ServiceResponse::error(409, "lease_held",
                                    "rater already holds task " + s->tasks[it->second.task].id);
    }
    s->leases.erase(it);
  }
  for (std::size_t i = 0; i < s->tasks.size(); ++i) {
    const Task& t = s->tasks[i];
    if (t.submitted.count(rater)) continue;
    if (t.submitted.size() + active_leases(*s, i, at) >= s->params.raters) continue;
    const TimePoint expires = at + options_.lease;
    s->leases[rater] = Lease{i, expires};
    nlohmann::json inputs = nlohmann::json::array();
    for (std::size_t idx : t.inputs) {
      inputs.push_back({{"input_id", workspace_.index.id(idx)}, {"asset_uri", workspace_.index.asset_uri(idx)}});
    }
    return ServiceResponse::json(200, {{"session_id", s->id},
                                       {"task_id", t.id},
                                       {"concept", s->params.concept_id},
                                       {"inputs", inputs},
                                       {"lease_expires_at", iso8601(expires)},
                                       {"lease_seconds", options_.lease.count()}});
  }
  ServiceResponse r;
  r.status = 204;
  return r;
}

ServiceResponse AnnotationService::submit_ratings(const std::string& session_id, const std::string& rater_param,
                                                  const nlohmann::json& body) {
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() || !body.contains("ratings") ||
      !body["ratings"].is_array()) {
    return ServiceResponse::error(400, "bad_request", "expected {\"task_id\": ..., \"ratings\": [0|1, ...]}");
  }
  std::string rater = rater_param;
  if (rater.empty() && body.contains("rater") && body["rater"].is_string()) rater = body["rater"].get<std::string>();
  if (rater.empty()) return ServiceResponse::error(400, "missing_rater", "a rater id is required");
  const std::string task_id = body["task_id"].get<std::string>();

  std::lock_guard lock(s->mutex);
  const auto task_it = std::find_if(s->tasks.begin(), s->tasks.end(), [&](const Task& t) { return t.id == task_id; });
  if (task_it == s->tasks.end()) return ServiceResponse::error(404, "unknown_task", "no task '" + task_id + "'");
  const std::size_t task_index = static_cast<std::size_t>(task_it - s->tasks.begin());
  Task& task = *task_it;

  if (task.submitted.count(rater)) {
    return ServiceResponse::json(200, {{"accepted", 0}, {"duplicate", true}, {"complete", complete(*s)}});
  }
  const auto lease = s->leases.find(rater);
  if (lease == s->leases.end() || lease->second.task != task_index) {
    return ServiceResponse::error(409, "no_lease", "rater holds no lease on task " + task_id);
  }
  const TimePoint at = now();
  if (at >= lease->second.expires) {
    s->leases.erase(lease);
    return ServiceResponse::error(410, "lease_expired", "the lease on task " + task_id + " has expired");
  }
  const auto& bits = body["ratings"];
  if (bits.size() != task.inputs.size()) {
    return ServiceResponse::error(422, "wrong_arity",
                                  "expected " + std::to_string(task.inputs.size()) + " ratings, got " +
                                      std::to_string(bits.size()));
  }
  for (const auto& b : bits) {
    if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
      return ServiceResponse::error(422, "not_a_bit", "every rating must be 0 or 1");
    }
  }

  std::vector<RatingRecord> records;
  const std::string ts = iso8601(at);
  for (std::size_t i = 0; i < task.inputs.size(); ++i) {
    records.push_back({s->id, workspace_.index.id(task.inputs[i]), s->params.concept_id, rater, bits[i].get<int>(), ts});
  }
  try {
    if (!options_.data_dir.empty()) append_ratings_log(log_path(s->id), records);
  } catch (const Error& e) {
    return ServiceResponse::error(500, "io", e.what());
  }
  for (const auto& r : records) apply_record(*s, r);
  s->leases.erase(rater);
  ++s->submissions;
  refresh_snapshot(*s);
  return ServiceResponse::json(200, {{"accepted", records.size()}, {"duplicate", false}, {"complete", complete(*s)}});
}

ServiceResponse AnnotationService::current_estimate(const std::string& session_id) const {
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  std::shared_ptr<const ServiceResponse> snap;
  {
    std::lock_guard lock(s->snapshot_mutex);
    snap = s->snapshot;
  }
  return *snap;
}

ServiceResponse AnnotationService::session_status(const std::string& session_id) const {
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(s->mutex);
  const TimePoint at = now();
  nlohmann::json tasks = nlohmann::json::array();
  for (std::size_t i = 0; i < s->tasks.size(); ++i) {
    const Task& t = s->tasks[i];
    tasks.push_back({{"task_id", t.id},
                     {"inputs", t.inputs.size()},
                     {"submitted", t.submitted.size()},
                     {"leased", active_leases(*s, i, at)}});
  }
  nlohmann::json body = s->params.to_json();
  body["session_id"] = s->id;
  body["status"] = complete(*s) ? "complete" : "open";
  body["tasks"] = tasks;
  body["ratings"] = s->log.size();
  return ServiceResponse::json(200, std::move(body));
}

ServiceResponse AnnotationService::export_ratings(const std::string& session_id) const {
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(s->mutex);
  ServiceResponse r;
  r.content_type = "application/x-ndjson";
  for (const auto& rec : s->log) r.text += to_jsonl_line(rec);
  return r;
}

ServiceResponse AnnotationService::plan(const std::string& session_id) const {
  Session* s = find(session_id);
  if (!s) return ServiceResponse::error(404, "unknown_session", "no session '" + session_id + "'");
  std::lock_guard lock(s->mutex);
  PlanDocument doc;
  doc.plan = s->plan;
  doc.sample = s->sample;
  doc.neuron_id = s->params.neuron_id;
  doc.concept_id = s->params.concept_id;
  doc.input_ids = workspace_.index.input_ids();
  return ServiceResponse::json(200, to_json(doc));
}

}  // namespace ngauge
