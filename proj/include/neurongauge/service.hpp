#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurongauge/aggregation.hpp"
#include "neurongauge/estimator.hpp"
#include "neurongauge/ratings_log.hpp"
#include "neurongauge/workspace.hpp"

namespace ngauge {

/// Transport-neutral reply: a status code plus either a JSON body or, for
/// exports, raw text.
struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
  std::string text;
  std::string content_type = "application/json";

  static ServiceResponse json(int status, nlohmann::json body);
  static ServiceResponse error(int status, std::string code, std::string message);
};

struct SessionParams {
  std::string neuron_id;
  std::string concept_id;
  Strategy strategy = Strategy::guided;
  double epsilon = kDefaultEpsilon;
  std::size_t n_inputs = 90;
  std::size_t raters = 2;  // m, ratings wanted per input
  PriorKind prior = PriorKind::estimator;
  double beta = kDefaultBeta;
  double eta = kDefaultEta;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

class AnnotationService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  struct Options {
    std::filesystem::path data_dir;  // empty: keep everything in memory
    std::chrono::seconds lease{600};
    std::size_t task_size = 15;
    Clock clock;  // defaults to the system clock
  };

  /// The workspace supplies activations and cheap-estimator scores (guides);
  /// ground truth is not needed.
  AnnotationService(Workspace workspace, Options options);
  ~AnnotationService();

  /// Reloads every session persisted under data_dir. Leases are not persisted.
  std::size_t restore();

  ServiceResponse create_session(const nlohmann::json& body);
  ServiceResponse next_task(const std::string& session_id, const std::string& rater);
  ServiceResponse submit_ratings(const std::string& session_id, const std::string& rater, const nlohmann::json& body);
  ServiceResponse current_estimate(const std::string& session_id) const;
  ServiceResponse session_status(const std::string& session_id) const;
  ServiceResponse export_ratings(const std::string& session_id) const;
  ServiceResponse plan(const std::string& session_id) const;

  const Workspace& workspace() const noexcept { return workspace_; }

 private:
  struct Task {
    std::string id;
    std::vector<std::size_t> inputs;  // distinct input indices
    std::set<std::string> submitted;  // raters whose ratings were accepted
  };

  struct Lease {
    std::size_t task = 0;
    std::chrono::system_clock::time_point expires;
  };

  struct Session {
    std::string id;
    SessionParams params;
    SamplingPlan plan;
    Sample sample;
    std::vector<Task> tasks;
    std::map<std::size_t, std::size_t> task_of_input;
    std::map<std::size_t, RatingSet> ratings;  // by input index
    std::vector<RatingRecord> log;
    std::map<std::string, Lease> leases;  // by rater
    std::size_t submissions = 0;
    std::size_t task_size = 15;
    const ConceptVector* guide = nullptr;
    std::optional<CorrelationEstimator> estimator;

    mutable std::mutex mutex;  // serializes mutations
    mutable std::mutex snapshot_mutex;
    std::shared_ptr<const ServiceResponse> snapshot;
  };

  std::unique_ptr<Session> build_session(std::string id, const SessionParams& params, std::size_t task_size) const;
  void persist_manifest(const Session& s) const;
  void refresh_snapshot(Session& s) const;
  void apply_record(Session& s, const RatingRecord& r) const;
  bool complete(const Session& s) const;
  std::size_t active_leases(const Session& s, std::size_t task, std::chrono::system_clock::time_point now) const;
  Session* find(const std::string& id) const;
  std::chrono::system_clock::time_point now() const;
  std::filesystem::path manifest_path(const std::string& id) const;
  std::filesystem::path log_path(const std::string& id) const;

  Workspace workspace_;
  Options options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// Offline counterpart of the service estimate: Bayes-aggregates the ratings
/// per input and estimates over the sample occurrences that have labels.
/// Returns nullopt when fewer than two occurrences are labeled or the labels
/// are all equal.
struct PipelineEstimate {
  EstimateResult result;
  std::size_t labeled_inputs = 0;
};

std::optional<PipelineEstimate> estimate_from_ratings(const CorrelationEstimator& estimator, const Sample& sample,
                                                      const std::map<std::size_t, RatingSet>& ratings,
                                                      const NoiseModel& noise, const Prior& prior);

}  // namespace ngauge
