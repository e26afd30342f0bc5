#include "neurongauge/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <thread>
#include <unistd.h>
#include <unordered_map>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "neurongauge/aggregation.hpp"
#include "neurongauge/benchmark.hpp"
#include "neurongauge/error.hpp"
#include "neurongauge/estimator.hpp"
#include "neurongauge/http_server.hpp"
#include "neurongauge/manifest.hpp"
#include "neurongauge/plan_io.hpp"
#include "neurongauge/ratings_log.hpp"
#include "neurongauge/scoring.hpp"
#include "neurongauge/service.hpp"
#include "neurongauge/simulator.hpp"

namespace ngauge {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kUsageExit = 5;

void setup_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("neurongauge");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("NEURONGAUGE_LOG")) {
      spdlog::set_level(spdlog::level::from_str(env));
    }
    return true;
  }();
  (void)once;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Opens `path` for writing, or returns nullptr to mean "write to stdout".
std::unique_ptr<std::ofstream> open_output(const std::string& path) {
  if (path.empty() || path == "-") return nullptr;
  auto f = std::make_unique<std::ofstream>(path, std::ios::trunc | std::ios::binary);
  if (!*f) fail(ErrorCode::Io, "cannot write " + path);
  return f;
}

void finish_output(std::unique_ptr<std::ofstream>& f, const std::string& path) {
  if (!f) return;
  f->flush();
  if (!*f) fail(ErrorCode::Io, "write failed for " + path);
  f.reset();
}

template <typename Vec>
const Vec& pick(const std::vector<Vec>& items, const std::string& wanted, std::string Vec::*key, const char* what,
                const std::string& source) {
  if (wanted.empty()) {
    require(items.size() == 1, ErrorCode::InvalidArgument,
            source + " has " + std::to_string(items.size()) + " " + what + " columns; choose one with --" + what);
    return items.front();
  }
  for (const auto& item : items) {
    if (item.*key == wanted) return item;
  }
  fail(ErrorCode::InvalidArgument, source + " has no " + what + " '" + wanted + "'");
}

/// A single label column keyed by input id; rows may cover a subset of the
/// probing dataset.
struct LabelColumn {
  std::string concept_id;
  std::unordered_map<std::string, double> by_id;
};

LabelColumn load_labels(const fs::path& path, const std::string& concept_id) {
  Matrix m = read_matrix(path, format_for_path(path), MatrixKind::concepts, Provenance::aggregated);
  std::size_t col = m.columns.size();
  if (concept_id.empty()) {
    require(m.columns.size() == 1, ErrorCode::InvalidArgument,
            path.string() + " has several label columns; choose one with --concept");
    col = 0;
  } else {
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      if (m.columns[c] == concept_id) col = c;
    }
    require(col < m.columns.size(), ErrorCode::InvalidArgument, path.string() + " has no column '" + concept_id + "'");
  }
  LabelColumn out;
  out.concept_id = m.columns[col];
  for (std::size_t r = 0; r < m.index.size(); ++r) {
    const double v = m.data[col][r];
    require(v >= 0.0 && v <= 1.0, ErrorCode::RangeError,
            path.string() + ": label " + format_double(v) + " outside [0,1] at '" + m.index.id(r) + "'");
    out.by_id.emplace(m.index.id(r), v);
  }
  return out;
}

Aggregation aggregation_for(const std::string& method, const std::string& prior) {
  if (method == "bayes") {
    if (prior == "estimator") return Aggregation::bayes_estimator;
    if (prior == "uniform") return Aggregation::bayes_uniform;
    fail(ErrorCode::Config, "unknown prior '" + prior + "'");
  }
  return aggregation_from_string(method);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- estimate --

struct PlanArgs {
  std::string activations, guide, neuron, concept_name, strategy = "uniform", plan;
  double epsilon = kDefaultEpsilon;
  std::size_t n_inputs = 90;
  std::uint64_t seed = 0;
};

struct LoadedPlan {
  ActivationSet acts;
  const ActivationVector* neuron = nullptr;
  PlanDocument doc;
};

void add_plan_flags(CLI::App* cmd, PlanArgs& a) {
  cmd->add_option("--activations", a.activations, "activation matrix (CSV or .bin)")->required();
  cmd->add_option("--neuron", a.neuron, "neuron column (default: the only one)");
  cmd->add_option("--guide", a.guide, "cheap-estimator scores (guided) or ground truth (oracle)");
  cmd->add_option("--strategy", a.strategy, "uniform | activation-sq | guided | oracle");
  cmd->add_option("--epsilon", a.epsilon, "proposal floor");
  cmd->add_option("--n-inputs", a.n_inputs, "sample size |S|");
  cmd->add_option("--seed", a.seed, "sampling seed");
}

LoadedPlan build_plan_from_args(const PlanArgs& a, const std::string& concept_for_guide, bool exact_only = false) {
  LoadedPlan lp;
  lp.acts = load_activations(a.activations);
  if (!a.plan.empty()) {
    lp.doc = read_plan_document(a.plan);
    const std::string& neuron = a.neuron.empty() ? lp.doc.neuron_id : a.neuron;
    lp.neuron = &pick(lp.acts.vectors, neuron, &ActivationVector::neuron_id, "neuron", a.activations);
    require(lp.doc.plan.size() == lp.acts.index.size(), ErrorCode::DimensionMismatch,
            a.plan + ": proposal covers " + std::to_string(lp.doc.plan.size()) + " inputs, activations have " +
                std::to_string(lp.acts.index.size()));
    if (!lp.doc.input_ids.empty()) {
      require(lp.doc.input_ids == lp.acts.index.input_ids(), ErrorCode::DimensionMismatch,
              a.plan + ": input ids differ from " + a.activations);
    }
    return lp;
  }
  lp.neuron = &pick(lp.acts.vectors, a.neuron, &ActivationVector::neuron_id, "neuron", a.activations);
  if (exact_only) return lp;
  const Strategy strategy = strategy_from_string(a.strategy);
  std::optional<ConceptSet> guides;
  const ConceptVector* guide = nullptr;
  if (strategy == Strategy::guided || strategy == Strategy::oracle) {
    if (a.guide.empty()) {
      fail(ErrorCode::MissingGuide, "strategy '" + a.strategy + "' needs --guide");
    }
    guides = load_concepts(a.guide, strategy == Strategy::oracle ? Provenance::ground_truth : Provenance::cheap_estimator);
    require(guides->index == lp.acts.index, ErrorCode::DimensionMismatch,
            a.guide + ": input ids differ from " + a.activations);
    guide = &pick(guides->vectors, concept_for_guide, &ConceptVector::concept_id, "concept", a.guide);
  }
  require(a.n_inputs >= 2, ErrorCode::Config, "--n-inputs must be at least 2");
  lp.doc.plan = build_plan(*lp.neuron, guide, strategy, a.epsilon);
  lp.doc.sample = draw_sample(lp.doc.plan, a.n_inputs, a.seed);
  lp.doc.neuron_id = lp.neuron->neuron_id;
  lp.doc.concept_id = guide ? guide->concept_id : concept_for_guide;
  lp.doc.input_ids = lp.acts.index.input_ids();
  return lp;
}

json plan_config(const PlanArgs& a) {
  return json{{"activations", a.activations}, {"guide", a.guide}, {"neuron", a.neuron}, {"strategy", a.strategy},
              {"epsilon", a.epsilon},         {"n_inputs", a.n_inputs}, {"seed", a.seed}, {"plan", a.plan}};
}

int cmd_estimate(const PlanArgs& a, const std::string& labels_path, const std::string& concept_name, bool exact,
                 const std::string& out_path, std::ostream& out) {
  LoadedPlan lp = build_plan_from_args(a, concept_name, exact);
  const LabelColumn labels = load_labels(labels_path, concept_name);
  json result{{"neuron_id", lp.neuron->neuron_id}, {"concept_id", labels.concept_id}};

  if (exact) {
    std::vector<double> full(lp.acts.index.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
      const auto it = labels.by_id.find(lp.acts.index.id(i));
      if (it == labels.by_id.end()) fail(ErrorCode::InvalidArgument, "no label for input '" + lp.acts.index.id(i) + "'");
      full[i] = it->second;
    }
    result["rho"] = exact_correlation(lp.neuron->values, full);
    result["exact"] = true;
  } else {
    if (!lp.doc.sample) fail(ErrorCode::InvalidArgument, a.plan + ": plan document has no sampled indices");
    const Sample& sample = *lp.doc.sample;
    std::vector<double> per_occurrence;
    per_occurrence.reserve(sample.size());
    for (std::size_t idx : sample.indices) {
      const auto& id = lp.acts.index.id(idx);
      const auto it = labels.by_id.find(id);
      if (it == labels.by_id.end()) fail(ErrorCode::InvalidArgument, "no label for sampled input '" + id + "'");
      per_occurrence.push_back(it->second);
    }
    const EstimateResult r = estimate_correlation(*lp.neuron, sample, per_occurrence);
    result["strategy"] = to_string(lp.doc.plan.strategy);
    result["seed"] = sample.seed;
    result["rho"] = r.rho;
    result["rho_raw"] = r.rho_raw;
    result["sample_size"] = r.sample_size;
    result["effective_sample_size"] = r.effective_sample_size;
    result["concept_mean"] = r.concept_mean;
    result["concept_std"] = r.concept_std;
  }
  const std::string text = result.dump(2) + "\n";
  out << text;
  if (!out_path.empty()) {
    ManifestRecorder rec("estimate", plan_config(a), a.seed, {a.activations, labels_path, a.guide, a.plan});
    auto f = open_output(out_path);
    *f << text;
    finish_output(f, out_path);
    rec.write_for(out_path);
  }
  return 0;
}

int cmd_plan(const PlanArgs& a, const std::string& concept_name, const std::string& out_path, std::ostream& out) {
  LoadedPlan lp = build_plan_from_args(a, concept_name);
  const std::string text = to_json(lp.doc).dump() + "\n";
  if (out_path.empty()) {
    out << text;
    return 0;
  }
  ManifestRecorder rec("plan", plan_config(a), a.seed, {a.activations, a.guide});
  auto f = open_output(out_path);
  *f << text;
  finish_output(f, out_path);
  rec.write_for(out_path);
  out << json{{"plan", out_path}, {"sample_size", lp.doc.sample->size()}}.dump() << "\n";
  return 0;
}

// --------------------------------------------------------------- benchmark --

int cmd_benchmark(const BenchmarkSpec& spec, const std::string& dir, std::ostream& out) {
  const json config{{"inputs", spec.inputs},          {"neurons", spec.neurons},
                    {"prevalence", spec.prevalence},  {"signal", spec.signal},
                    {"guide_flip_rate", spec.guide_flip_rate}, {"guide_sharpness", spec.guide_sharpness},
                    {"seed", spec.seed}};
  ManifestRecorder rec("benchmark", config, spec.seed, {});
  const Workspace ws = make_benchmark(spec);
  write_workspace(ws, dir);
  rec.write_for(fs::path(dir) / "workspace");
  json summary{{"directory", dir}, {"inputs", ws.index.size()}, {"neurons", json::array()}};
  for (const auto& gt : assign_ground_truth(ws)) {
    summary["neurons"].push_back({{"neuron_id", gt.neuron_id}, {"concept_id", gt.concept_id}, {"rho_gt", gt.rho_gt}});
  }
  out << summary.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------- simulate / sweep --

struct SimArgs {
  std::string config, activations, concepts, guide, out;
  std::optional<std::string> strategy, aggregation, prior;
  std::optional<double> epsilon, eta, beta;
  std::optional<std::size_t> n_inputs, raters, trials, jobs;
  std::optional<std::uint64_t> seed;
  std::optional<double> budget;
  std::string betas;
  bool envelope = false;
};

void add_sim_flags(CLI::App* cmd, SimArgs& a) {
  cmd->add_option("--config", a.config, "JSON config (trial settings, grid axes, workspace)");
  cmd->add_option("--activations", a.activations, "activation matrix; omit to use the synthetic benchmark");
  cmd->add_option("--concepts", a.concepts, "ground-truth concept matrix");
  cmd->add_option("--guide", a.guide, "cheap-estimator scores for the same concepts");
  cmd->add_option("--strategy", a.strategy, "uniform | activation-sq | guided | oracle");
  cmd->add_option("--epsilon", a.epsilon, "proposal floor");
  cmd->add_option("--aggregation", a.aggregation, "average | majority | bayes");
  cmd->add_option("--prior", a.prior, "uniform | estimator (Bayes prior)");
  cmd->add_option("--n-inputs", a.n_inputs, "inputs sampled per neuron");
  cmd->add_option("--raters", a.raters, "ratings per input (m)");
  cmd->add_option("--eta", a.eta, "rater error rate");
  cmd->add_option("--beta", a.beta, "uniform prior P(c=1)");
  cmd->add_option("--trials", a.trials, "trials per neuron");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--jobs", a.jobs, "worker threads");
  cmd->add_option("--out", a.out, "output CSV (default: standard output)");
}

struct SimSetup {
  json config;  // effective config after flag overrides
  Workspace ws;
  std::vector<fs::path> inputs;
};

SimSetup prepare_simulation(const SimArgs& a) {
  SimSetup s;
  s.config = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!s.config.is_object()) fail(ErrorCode::Config, "config must be a JSON object");
  if (!a.config.empty()) s.inputs.push_back(a.config);

  json& c = s.config;
  // Relative workspace paths in a config file are relative to that file.
  if (!a.config.empty() && c.contains("workspace") && c["workspace"].is_object()) {
    const fs::path base = fs::path(a.config).parent_path();
    for (auto& [key, value] : c["workspace"].items()) {
      if (value.is_string() && fs::path(value.get<std::string>()).is_relative()) {
        value = (base / value.get<std::string>()).string();
      }
    }
  }
  if (a.strategy) c["strategy"] = *a.strategy;
  if (a.epsilon) c["epsilon"] = *a.epsilon;
  if (a.aggregation) c["aggregation"] = *a.aggregation;
  if (a.prior) c["prior"] = *a.prior;
  if (a.n_inputs) c["n_inputs"] = *a.n_inputs;
  if (a.raters) c["raters"] = *a.raters;
  if (a.eta) c["eta"] = *a.eta;
  if (a.beta) c["beta"] = *a.beta;
  if (a.trials) c["trials"] = *a.trials;
  if (a.seed) c["seed"] = *a.seed;
  if (a.jobs) c["jobs"] = *a.jobs;

  json workspace = c.contains("workspace") ? c["workspace"] : json::object();
  if (!a.activations.empty()) workspace["activations"] = a.activations;
  if (!a.concepts.empty()) workspace["truth"] = a.concepts;
  if (!a.guide.empty()) workspace["guide"] = a.guide;
  if (!workspace.empty()) {
    if (!workspace.contains("activations") || !workspace.contains("truth")) {
      fail(ErrorCode::Config, "a workspace needs both activations and ground-truth concepts");
    }
    const fs::path acts = workspace["activations"].get<std::string>();
    const fs::path truth = workspace["truth"].get<std::string>();
    const fs::path guide = workspace.value("guide", std::string{});
    s.ws = load_workspace(acts, truth, guide);
    s.inputs.insert(s.inputs.end(), {acts, truth, guide});
    c["workspace"] = workspace;
  } else {
    BenchmarkSpec spec;
    const json b = c.value("benchmark", json::object());
    try {
      spec.inputs = b.value("inputs", spec.inputs);
      spec.neurons = b.value("neurons", spec.neurons);
      spec.prevalence = b.value("prevalence", spec.prevalence);
      spec.signal = b.value("signal", spec.signal);
      spec.guide_flip_rate = b.value("guide_flip_rate", spec.guide_flip_rate);
      spec.guide_sharpness = b.value("guide_sharpness", spec.guide_sharpness);
      spec.seed = b.value("seed", c.value("seed", std::uint64_t{0}));
    } catch (const json::exception& e) {
      fail(ErrorCode::Config, std::string("benchmark settings: ") + e.what());
    }
    s.ws = make_benchmark(spec);
    c["benchmark"] = {{"inputs", spec.inputs},
                      {"neurons", spec.neurons},
                      {"prevalence", spec.prevalence},
                      {"signal", spec.signal},
                      {"guide_flip_rate", spec.guide_flip_rate},
                      {"guide_sharpness", spec.guide_sharpness},
                      {"seed", spec.seed}};
  }
  return s;
}

SweepGrid grid_of(const json& config) {
  json trial = config;
  trial.erase("workspace");
  trial.erase("benchmark");
  return sweep_grid_from_json(trial);
}

template <typename Writer>
void emit_table(const std::string& command, const SimArgs& a, const SimSetup& s, std::uint64_t seed, Writer&& write,
                std::ostream& out) {
  if (a.out.empty()) {
    write(out);
    return;
  }
  ManifestRecorder rec(command, s.config, seed, s.inputs);
  auto f = open_output(a.out);
  write(*f);
  finish_output(f, a.out);
  rec.write_for(a.out);
}

int cmd_simulate(const SimArgs& a, std::ostream& out) {
  const SimSetup s = prepare_simulation(a);
  const SweepGrid grid = grid_of(s.config);
  const auto assignments = assign_ground_truth(s.ws);
  const auto cells = grid.expand();
  const auto rows = sweep_cost_error(s.ws, assignments, cells);
  emit_table("simulate", a, s, grid.base.seed, [&](std::ostream& o) { write_sweep_csv(rows, o); }, out);
  return 0;
}

int cmd_sweep(const SimArgs& a, std::ostream& out) {
  const SimSetup s = prepare_simulation(a);
  const SweepGrid grid = grid_of(s.config);
  const auto assignments = assign_ground_truth(s.ws);

  std::vector<double> betas;
  for (const auto& item : split_list(a.betas)) {
    try {
      betas.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorCode::Config, "--betas expects comma-separated numbers, got '" + item + "'");
    }
  }
  if (betas.empty() && s.config.contains("betas")) betas = s.config["betas"].get<std::vector<double>>();
  if (!betas.empty()) {
    const auto rows = sweep_prior_beta(s.ws, assignments, grid.base, betas);
    emit_table("sweep", a, s, grid.base.seed, [&](std::ostream& o) { write_beta_csv(rows, o); }, out);
    return 0;
  }

  const auto cells = grid.expand();
  auto rows = sweep_cost_error(s.ws, assignments, cells);
  if (a.envelope) rows = cost_envelope(rows);
  if (!a.budget || !a.out.empty()) {
    emit_table("sweep", a, s, grid.base.seed, [&](std::ostream& o) { write_sweep_csv(rows, o); }, out);
  }
  if (a.budget) {
    const SweepRow best = optimal_rater_count(rows, Money::from_usd(*a.budget));
    const json choice{{"budget_usd", Money::from_usd(*a.budget).to_string()},
                      {"strategy", to_string(best.strategy)},
                      {"aggregation", to_string(best.aggregation)},
                      {"m", best.raters},
                      {"n_inputs", best.n_inputs},
                      {"cost_usd", best.cost.to_string()},
                      {"expected_rce", best.rce}};
    out << choice.dump(2) << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- score --

int cmd_score(const std::string& explanations, const std::string& concepts, const std::string& activations,
              const std::string& split_path, const std::string& out_path, std::ostream& out) {
  const auto entries = read_explanations(explanations);
  const ActivationSet acts = load_activations(activations);
  const ConceptSet cs = load_concepts(concepts, Provenance::cheap_estimator);
  std::vector<std::size_t> split;
  if (!split_path.empty()) {
    std::ifstream in(split_path);
    if (!in) fail(ErrorCode::Io, "cannot open " + split_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line == "input_id") continue;
      const auto pos = acts.index.find(line);
      if (!pos) fail(ErrorCode::InvalidArgument, split_path + ": unknown input '" + line + "'");
      split.push_back(*pos);
    }
    require(split.size() >= 2, ErrorCode::InvalidArgument, split_path + ": evaluation split needs at least 2 inputs");
  }
  const auto rows = score_explanations(entries, acts, cs, split);
  if (out_path.empty()) {
    write_scores_csv(rows, out);
    return 0;
  }
  const json config{{"explanations", explanations}, {"concepts", concepts}, {"activations", activations}, {"split", split_path}};
  ManifestRecorder rec("score", config, 0, {explanations, concepts, activations, split_path});
  auto f = open_output(out_path);
  write_scores_csv(rows, *f);
  finish_output(f, out_path);
  rec.write_for(out_path);
  return 0;
}

// --------------------------------------------------------------- aggregate --

struct AggregateArgs {
  std::string ratings, guide, concept_name, method = "bayes", prior = "uniform", out;
  double beta = kDefaultBeta, eta = kDefaultEta;
};

int cmd_aggregate(const AggregateArgs& a, std::ostream& out) {
  const auto records = read_ratings_log(a.ratings);
  require(!records.empty(), ErrorCode::EmptyRatings, a.ratings + " holds no ratings");
  const Aggregation method = aggregation_for(a.method, a.prior);

  std::optional<ConceptSet> guides;
  const ConceptVector* guide = nullptr;
  ProbingIndex index;
  if (!a.guide.empty()) {
    guides = load_concepts(a.guide, Provenance::cheap_estimator);
    index = guides->index;
  } else {
    std::vector<std::string> ids;
    std::unordered_map<std::string, bool> seen;
    for (const auto& r : records) {
      if (seen.emplace(r.input_id, true).second) ids.push_back(r.input_id);
    }
    index = ProbingIndex(std::move(ids));
  }
  const auto sets = group_ratings(records, index, a.concept_name);
  require(!sets.empty(), ErrorCode::EmptyRatings, "no ratings for concept '" + a.concept_name + "'");
  const std::string concept_id = sets.front().concept_id;
  if (method == Aggregation::bayes_estimator) {
    if (!guides) fail(ErrorCode::MissingGuide, "the estimator prior needs --guide");
    guide = &pick(guides->vectors, concept_id, &ConceptVector::concept_id, "concept", a.guide);
  }
  const NoiseModel noise{a.eta};
  const Prior prior = guide ? Prior::estimator(guide->values) : Prior::uniform(a.beta);
  prior.validate();

  Matrix m;
  m.kind = MatrixKind::concepts;
  m.provenance = Provenance::aggregated;
  m.columns = {concept_id};
  m.data.resize(1);
  std::vector<std::string> ids;
  for (const auto& s : sets) {
    ids.push_back(index.id(s.input_index));
    m.data[0].push_back(aggregate(s, method, noise, prior));
  }
  m.index = ProbingIndex(std::move(ids));

  const json config{{"ratings", a.ratings}, {"guide", a.guide}, {"concept", concept_id}, {"method", to_string(method)},
                    {"beta", a.beta},       {"eta", a.eta}};
  if (a.out.empty()) {
    const fs::path tmp = fs::temp_directory_path() / ("neurongauge-labels-" + std::to_string(::getpid()) + ".csv");
    write_matrix(m, tmp, MatrixFormat::csv);
    std::ifstream in(tmp, std::ios::binary);
    out << in.rdbuf();
    in.close();
    fs::remove(tmp);
    return 0;
  }
  ManifestRecorder rec("aggregate", config, 0, {a.ratings, a.guide});
  write_matrix(m, a.out, format_for_path(a.out));
  rec.write_for(a.out);
  return 0;
}

// --------------------------------------------------------------- calibrate --

int cmd_calibrate(const std::string& ratings, const std::string& truth_path, const std::string& concept_name,
                  std::ostream& out) {
  const auto records = read_ratings_log(ratings);
  const ConceptSet truth = load_concepts(truth_path, Provenance::ground_truth);
  std::map<std::string, std::vector<RatingRecord>> by_concept;
  for (const auto& r : records) {
    if (concept_name.empty() || r.concept_id == concept_name) by_concept[r.concept_id].push_back(r);
  }
  std::vector<CalibrationItem> items;
  for (const auto& [concept_id, recs] : by_concept) {
    const ConceptVector* c = truth.find(concept_id);
    if (!c) fail(ErrorCode::InvalidArgument, truth_path + " has no ground truth for concept '" + concept_id + "'");
    for (auto& set : group_ratings(recs, truth.index, concept_id)) {
      const int bit = static_cast<int>(c->values[set.input_index]);
      items.push_back({std::move(set), bit});
    }
  }
  const Calibration cal = calibrate_error_rate(items);
  out << json{{"eta", cal.noise.eta},
              {"raw_rate", cal.raw_rate},
              {"n_ratings", cal.n_ratings},
              {"disagreements", cal.disagreements},
              {"clamped", cal.clamped}}
             .dump(2)
      << "\n";
  return 0;
}

// ------------------------------------------------------------------- serve --

struct ServeArgs {
  std::string activations, guide, assets, data_dir, host = "127.0.0.1", port_file;
  int port = 8080;
  int lease_seconds = 600;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  Workspace ws;
  auto acts = load_activations(a.activations);
  ws.index = std::move(acts.index);
  ws.activations = std::move(acts.vectors);
  if (!a.guide.empty()) {
    auto g = load_concepts(a.guide, Provenance::cheap_estimator);
    require(g.index == ws.index, ErrorCode::DimensionMismatch, a.guide + ": input ids differ from " + a.activations);
    ws.guides = std::move(g.vectors);
  }
  if (!a.assets.empty()) ws.index.set_asset_uris(load_asset_uris(a.assets, ws.index));
  ws.validate();

  AnnotationService::Options opts;
  opts.data_dir = a.data_dir;
  opts.lease = std::chrono::seconds(a.lease_seconds);
  require(a.lease_seconds > 0, ErrorCode::Config, "--lease-seconds must be positive");
  AnnotationService service(std::move(ws), opts);
  const std::size_t restored = service.restore();

  // Block termination signals here; a watcher thread turns them into stop().
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  if (port < 0) fail(ErrorCode::Io, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  if (!a.data_dir.empty()) {
    ManifestRecorder rec("serve",
                         json{{"activations", a.activations}, {"guide", a.guide}, {"assets", a.assets},
                              {"lease_seconds", a.lease_seconds}},
                         0, {a.activations, a.guide, a.assets});
    rec.write_for(fs::path(a.data_dir) / "serve");
  }
  if (!a.port_file.empty()) {
    std::ofstream pf(a.port_file, std::ios::trunc);
    pf << port << "\n";
  }
  out << json{{"host", a.host}, {"port", port}, {"restored_sessions", restored}}.dump() << std::endl;
  spdlog::info("listening on {}:{}", a.host, port);

  std::thread watcher([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  const bool ok = server.serve();
  if (watcher.joinable()) {
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
  }
  return ok ? 0 : exit_code_for(ErrorCode::Io);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  setup_logging();
  CLI::App app{"Importance-sampled correlation estimates for neuron explanations", "neurongauge"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  PlanArgs plan_args;
  std::string labels, concept_name, out_path;
  bool exact = false;
  auto* estimate = app.add_subcommand("estimate", "estimate a correlation from sampled labels (JSON on stdout)");
  add_plan_flags(estimate, plan_args);
  estimate->add_option("--plan", plan_args.plan, "plan document with sampled indices");
  estimate->add_option("--labels", labels, "labels CSV: input_id,<concept> (any subset of inputs)")->required();
  estimate->add_option("--concept", concept_name, "label column (default: the only one)");
  estimate->add_flag("--exact", exact, "exact correlation over all inputs instead of a sample");
  estimate->add_option("--out", out_path, "also write the JSON here, with a manifest");

  PlanArgs plan_only;
  std::string plan_concept, plan_out;
  auto* plan = app.add_subcommand("plan", "build a proposal and draw a sample");
  add_plan_flags(plan, plan_only);
  plan->add_option("--concept", plan_concept, "guide column (default: the only one)");
  plan->add_option("--out", plan_out, "plan document path (default: standard output)");

  BenchmarkSpec spec;
  std::string bench_dir;
  auto* bench = app.add_subcommand("benchmark", "write the synthetic rare-concept workspace");
  bench->add_option("--out", bench_dir, "output directory")->required();
  bench->add_option("--inputs", spec.inputs, "probing dataset size");
  bench->add_option("--neurons", spec.neurons, "number of neurons");
  bench->add_option("--prevalence", spec.prevalence, "fraction of inputs with the concept");
  bench->add_option("--signal", spec.signal, "activation shift on concept inputs");
  bench->add_option("--flip-rate", spec.guide_flip_rate, "fraction of positives the guide gets wrong");
  bench->add_option("--sharpness", spec.guide_sharpness, "guide sigmoid sharpness");
  bench->add_option("--seed", spec.seed, "generator seed");

  SimArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "run seeded trials and write cost/error rows");
  add_sim_flags(simulate, sim_args);

  SimArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "sweep a grid, pick the best rater count, or sweep beta");
  add_sim_flags(sweep, sweep_args);
  sweep->add_option("--budget", sweep_args.budget, "report the best cell within this per-neuron budget (USD)");
  sweep->add_option("--betas", sweep_args.betas, "comma-separated beta values for a prior sensitivity sweep");
  sweep->add_flag("--envelope", sweep_args.envelope, "keep only the best rater count per cost");

  std::string explanations, concepts, activations, split, score_out;
  auto* score = app.add_subcommand("score", "score explanations by correlation with activations");
  score->add_option("--explanations", explanations, "explanations JSONL")->required();
  score->add_option("--concepts", concepts, "concept score matrix")->required();
  score->add_option("--activations", activations, "activation matrix")->required();
  score->add_option("--split", split, "file of input ids to evaluate on (default: all)");
  score->add_option("--out", score_out, "scores CSV (default: standard output)");

  AggregateArgs agg_args;
  auto* agg = app.add_subcommand("aggregate", "turn a ratings log into a labels CSV");
  agg->add_option("--ratings", agg_args.ratings, "ratings JSONL")->required();
  agg->add_option("--method", agg_args.method, "average | majority | bayes");
  agg->add_option("--prior", agg_args.prior, "uniform | estimator");
  agg->add_option("--guide", agg_args.guide, "cheap-estimator scores (estimator prior)");
  agg->add_option("--concept", agg_args.concept_name, "concept to aggregate (default: the only one)");
  agg->add_option("--beta", agg_args.beta, "uniform prior P(c=1)");
  agg->add_option("--eta", agg_args.eta, "rater error rate");
  agg->add_option("--out", agg_args.out, "labels CSV (default: standard output)");

  std::string cal_ratings, cal_truth, cal_concept;
  auto* cal = app.add_subcommand("calibrate", "estimate the rater error rate against ground truth");
  cal->add_option("--ratings", cal_ratings, "ratings JSONL")->required();
  cal->add_option("--truth", cal_truth, "ground-truth concept matrix")->required();
  cal->add_option("--concept", cal_concept, "restrict to one concept");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "run the annotation service");
  serve->add_option("--activations", serve_args.activations, "activation matrix")->required();
  serve->add_option("--guide", serve_args.guide, "cheap-estimator scores");
  serve->add_option("--assets", serve_args.assets, "CSV input_id,asset_uri");
  serve->add_option("--data-dir", serve_args.data_dir, "where sessions and ratings are persisted");
  serve->add_option("--host", serve_args.host, "bind address");
  serve->add_option("--port", serve_args.port, "port (0 picks a free one)");
  serve->add_option("--port-file", serve_args.port_file, "write the bound port to this file");
  serve->add_option("--lease-seconds", serve_args.lease_seconds, "task lease duration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageExit;
  }

  try {
    if (*estimate) return cmd_estimate(plan_args, labels, concept_name, exact, out_path, out);
    if (*plan) return cmd_plan(plan_only, plan_concept, plan_out, out);
    if (*bench) return cmd_benchmark(spec, bench_dir, out);
    if (*simulate) return cmd_simulate(sim_args, out);
    if (*sweep) return cmd_sweep(sweep_args, out);
    if (*score) return cmd_score(explanations, concepts, activations, split, score_out, out);
    if (*agg) return cmd_aggregate(agg_args, out);
    if (*cal) return cmd_calibrate(cal_ratings, cal_truth, cal_concept, out);
    if (*serve) return cmd_serve(serve_args, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: Config: " << e.what() << "\n";
    return exit_code_for(ErrorCode::Config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsageExit;
}

}  // namespace ngauge
