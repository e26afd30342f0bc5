#include "neurongauge/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <optional>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "neurongauge/error.hpp"
#include "neurongauge/random.hpp"

namespace ngauge {

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

bool is_bit(double v) { return v == 0.0 || v == 1.0; }

struct NeuronContext {
  const ConceptVector* truth = nullptr;
  const ConceptVector* guide = nullptr;
  double rho_gt = 0.0;
  SamplingPlan plan;
  std::optional<CorrelationEstimator> estimator;
};

struct TrialOutcome {
  double rho = 0.0;
  bool degenerate = false;
};

TrialOutcome run_one(const NeuronContext& ctx, const TrialConfig& config, std::size_t neuron, std::size_t trial) {
  const Sample sample = draw_sample(
      ctx.plan, config.n_inputs,
      derive_seed(config.seed, {neuron, trial, static_cast<std::uint64_t>(Stage::Sample)}));

  // Each distinct input is rated once; repeated draws reuse its label.
  std::vector<std::size_t> distinct;
  std::vector<std::size_t> slot(sample.size());
  std::unordered_map<std::size_t, std::size_t> seen;
  for (std::size_t j = 0; j < sample.size(); ++j) {
    auto [it, inserted] = seen.emplace(sample.indices[j], distinct.size());
    if (inserted) distinct.push_back(sample.indices[j]);
    slot[j] = it->second;
  }

  std::vector<double> distinct_labels(distinct.size());
  if (config.noise.eta == 0.0) {
    // Noiseless raters: every aggregator returns the true bit.
    for (std::size_t u = 0; u < distinct.size(); ++u) distinct_labels[u] = ctx.truth->values[distinct[u]];
  } else {
    const auto sets = simulate_ratings(
        *ctx.truth, distinct, config.raters, config.noise.eta,
        derive_seed(config.seed, {neuron, trial, static_cast<std::uint64_t>(Stage::Ratings)}));
    const Prior prior = config.aggregation == Aggregation::bayes_estimator
                            ? Prior::estimator(ctx.guide->values, config.clip_lo, config.clip_hi)
                            : Prior::uniform(config.beta);
    for (std::size_t u = 0; u < sets.size(); ++u) {
      distinct_labels[u] = aggregate(sets[u], config.aggregation, config.noise, prior);
    }
  }

  std::vector<double> labels(sample.size());
  for (std::size_t j = 0; j < sample.size(); ++j) labels[j] = distinct_labels[slot[j]];

  TrialOutcome out;
  try {
    out.rho = ctx.estimator->estimate(sample, labels).rho;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateConcept) throw;
    out.degenerate = true;
  }
  return out;
}

std::string_view require_string(const nlohmann::json& v, const char* key) {
  if (!v.is_string()) fail(ErrorCode::Config, std::string("config key '") + key + "' must be a string");
  return v.get_ref<const std::string&>();
}

template <typename T>
T require_number(const nlohmann::json& v, const char* key) {
  if (!v.is_number()) fail(ErrorCode::Config, std::string("config key '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(ErrorCode::Config, std::string("config key '") + key + "' must be a non-negative integer");
    }
  }
  return v.get<T>();
}

void apply_aggregation(TrialConfig& c, std::string_view name, const nlohmann::json& j) {
  if (name == "bayes") {
    const std::string prior = j.contains("prior") ? std::string(require_string(j["prior"], "prior")) : "estimator";
    if (prior == "estimator") c.aggregation = Aggregation::bayes_estimator;
    else if (prior == "uniform") c.aggregation = Aggregation::bayes_uniform;
    else fail(ErrorCode::Config, "unknown prior '" + prior + "'");
  } else {
    c.aggregation = aggregation_from_string(name);
  }
}

}  // namespace

Money Money::from_usd(double usd) {
  require(std::isfinite(usd), ErrorCode::InvalidArgument, "amount must be finite");
  return Money(static_cast<std::int64_t>(std::llround(usd * 1e6)));
}

std::string Money::to_string() const {
  const bool negative = micros_ < 0;
  const std::uint64_t abs = negative ? static_cast<std::uint64_t>(-micros_) : static_cast<std::uint64_t>(micros_);
  std::string text = (negative ? "-" : "") + std::to_string(abs / 1000000);
  std::string frac = std::to_string(abs % 1000000);
  frac.insert(0, 6 - frac.size(), '0');
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  if (!frac.empty()) text += "." + frac;
  return text;
}

GroundTruthAssignment select_ground_truth_explanation(const ActivationVector& a,
                                                      std::span<const ConceptVector> concepts) {
  std::optional<GroundTruthAssignment> best;
  for (const auto& c : concepts) {
    require(c.provenance == Provenance::ground_truth, ErrorCode::ProvenanceViolation,
            "candidate concept '" + c.concept_id + "' is not ground truth");
    double rho;
    try {
      rho = exact_correlation(a, c);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSignal) throw;
      continue;
    }
    if (!best || rho > best->rho_gt || (rho == best->rho_gt && c.concept_id < best->concept_id)) {
      best = GroundTruthAssignment{a.neuron_id, c.concept_id, rho};
    }
  }
  if (!best) fail(ErrorCode::AllDegenerate, "no usable ground-truth concept for neuron '" + a.neuron_id + "'");
  if (best->rho_gt == 0.0) {
    fail(ErrorCode::ZeroGroundTruth, "best concept for neuron '" + a.neuron_id + "' has zero correlation");
  }
  return *best;
}

std::vector<GroundTruthAssignment> assign_ground_truth(const Workspace& ws) {
  std::vector<GroundTruthAssignment> out;
  out.reserve(ws.activations.size());
  for (const auto& a : ws.activations) out.push_back(select_ground_truth_explanation(a, ws.truth));
  return out;
}

ConceptVector inject_noise(const ConceptVector& c, double eta, std::uint64_t seed) {
  require(c.provenance == Provenance::ground_truth, ErrorCode::ProvenanceViolation,
          "noise can only be injected into ground-truth concept vectors");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::InvalidArgument, "flip probability must lie in [0, 1]");
  ConceptVector out{c.concept_id, c.values, Provenance::aggregated};
  Rng rng(seed);
  for (double& v : out.values) {
    require(is_bit(v), ErrorCode::ProvenanceViolation, "ground-truth vector has a non-binary value");
    if (rng.bernoulli(eta)) v = 1.0 - v;
  }
  return out;
}

std::vector<RatingSet> simulate_ratings(const ConceptVector& c, std::span<const std::size_t> indices, std::size_t m,
                                        double eta, std::uint64_t seed) {
  require(m >= 1, ErrorCode::InvalidArgument, "at least one rater is required");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::InvalidArgument, "rater error rate must lie in [0, 1]");
  std::vector<std::string> raters(m);
  for (std::size_t j = 0; j < m; ++j) raters[j] = "r" + std::to_string(j + 1);
  Rng rng(seed);
  std::vector<RatingSet> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    require(idx < c.values.size(), ErrorCode::IndexOutOfRange, "input index " + std::to_string(idx) + " out of range");
    const double truth = c.values[idx];
    require(is_bit(truth), ErrorCode::ProvenanceViolation, "ratings need a binary ground-truth label");
    const auto bit = static_cast<std::uint8_t>(truth);
    RatingSet set;
    set.input_index = idx;
    set.concept_id = c.concept_id;
    set.ratings.resize(m);
    for (std::size_t j = 0; j < m; ++j) set.ratings[j] = rng.bernoulli(eta) ? static_cast<std::uint8_t>(1 - bit) : bit;
    set.rater_ids = raters;
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<RatingSet> subsample_ratings(std::span<const RatingSet> sets, std::size_t m, std::uint64_t seed) {
  require(m >= 1, ErrorCode::InvalidArgument, "at least one rating must be kept");
  Rng rng(seed);
  std::vector<RatingSet> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    require(m <= s.size(), ErrorCode::InvalidArgument,
            "input " + std::to_string(s.input_index) + " has fewer than " + std::to_string(m) + " ratings");
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
      std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(order.size() - i))]);
    }
    order.resize(m);
    std::sort(order.begin(), order.end());
    RatingSet kept;
    kept.input_index = s.input_index;
    kept.concept_id = s.concept_id;
    for (std::size_t i : order) {
      kept.ratings.push_back(s.ratings[i]);
      if (i < s.rater_ids.size()) kept.rater_ids.push_back(s.rater_ids[i]);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

void TrialConfig::validate() const {
  require(n_inputs >= 2, ErrorCode::Config, "n_inputs must be at least 2");
  require(raters >= 1, ErrorCode::Config, "raters must be at least 1");
  require(trials >= 1, ErrorCode::Config, "trials must be at least 1");
  require(cost_per_rating > Money{}, ErrorCode::Config, "cost_per_rating must be positive");
  require(strategy == Strategy::uniform || epsilon > 0.0, ErrorCode::Config, "epsilon must be positive");
  require(noise.eta >= 0.0 && noise.eta < 0.5, ErrorCode::Config, "eta must lie in [0, 0.5)");
  require(beta > 0.0 && beta < 1.0, ErrorCode::Config, "beta must lie in (0, 1)");
  require(clip_lo < clip_hi, ErrorCode::Config, "clip_lo must be below clip_hi");
}

Money TrialConfig::cost() const {
  return cost_per_rating * static_cast<std::int64_t>(n_inputs) * static_cast<std::int64_t>(raters);
}

nlohmann::json to_json(const TrialConfig& c) {
  return nlohmann::json{{"strategy", to_string(c.strategy)},
                        {"epsilon", c.epsilon},
                        {"aggregation", to_string(c.aggregation)},
                        {"n_inputs", c.n_inputs},
                        {"raters", c.raters},
                        {"eta", c.noise.eta},
                        {"beta", c.beta},
                        {"clip_lo", c.clip_lo},
                        {"clip_hi", c.clip_hi},
                        {"trials", c.trials},
                        {"seed", c.seed},
                        {"cost_per_rating", c.cost_per_rating.usd()}};
}

TrialConfig trial_config_from_json(const nlohmann::json& j, TrialConfig c) {
  if (!j.is_object()) fail(ErrorCode::Config, "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") c.strategy = strategy_from_string(require_string(v, "strategy"));
    else if (key == "epsilon") c.epsilon = require_number<double>(v, "epsilon");
    else if (key == "aggregation") apply_aggregation(c, require_string(v, "aggregation"), j);
    else if (key == "prior") continue;  // consumed with "aggregation"
    else if (key == "n_inputs") c.n_inputs = require_number<std::size_t>(v, "n_inputs");
    else if (key == "raters") c.raters = require_number<std::size_t>(v, "raters");
    else if (key == "eta") c.noise.eta = require_number<double>(v, "eta");
    else if (key == "beta") c.beta = require_number<double>(v, "beta");
    else if (key == "clip_lo") c.clip_lo = require_number<double>(v, "clip_lo");
    else if (key == "clip_hi") c.clip_hi = require_number<double>(v, "clip_hi");
    else if (key == "trials") c.trials = require_number<std::size_t>(v, "trials");
    else if (key == "seed") c.seed = require_number<std::uint64_t>(v, "seed");
    else if (key == "cost_per_rating") c.cost_per_rating = Money::from_usd(require_number<double>(v, "cost_per_rating"));
    else if (key == "jobs") c.jobs = require_number<std::size_t>(v, "jobs");
    else fail(ErrorCode::Config, "unknown config key '" + key + "'");
  }
  if (j.contains("prior") && !j.contains("aggregation")) {
    apply_aggregation(c, "bayes", j);
  }
  return c;
}

RceReport run_trial(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                    const TrialConfig& config) {
  config.validate();
  require(!assignments.empty(), ErrorCode::InvalidArgument, "no neurons to evaluate");

  std::vector<NeuronContext> ctx(assignments.size());
  for (std::size_t k = 0; k < assignments.size(); ++k) {
    const auto& gt = assignments[k];
    require(gt.rho_gt != 0.0, ErrorCode::ZeroGroundTruth, "neuron '" + gt.neuron_id + "' has zero ground truth");
    const ActivationVector* a = ws.activation(gt.neuron_id);
    if (!a) fail(ErrorCode::InvalidArgument, "unknown neuron '" + gt.neuron_id + "'");
    ctx[k].truth = ws.truth_for(gt.concept_id);
    if (!ctx[k].truth) fail(ErrorCode::InvalidArgument, "unknown ground-truth concept '" + gt.concept_id + "'");
    ctx[k].guide = ws.guide_for(gt.concept_id);
    ctx[k].rho_gt = gt.rho_gt;
    const bool needs_guide = config.strategy == Strategy::guided ||
                             (config.aggregation == Aggregation::bayes_estimator && config.noise.eta != 0.0);
    if (needs_guide && !ctx[k].guide) {
      fail(ErrorCode::MissingGuide, "no cheap-estimator scores for concept '" + gt.concept_id + "'");
    }
    const ConceptVector* plan_guide = config.strategy == Strategy::oracle ? ctx[k].truth : ctx[k].guide;
    ctx[k].plan = build_plan(*a, plan_guide, config.strategy, config.epsilon);
    ctx[k].estimator.emplace(*a);
  }

  const std::size_t K = ctx.size();
  const std::size_t T = config.trials;
  std::vector<TrialOutcome> outcomes(K * T);
  parallel_for(K * T, config.jobs, [&](std::size_t task) {
    const std::size_t k = task / T;
    const std::size_t t = task % T;
    outcomes[task] = run_one(ctx[k], config, k, t);
  });

  RceReport report;
  report.cost = config.cost();
  report.trials = T;
  report.per_neuron.assign(K, 0.0);
  report.estimates.assign(K, std::vector<double>(T));
  std::vector<double> per_trial(T, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto& o = outcomes[k * T + t];
      report.estimates[k][t] = o.rho;
      if (o.degenerate) ++report.degenerate;
      const double err = std::abs(o.rho - ctx[k].rho_gt) / std::abs(ctx[k].rho_gt);
      report.per_neuron[k] += err;
      per_trial[t] += err;
    }
    report.per_neuron[k] /= static_cast<double>(T);
  }
  double total = 0.0;
  for (double& r : per_trial) {
    r /= static_cast<double>(K);
    total += r;
  }
  report.rce = total / static_cast<double>(T);
  if (T > 1) {
    double ss = 0.0;
    for (double r : per_trial) ss += (r - report.rce) * (r - report.rce);
    report.standard_error = std::sqrt(ss / static_cast<double>(T - 1)) / std::sqrt(static_cast<double>(T));
  }
  return report;
}

std::vector<TrialConfig> SweepGrid::expand() const {
  require(!strategies.empty() && !aggregations.empty() && !raters.empty(), ErrorCode::Config,
          "sweep grid axes must be non-empty");
  require(!costs.empty() || !n_inputs.empty(), ErrorCode::Config, "sweep grid needs n_inputs or costs");
  std::vector<TrialConfig> out;
  for (Strategy s : strategies) {
    for (Aggregation a : aggregations) {
      for (std::size_t m : raters) {
        TrialConfig c = base;
        c.strategy = s;
        c.aggregation = a;
        c.raters = m;
        if (costs.empty()) {
          for (std::size_t n : n_inputs) {
            c.n_inputs = n;
            out.push_back(c);
          }
        } else {
          require(m >= 1, ErrorCode::Config, "raters must be at least 1");
          for (Money cost : costs) {
            const auto per_input = c.cost_per_rating.micros() * static_cast<std::int64_t>(m);
            const auto n = static_cast<std::size_t>(cost.micros() / per_input);
            if (n < 2) continue;
            c.n_inputs = n;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "sweep config must be a JSON object");
  SweepGrid g;
  nlohmann::json scalars = nlohmann::json::object();
  auto as_list = [](const nlohmann::json& v) { return v.is_array() ? v : nlohmann::json::array({v}); };
  for (const auto& [key, v] : j.items()) {
    if (key == "strategies" || (key == "strategy" && v.is_array())) {
      g.strategies.clear();
      for (const auto& s : as_list(v)) g.strategies.push_back(strategy_from_string(require_string(s, "strategies")));
    } else if (key == "aggregations" || (key == "aggregation" && v.is_array())) {
      g.aggregations.clear();
      for (const auto& a : as_list(v)) {
        TrialConfig tmp;
        apply_aggregation(tmp, require_string(a, "aggregations"), j);
        g.aggregations.push_back(tmp.aggregation);
      }
    } else if (key == "raters" && v.is_array()) {
      g.raters.clear();
      for (const auto& m : v) g.raters.push_back(require_number<std::size_t>(m, "raters"));
    } else if (key == "n_inputs" && v.is_array()) {
      g.n_inputs.clear();
      for (const auto& n : v) g.n_inputs.push_back(require_number<std::size_t>(n, "n_inputs"));
    } else if (key == "costs") {
      for (const auto& c : as_list(v)) g.costs.push_back(Money::from_usd(require_number<double>(c, "costs")));
    } else if (key == "betas") {
      continue;  // read by the beta sweep
    } else {
      scalars[key] = v;
    }
  }
  g.base = trial_config_from_json(scalars);
  if (scalars.contains("strategy")) g.strategies = {g.base.strategy};
  if (scalars.contains("aggregation") || scalars.contains("prior")) g.aggregations = {g.base.aggregation};
  if (scalars.contains("raters")) g.raters = {g.base.raters};
  if (scalars.contains("n_inputs")) g.n_inputs = {g.base.n_inputs};
  return g;
}

std::vector<SweepRow> sweep_cost_error(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                                       std::span<const TrialConfig> grid) {
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const auto& c : grid) {
    const RceReport r = run_trial(ws, assignments, c);
    rows.push_back({c.strategy, c.aggregation, c.raters, c.n_inputs, r.cost, r.rce, r.standard_error});
  }
  return rows;
}

std::vector<SweepRow> cost_envelope(std::span<const SweepRow> rows) {
  using Key = std::tuple<Strategy, Aggregation, std::int64_t>;
  std::map<Key, std::size_t> best;
  std::vector<Key> order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Key key{rows[i].strategy, rows[i].aggregation, rows[i].cost.micros()};
    auto [it, inserted] = best.emplace(key, i);
    if (inserted) {
      order.push_back(key);
      continue;
    }
    const SweepRow& cur = rows[it->second];
    if (rows[i].rce < cur.rce || (rows[i].rce == cur.rce && rows[i].raters < cur.raters)) it->second = i;
  }
  std::vector<SweepRow> out;
  for (const auto& key : order) out.push_back(rows[best[key]]);
  return out;
}

SweepRow optimal_rater_count(std::span<const SweepRow> rows, Money budget) {
  require(!rows.empty(), ErrorCode::InvalidArgument, "sweep table is empty");
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.cost > budget) continue;
    if (!best || r.rce < best->rce || (r.rce == best->rce && r.raters < best->raters) ||
        (r.rce == best->rce && r.raters == best->raters && r.cost < best->cost)) {
      best = &r;
    }
  }
  if (!best) fail(ErrorCode::NoFeasibleCell, "no sweep cell fits a budget of " + budget.to_string() + " USD");
  return *best;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "strategy,aggregation,m,n_inputs,cost_usd,rce,stderr\n";
  for (const auto& r : rows) {
    out << to_string(r.strategy) << ',' << to_string(r.aggregation) << ',' << r.raters << ',' << r.n_inputs << ','
        << r.cost.to_string() << ',' << format_double(r.rce) << ',' << format_double(r.standard_error) << '\n';
  }
}

std::vector<BetaRow> sweep_prior_beta(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                                      const TrialConfig& config, std::span<const double> betas) {
  require(!betas.empty(), ErrorCode::Config, "no beta values to sweep");
  std::vector<BetaRow> rows;
  for (double beta : betas) {
    TrialConfig c = config;
    c.aggregation = Aggregation::bayes_uniform;
    c.beta = beta;
    const RceReport r = run_trial(ws, assignments, c);
    rows.push_back({beta, r.rce, r.standard_error});
  }
  return rows;
}

void write_beta_csv(std::span<const BetaRow> rows, std::ostream& out) {
  out << "beta,rce,stderr\n";
  for (const auto& r : rows) {
    out << format_double(r.beta) << ',' << format_double(r.rce) << ',' << format_double(r.standard_error) << '\n';
  }
}

}  // namespace ngauge
