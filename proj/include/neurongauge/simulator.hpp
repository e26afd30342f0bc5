#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurongauge/aggregation.hpp"
#include "neurongauge/estimator.hpp"
#include "neurongauge/workspace.hpp"

namespace ngauge {

/// US dollars held as integer micro-dollars so cost arithmetic is exact.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money from_micros(std::int64_t micros) { return Money(micros); }
  /// Rounds to the nearest micro-dollar.
  static Money from_usd(double usd);

  constexpr std::int64_t micros() const noexcept { return micros_; }
  double usd() const noexcept { return static_cast<double>(micros_) / 1e6; }
  /// Plain decimal without trailing zeros, e.g. "0.72".
  std::string to_string() const;

  constexpr Money operator*(std::int64_t k) const { return Money(micros_ * k); }
  constexpr Money operator+(Money o) const { return Money(micros_ + o.micros_); }
  constexpr auto operator<=>(const Money&) const = default;

 private:
  constexpr explicit Money(std::int64_t micros) : micros_(micros) {}
  std::int64_t micros_ = 0;
};

inline constexpr Money kDefaultCostPerRating = Money::from_micros(4000);  // $0.06 per 15-input task

struct GroundTruthAssignment {
  std::string neuron_id;
  std::string concept_id;
  double rho_gt = 0.0;
};

/// The ground-truth concept most correlated with `a`; ties go to the
/// lexicographically smaller concept id. Constant concepts are skipped.
/// Throws AllDegenerate if no candidate is usable.
GroundTruthAssignment select_ground_truth_explanation(const ActivationVector& a,
                                                      std::span<const ConceptVector> concepts);

/// One assignment per neuron of the workspace, in workspace order.
std::vector<GroundTruthAssignment> assign_ground_truth(const Workspace& ws);

/// Flips each bit of a ground-truth vector independently with probability eta.
ConceptVector inject_noise(const ConceptVector& c, double eta, std::uint64_t seed);

/// m ratings per listed input, each equal to the true bit with probability
/// 1 - eta. Rater ids are "r1".."rm".
std::vector<RatingSet> simulate_ratings(const ConceptVector& c, std::span<const std::size_t> indices, std::size_t m,
                                        double eta, std::uint64_t seed);

/// Keeps m ratings of each set, chosen without replacement.
std::vector<RatingSet> subsample_ratings(std::span<const RatingSet> sets, std::size_t m, std::uint64_t seed);

struct TrialConfig {
  Strategy strategy = Strategy::guided;
  double epsilon = kDefaultEpsilon;
  Aggregation aggregation = Aggregation::bayes_estimator;
  std::size_t n_inputs = 90;
  std::size_t raters = 2;
  NoiseModel noise;
  double beta = kDefaultBeta;
  double clip_lo = kDefaultClipLo;
  double clip_hi = kDefaultClipHi;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  Money cost_per_rating = kDefaultCostPerRating;
  std::size_t jobs = 1;

  void validate() const;
  /// n_inputs × raters × cost_per_rating.
  Money cost() const;
};

nlohmann::json to_json(const TrialConfig& c);
/// Missing keys keep their defaults; unknown keys are a Config error.
TrialConfig trial_config_from_json(const nlohmann::json& j, TrialConfig base = {});

struct RceReport {
  double rce = 0.0;                 // mean over neurons and trials
  double standard_error = 0.0;      // over per-trial RCE (averaged across neurons)
  std::vector<double> per_neuron;   // mean RCE per neuron
  Money cost;                       // per neuron
  std::size_t trials = 0;
  std::size_t degenerate = 0;       // samples whose labels were all equal
  std::vector<std::vector<double>> estimates;  // [neuron][trial] ρ_S
};

/// For each neuron and trial: draw n_inputs from the plan, simulate m ratings
/// per distinct drawn input, aggregate, estimate and score against ρ_gt.
/// A sample whose labels are all equal counts as ρ_S = 0.
RceReport run_trial(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                    const TrialConfig& config);

struct SweepRow {
  Strategy strategy = Strategy::uniform;
  Aggregation aggregation = Aggregation::average;
  std::size_t raters = 0;
  std::size_t n_inputs = 0;
  Money cost;
  double rce = 0.0;
  double standard_error = 0.0;
};

/// Cartesian grid over strategies × aggregations × raters × (n_inputs or
/// costs). When `costs` is non-empty, n_inputs is derived per cell as
/// floor(cost / (m · cost_per_rating)) and cells below 2 inputs are skipped.
struct SweepGrid {
  TrialConfig base;
  std::vector<Strategy> strategies{Strategy::guided};
  std::vector<Aggregation> aggregations{Aggregation::bayes_estimator};
  std::vector<std::size_t> raters{1, 2, 3, 4, 5};
  std::vector<std::size_t> n_inputs{90};
  std::vector<Money> costs;

  std::vector<TrialConfig> expand() const;
};

SweepGrid sweep_grid_from_json(const nlohmann::json& j);

std::vector<SweepRow> sweep_cost_error(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                                       std::span<const TrialConfig> grid);

/// For each (strategy, aggregation, cost) keeps the row with the lowest RCE
/// across rater counts; ties go to fewer raters.
std::vector<SweepRow> cost_envelope(std::span<const SweepRow> rows);

/// Cheapest-error cell whose cost fits the budget; ties go to fewer raters.
/// Throws NoFeasibleCell.
SweepRow optimal_rater_count(std::span<const SweepRow> rows, Money budget);

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

struct BetaRow {
  double beta = 0.0;
  double rce = 0.0;
  double standard_error = 0.0;
};

/// run_trial with a uniform-prior Bayes aggregator for each beta. Seeds are
/// shared, so only the aggregation differs between rows.
std::vector<BetaRow> sweep_prior_beta(const Workspace& ws, std::span<const GroundTruthAssignment> assignments,
                                      const TrialConfig& config, std::span<const double> betas);

void write_beta_csv(std::span<const BetaRow> rows, std::ostream& out);

}  // namespace ngauge
