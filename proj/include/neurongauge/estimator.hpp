#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "neurongauge/dataset.hpp"

namespace ngauge {

inline constexpr double kDefaultEpsilon = 0.001;

/// How the proposal distribution q over the probing dataset is built.
///  - uniform:        q_i = 1/|D|
///  - activation_sq:  q_i ∝ â_i² + ε
///  - guided:         q_i ∝ |â_i·ĝ_i + ε| / |D|, ĝ the standardized cheap-estimator score
///  - oracle:         q_i ∝ |h_i| + ε with h_i = â_i·ĉ_i from the true labels (testing only)
enum class Strategy { uniform, activation_sq, guided, oracle };

std::string_view to_string(Strategy s) noexcept;
/// Accepts both "activation_sq" and "activation-sq".
Strategy strategy_from_string(std::string_view text);

struct SamplingPlan {
  Strategy strategy = Strategy::uniform;
  double epsilon = 0.0;
  double reference_probability = 0.0;  // p_i, identical for every input
  std::vector<double> q;               // proposal, sums to 1
  std::vector<double> h_abs;           // magnitude the proposal was built from (before ε)
  std::vector<double> cdf;             // running sum of q, last entry forced to 1

  std::size_t size() const noexcept { return q.size(); }
  double p(std::size_t) const noexcept { return reference_probability; }
  double weight(std::size_t i) const { return reference_probability / q.at(i); }
};

struct Sample {
  std::vector<std::size_t> indices;  // i.i.d. draws from q, with replacement
  std::vector<double> weights;       // p/q at each drawn index
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return indices.size(); }
};

struct EstimateResult {
  double rho = 0.0;      // clamped to [-1, 1]
  double rho_raw = 0.0;  // before clamping; finite-sample IS can overshoot
  std::size_t sample_size = 0;
  double effective_sample_size = 0.0;  // (Σw)² / Σw²
  double concept_mean = 0.0;           // μ_S(c)
  double concept_std = 0.0;            // σ_S(c)
};

/// Pearson correlation with population normalization throughout.
/// Throws DegenerateSignal if either vector is constant, DimensionMismatch on
/// unequal lengths.
double exact_correlation(std::span<const double> a, std::span<const double> c);
double exact_correlation(const ActivationVector& a, const ConceptVector& c);

/// Builds the proposal for a neuron. `guide` holds cheap-estimator scores for
/// guided plans and ground-truth labels for oracle plans; it is ignored
/// otherwise. epsilon must be > 0 unless the strategy is uniform.
SamplingPlan build_plan(const ActivationVector& a, const ConceptVector* guide, Strategy strategy,
                        double epsilon = kDefaultEpsilon);

/// Unnormalized guided mass |product_i + ε| for standardized products â_i·ĝ_i.
std::vector<double> guided_mass(std::span<const double> products, double epsilon);

/// Normalizes `mass` into a plan; every entry must be positive and finite.
SamplingPlan plan_from_mass(Strategy strategy, double epsilon, std::vector<double> h_abs,
                            std::span<const double> mass);

/// Restores the derived fields (cdf, reference probability) of a plan whose
/// q was read from disk. Validates that q sums to 1 within 1e-9.
void finalize_plan(SamplingPlan& plan);

/// n i.i.d. draws with replacement from q; deterministic for a given seed.
Sample draw_sample(const SamplingPlan& plan, std::size_t n, std::uint64_t seed);

/// Importance-weighted correlation estimate. Activation statistics come from
/// the full dataset; concept statistics are estimated from the sample:
///   μ_S = (1/|S|) Σ w c,  σ_S = sqrt( (1/(|S|-1)) Σ w (c - μ_S)² ),
///   ρ_S = (1/|S|) Σ w â ĉ.
/// Construct once per neuron and reuse across samples.
class CorrelationEstimator {
 public:
  explicit CorrelationEstimator(std::span<const double> activations);
  explicit CorrelationEstimator(const ActivationVector& a) : CorrelationEstimator(a.values) {}

  /// `labels[j]` is the concept value for occurrence `sample.indices[j]`.
  /// Throws DegenerateConcept when every sampled label is equal.
  EstimateResult estimate(const Sample& sample, std::span<const double> labels) const;

  std::span<const double> standardized() const noexcept { return standardized_; }
  const NormalizationStats& stats() const noexcept { return stats_; }

 private:
  NormalizationStats stats_;
  std::vector<double> standardized_;
};

EstimateResult estimate_correlation(const ActivationVector& a, const Sample& sample,
                                    std::span<const double> labels);

/// Picks per-occurrence labels out of a full-length concept vector.
std::vector<double> gather_labels(const Sample& sample, std::span<const double> full);

struct CorrelationPair {
  double estimate;
  double ground_truth;
};

/// Mean of |ρ_S − ρ_gt| / |ρ_gt|. Throws ZeroGroundTruth if any ρ_gt is 0.
double relative_correlation_error(std::span<const CorrelationPair> pairs);

}  // namespace ngauge
