#include "neurongauge/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "neurongauge/error.hpp"
#include "neurongauge/random.hpp"

namespace ngauge {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::activation_sq: return "activation_sq";
    case Strategy::guided: return "guided";
    case Strategy::oracle: return "oracle";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "uniform") return Strategy::uniform;
  if (text == "activation_sq" || text == "activation-sq") return Strategy::activation_sq;
  if (text == "guided") return Strategy::guided;
  if (text == "oracle") return Strategy::oracle;
  fail(ErrorCode::Config, "unknown sampling strategy '" + std::string(text) + "'");
}

double exact_correlation(std::span<const double> a, std::span<const double> c) {
  require(a.size() == c.size(), ErrorCode::DimensionMismatch,
          "correlation of vectors with lengths " + std::to_string(a.size()) + " and " + std::to_string(c.size()));
  const auto sa = normalization_stats(a);
  const auto sc = normalization_stats(c);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - sa.mean) * (c[i] - sc.mean);
  const double rho = acc / static_cast<double>(a.size()) / (sa.std * sc.std);
  return std::clamp(rho, -1.0, 1.0);
}

double exact_correlation(const ActivationVector& a, const ConceptVector& c) {
  return exact_correlation(a.values, c.values);
}

std::vector<double> guided_mass(std::span<const double> products, double epsilon) {
  std::vector<double> mass(products.size());
  for (std::size_t i = 0; i < products.size(); ++i) mass[i] = std::abs(products[i] + epsilon);
  return mass;
}

void finalize_plan(SamplingPlan& plan) {
  const std::size_t n = plan.q.size();
  require(n >= 2, ErrorCode::InvalidArgument, "sampling plan needs at least 2 inputs");
  plan.reference_probability = 1.0 / static_cast<double>(n);
  double total = 0.0;
  plan.cdf.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(plan.q[i]) && plan.q[i] > 0.0, ErrorCode::InvalidArgument,
            "proposal probability at input " + std::to_string(i) + " is not positive");
    total += plan.q[i];
    plan.cdf[i] = total;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidArgument, "proposal does not sum to 1");
  plan.cdf.back() = 1.0;
}

SamplingPlan plan_from_mass(Strategy strategy, double epsilon, std::vector<double> h_abs,
                            std::span<const double> mass) {
  SamplingPlan plan;
  plan.strategy = strategy;
  plan.epsilon = epsilon;
  plan.h_abs = std::move(h_abs);
  double total = 0.0;
  for (double m : mass) {
    require(std::isfinite(m) && m > 0.0, ErrorCode::InvalidArgument,
            "proposal mass must be positive; use epsilon > 0");
    total += m;
  }
  plan.q.resize(mass.size());
  for (std::size_t i = 0; i < mass.size(); ++i) plan.q[i] = mass[i] / total;
  finalize_plan(plan);
  return plan;
}

SamplingPlan build_plan(const ActivationVector& a, const ConceptVector* guide, Strategy strategy, double epsilon) {
  const std::size_t n = a.values.size();
  require(n >= 2, ErrorCode::InvalidArgument, "activation vector needs at least 2 inputs");

  if (strategy == Strategy::uniform) {
    SamplingPlan plan;
    plan.strategy = strategy;
    plan.epsilon = epsilon;
    plan.q.assign(n, 1.0 / static_cast<double>(n));
    plan.h_abs.assign(n, 1.0);
    finalize_plan(plan);
    return plan;
  }

  require(epsilon > 0.0 && std::isfinite(epsilon), ErrorCode::InvalidArgument,
          "epsilon must be > 0 for strategy " + std::string(to_string(strategy)));
  const std::vector<double> a_hat = standardize(a.values);

  if (strategy == Strategy::activation_sq) {
    std::vector<double> h(n), mass(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = a_hat[i] * a_hat[i];
      mass[i] = h[i] + epsilon;
    }
    return plan_from_mass(strategy, epsilon, std::move(h), mass);
  }

  if (guide == nullptr) {
    fail(ErrorCode::MissingGuide, std::string("strategy ") + std::string(to_string(strategy)) +
                                      " requires a guide concept vector");
  }
  require(guide->values.size() == n, ErrorCode::DimensionMismatch, "guide length does not match activations");
  const std::vector<double> g_hat = standardize(guide->values);

  std::vector<double> products(n);
  for (std::size_t i = 0; i < n; ++i) products[i] = a_hat[i] * g_hat[i];

  if (strategy == Strategy::guided) {
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = std::abs(products[i]);
    // The common 1/|D| factor cancels in the normalization.
    return plan_from_mass(strategy, epsilon, std::move(h), guided_mass(products, epsilon));
  }

  std::vector<double> h(n), mass(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = std::abs(products[i]);
    mass[i] = h[i] + epsilon;
  }
  return plan_from_mass(strategy, epsilon, std::move(h), mass);
}

Sample draw_sample(const SamplingPlan& plan, std::size_t n, std::uint64_t seed) {
  require(n >= 2, ErrorCode::InvalidArgument, "sample size must be at least 2");
  require(!plan.cdf.empty() && plan.cdf.size() == plan.q.size(), ErrorCode::InvalidArgument,
          "sampling plan is not finalized");
  Rng rng(seed);
  Sample s;
  s.seed = seed;
  s.indices.reserve(n);
  s.weights.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform();
    auto it = std::upper_bound(plan.cdf.begin(), plan.cdf.end(), u);
    if (it == plan.cdf.end()) --it;
    const auto idx = static_cast<std::size_t>(it - plan.cdf.begin());
    s.indices.push_back(idx);
    s.weights.push_back(plan.reference_probability / plan.q[idx]);
  }
  return s;
}

CorrelationEstimator::CorrelationEstimator(std::span<const double> activations)
    : stats_(normalization_stats(activations)), standardized_(activations.size()) {
  for (std::size_t i = 0; i < activations.size(); ++i) {
    standardized_[i] = (activations[i] - stats_.mean) / stats_.std;
  }
}

EstimateResult CorrelationEstimator::estimate(const Sample& sample, std::span<const double> labels) const {
  const std::size_t n = sample.indices.size();
  require(n >= 2, ErrorCode::InvalidArgument, "sample size must be at least 2");
  require(sample.weights.size() == n, ErrorCode::DimensionMismatch, "sample weights misaligned with indices");
  require(labels.size() == n, ErrorCode::DimensionMismatch,
          "expected one label per sampled occurrence (" + std::to_string(n) + "), got " + std::to_string(labels.size()));
  for (std::size_t idx : sample.indices) {
    require(idx < standardized_.size(), ErrorCode::IndexOutOfRange,
            "sample index " + std::to_string(idx) + " outside probing dataset");
  }
  if (std::all_of(labels.begin(), labels.end(), [&](double v) { return v == labels.front(); })) {
    fail(ErrorCode::DegenerateConcept, "all sampled labels are equal; concept variance is zero");
  }

  const double dn = static_cast<double>(n);
  double sum_w = 0.0, sum_w2 = 0.0, sum_wc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double w = sample.weights[j];
    sum_w += w;
    sum_w2 += w * w;
    sum_wc += w * labels[j];
  }
  const double mu = sum_wc / dn;
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = labels[j] - mu;
    ss += sample.weights[j] * d * d;
  }
  const double sigma = std::sqrt(ss / (dn - 1.0));
  if (!(sigma > 0.0)) fail(ErrorCode::DegenerateConcept, "weighted concept standard deviation is zero");

  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    acc += sample.weights[j] * standardized_[sample.indices[j]] * ((labels[j] - mu) / sigma);
  }

  EstimateResult r;
  r.rho_raw = acc / dn;
  r.rho = std::clamp(r.rho_raw, -1.0, 1.0);
  r.sample_size = n;
  r.effective_sample_size = sum_w * sum_w / sum_w2;
  r.concept_mean = mu;
  r.concept_std = sigma;
  return r;
}

EstimateResult estimate_correlation(const ActivationVector& a, const Sample& sample, std::span<const double> labels) {
  return CorrelationEstimator(a).estimate(sample, labels);
}

std::vector<double> gather_labels(const Sample& sample, std::span<const double> full) {
  std::vector<double> out;
  out.reserve(sample.indices.size());
  for (std::size_t idx : sample.indices) {
    require(idx < full.size(), ErrorCode::IndexOutOfRange, "sample index " + std::to_string(idx) + " outside label vector");
    out.push_back(full[idx]);
  }
  return out;
}

double relative_correlation_error(std::span<const CorrelationPair> pairs) {
  require(!pairs.empty(), ErrorCode::InvalidArgument, "relative correlation error of an empty list");
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.ground_truth == 0.0) fail(ErrorCode::ZeroGroundTruth, "ground-truth correlation is zero");
    total += std::abs(p.estimate - p.ground_truth) / std::abs(p.ground_truth);
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace ngauge
