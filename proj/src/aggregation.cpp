#include "neurongauge/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "neurongauge/error.hpp"

namespace ngauge {

namespace {

void check_ratings(const RatingSet& r) {
  if (r.ratings.empty()) fail(ErrorCode::EmptyRatings, "no ratings for input " + std::to_string(r.input_index));
  for (auto bit : r.ratings) {
    require(bit <= 1, ErrorCode::InvalidArgument, "ratings must be 0 or 1");
  }
}

}  // namespace

std::size_t RatingSet::positives() const noexcept {
  return static_cast<std::size_t>(std::count(ratings.begin(), ratings.end(), std::uint8_t{1}));
}

void NoiseModel::validate() const {
  require(eta >= 0.0 && eta < 0.5, ErrorCode::InvalidArgument, "rater error rate must lie in [0, 0.5)");
}

Prior Prior::uniform(double beta) {
  Prior p;
  p.kind = PriorKind::uniform;
  p.beta = beta;
  return p;
}

Prior Prior::estimator(std::span<const double> scores, double clip_lo, double clip_hi) {
  Prior p;
  p.kind = PriorKind::estimator;
  p.scores = scores;
  p.clip_lo = clip_lo;
  p.clip_hi = clip_hi;
  return p;
}

void Prior::validate() const {
  require(clip_lo < clip_hi, ErrorCode::InvalidArgument, "prior clip bounds must satisfy lo < hi");
  if (kind == PriorKind::uniform) {
    require(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
  }
}

double Prior::at(std::size_t input_index) const {
  if (kind == PriorKind::uniform) return beta;
  if (input_index >= scores.size() || !std::isfinite(scores[input_index])) {
    fail(ErrorCode::MissingPriorScore, "no estimator score for input " + std::to_string(input_index));
  }
  return std::clamp(scores[input_index], clip_lo, clip_hi);
}

std::string_view to_string(Aggregation a) noexcept {
  switch (a) {
    case Aggregation::average: return "average";
    case Aggregation::majority: return "majority";
    case Aggregation::bayes_uniform: return "bayes_uniform";
    case Aggregation::bayes_estimator: return "bayes_estimator";
  }
  return "unknown";
}

Aggregation aggregation_from_string(std::string_view text) {
  if (text == "average") return Aggregation::average;
  if (text == "majority") return Aggregation::majority;
  if (text == "bayes_uniform" || text == "bayes-uniform") return Aggregation::bayes_uniform;
  if (text == "bayes_estimator" || text == "bayes-estimator") return Aggregation::bayes_estimator;
  fail(ErrorCode::Config, "unknown aggregation method '" + std::string(text) + "'");
}

double aggregate_average(const RatingSet& r) {
  check_ratings(r);
  return static_cast<double>(r.positives()) / static_cast<double>(r.size());
}

int aggregate_majority(const RatingSet& r) {
  check_ratings(r);
  return 2 * r.positives() > r.size() ? 1 : 0;
}

double bayes_posterior(std::size_t positives, std::size_t m, double eta, double prior) {
  const long long balance = 2 * static_cast<long long>(positives) - static_cast<long long>(m);
  // Symmetric likelihoods cancel; skip the arithmetic so the prior comes back unchanged.
  if (balance == 0) return prior;
  // P(R|c*=0) / P(R|c*=1) = (eta / (1 - eta))^(2α - m)
  const double ratio = std::pow(eta / (1.0 - eta), static_cast<double>(balance));
  return prior / (prior + (1.0 - prior) * ratio);
}

double aggregate_bayes(const RatingSet& r, const NoiseModel& noise, const Prior& prior) {
  check_ratings(r);
  noise.validate();
  return bayes_posterior(r.positives(), r.size(), noise.eta, prior.at(r.input_index));
}

double aggregate(const RatingSet& r, Aggregation method, const NoiseModel& noise, const Prior& prior) {
  switch (method) {
    case Aggregation::average: return aggregate_average(r);
    case Aggregation::majority: return aggregate_majority(r);
    case Aggregation::bayes_uniform:
    case Aggregation::bayes_estimator: return aggregate_bayes(r, noise, prior);
  }
  return 0.0;
}

Calibration calibrate_error_rate(std::span<const CalibrationItem> items) {
  Calibration c;
  for (const auto& item : items) {
    require(item.truth == 0 || item.truth == 1, ErrorCode::InvalidArgument, "ground truth must be 0 or 1");
    for (auto bit : item.ratings.ratings) {
      ++c.n_ratings;
      if (static_cast<int>(bit) != item.truth) ++c.disagreements;
    }
  }
  if (c.n_ratings == 0) fail(ErrorCode::NoCalibrationData, "no ratings with ground truth to calibrate against");
  c.raw_rate = static_cast<double>(c.disagreements) / static_cast<double>(c.n_ratings);
  c.noise.eta = c.raw_rate;
  if (c.raw_rate > kMaxEta) {
    c.noise.eta = kMaxEta;
    c.clamped = true;
    spdlog::warn("calibrated rater error rate {:.4f} is at or above 0.5; clamped to {}", c.raw_rate, kMaxEta);
  }
  return c;
}

}  // namespace ngauge
