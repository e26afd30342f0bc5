#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ngauge {

inline constexpr double kDefaultEta = 0.13;
inline constexpr double kDefaultBeta = 0.01;
inline constexpr double kDefaultClipLo = 0.001;
inline constexpr double kDefaultClipHi = 0.999;
inline constexpr double kMaxEta = 0.4999;

/// The m binary ratings collected for one (input, concept) pair.
struct RatingSet {
  std::size_t input_index = 0;
  std::string concept_id;
  std::vector<std::uint8_t> ratings;
  std::vector<std::string> rater_ids;  // aligned with ratings; may be empty in simulation

  std::size_t size() const noexcept { return ratings.size(); }
  std::size_t positives() const noexcept;
};

/// Raters flip the true label independently with probability eta.
struct NoiseModel {
  double eta = kDefaultEta;

  void validate() const;
};

enum class PriorKind { uniform, estimator };

/// P(c* = 1) before seeing ratings: a constant beta, or cheap-estimator scores
/// clipped to [clip_lo, clip_hi]. `scores` is non-owning and indexed by input.
struct Prior {
  PriorKind kind = PriorKind::uniform;
  double beta = kDefaultBeta;
  std::span<const double> scores;
  double clip_lo = kDefaultClipLo;
  double clip_hi = kDefaultClipHi;

  static Prior uniform(double beta = kDefaultBeta);
  static Prior estimator(std::span<const double> scores, double clip_lo = kDefaultClipLo,
                         double clip_hi = kDefaultClipHi);

  void validate() const;
  /// Prior probability at an input; throws MissingPriorScore when absent.
  double at(std::size_t input_index) const;
};

enum class Aggregation { average, majority, bayes_uniform, bayes_estimator };

std::string_view to_string(Aggregation a) noexcept;
Aggregation aggregation_from_string(std::string_view text);

double aggregate_average(const RatingSet& r);

/// 1 iff the mean rating exceeds 0.5; ties go to 0.
int aggregate_majority(const RatingSet& r);

/// Posterior P(c* = 1 | ratings) under the symmetric noise model.
double aggregate_bayes(const RatingSet& r, const NoiseModel& noise, const Prior& prior);

/// The posterior from counts alone. An even split returns the prior exactly.
double bayes_posterior(std::size_t positives, std::size_t m, double eta, double prior);

/// Dispatches on `method`; the prior is only consulted by the Bayes variants.
double aggregate(const RatingSet& r, Aggregation method, const NoiseModel& noise, const Prior& prior);

struct CalibrationItem {
  RatingSet ratings;
  int truth = 0;  // ground-truth bit for the pair
};

struct Calibration {
  NoiseModel noise;
  std::size_t n_ratings = 0;
  std::size_t disagreements = 0;
  double raw_rate = 0.0;
  bool clamped = false;  // raw rate reached 0.5 and was clamped to kMaxEta
};

/// Pooled fraction of individual ratings that disagree with ground truth.
Calibration calibrate_error_rate(std::span<const CalibrationItem> items);

}  // namespace ngauge
