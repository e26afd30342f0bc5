#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "neurongauge/workspace.hpp"

namespace ngauge {

/// Synthetic rare-concept workspace. Neuron k ("n<k>") fires on concept
/// "c<k>": activation = signal·bit + N(0,1). The guide for "c<k>" is a noisy
/// cheap estimator: a fraction of positives is flipped to 0 and the same
/// number of negatives to 1, then score = sigmoid(sharpness·(2·bit − 1) + N(0,1)).
struct BenchmarkSpec {
  std::size_t inputs = 50000;
  std::size_t neurons = 5;
  double prevalence = 0.01;
  double signal = 3.0;
  double guide_flip_rate = 0.1;
  double guide_sharpness = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Workspace make_benchmark(const BenchmarkSpec& spec);

/// Writes activations.csv, truth.csv and guide.csv into `dir` (created if needed).
void write_workspace(const Workspace& ws, const std::filesystem::path& dir);

}  // namespace ngauge
