#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ngauge {

/// Seeded random stream. The engine is std::mt19937_64 (fully specified by
/// the standard); the distributions below are implemented here because the
/// standard library's distributions are implementation-defined, and every
/// command must be byte-stable across toolchains at a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed for a hierarchical stream: master -> neuron -> trial -> stage.
/// Identical (parent, path) pairs always give identical children.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept;

/// Stage tags used with derive_seed so that sweeps sharing a stage share randomness.
enum class Stage : std::uint64_t {
  Sample = 0x53414d50,
  Ratings = 0x52415453,
  Noise = 0x4e4f4953,
};

}  // namespace ngauge
