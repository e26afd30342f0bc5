#include "neurongauge/benchmark.hpp"

#include <algorithm>
#include <cmath>

#include "neurongauge/error.hpp"
#include "neurongauge/random.hpp"

namespace ngauge {

namespace {

enum : std::uint64_t { kBits = 1, kActivation = 2, kGuide = 3 };

/// First k entries of a partial Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void BenchmarkSpec::validate() const {
  require(inputs >= 2, ErrorCode::Config, "benchmark needs at least 2 inputs");
  require(neurons >= 1, ErrorCode::Config, "benchmark needs at least 1 neuron");
  require(prevalence > 0.0 && prevalence < 1.0, ErrorCode::Config, "prevalence must lie in (0, 1)");
  require(guide_flip_rate >= 0.0 && guide_flip_rate <= 1.0, ErrorCode::Config, "guide flip rate must lie in [0, 1]");
  require(std::isfinite(signal) && std::isfinite(guide_sharpness), ErrorCode::Config, "benchmark parameters must be finite");
}

Workspace make_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  const std::size_t n = spec.inputs;
  Workspace ws;
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "x" + std::to_string(i);
  ws.index = ProbingIndex(std::move(ids));

  const auto positives = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.prevalence * static_cast<double>(n))), 1, n - 1);

  for (std::size_t k = 0; k < spec.neurons; ++k) {
    const std::string neuron = "n" + std::to_string(k);
    const std::string concept_name = "c" + std::to_string(k);

    Rng bits_rng(derive_seed(spec.seed, {k, kBits}));
    std::vector<double> bit(n, 0.0);
    for (std::size_t i : choose(iota_vec(n), positives, bits_rng)) bit[i] = 1.0;

    Rng act_rng(derive_seed(spec.seed, {k, kActivation}));
    std::vector<double> act(n);
    for (std::size_t i = 0; i < n; ++i) act[i] = spec.signal * bit[i] + act_rng.normal();

    Rng guide_rng(derive_seed(spec.seed, {k, kGuide}));
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (bit[i] == 1.0 ? pos : neg).push_back(i);
    const auto flips = std::min(
        static_cast<std::size_t>(std::llround(spec.guide_flip_rate * static_cast<double>(pos.size()))), neg.size());
    std::vector<double> noisy = bit;
    for (std::size_t i : choose(pos, flips, guide_rng)) noisy[i] = 0.0;
    for (std::size_t i : choose(neg, flips, guide_rng)) noisy[i] = 1.0;
    std::vector<double> guide(n);
    for (std::size_t i = 0; i < n; ++i) {
      guide[i] = sigmoid(spec.guide_sharpness * (2.0 * noisy[i] - 1.0) + guide_rng.normal());
    }

    ws.activations.push_back({neuron, std::move(act)});
    ws.truth.push_back({concept_name, std::move(bit), Provenance::ground_truth});
    ws.guides.push_back({concept_name, std::move(guide), Provenance::cheap_estimator});
  }
  return ws;
}

void write_workspace(const Workspace& ws, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  ActivationSet acts{ws.index, ws.activations};
  write_matrix(to_matrix(acts), dir / "activations.csv", MatrixFormat::csv);
  ConceptSet truth{ws.index, ws.truth};
  write_matrix(to_matrix(truth), dir / "truth.csv", MatrixFormat::csv);
  if (!ws.guides.empty()) {
    ConceptSet guides{ws.index, ws.guides};
    write_matrix(to_matrix(guides), dir / "guide.csv", MatrixFormat::csv);
  }
}

}  // namespace ngauge
