#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ngauge {

enum class Provenance { ground_truth, cheap_estimator, aggregated };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view text);

/// The probing dataset D: one opaque id per input, optionally an asset URI
/// the annotation UI can display.
class ProbingIndex {
 public:
  ProbingIndex() = default;
  explicit ProbingIndex(std::vector<std::string> input_ids,
                        std::vector<std::string> asset_uris = {});

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& input_ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }

  /// Empty string when the input has no asset.
  const std::string& asset_uri(std::size_t i) const;
  void set_asset_uris(std::vector<std::string> uris);

  std::optional<std::size_t> find(std::string_view input_id) const;

  bool operator==(const ProbingIndex& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> assets_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct ActivationVector {
  std::string neuron_id;
  std::vector<double> values;
};

struct ConceptVector {
  std::string concept_id;
  std::vector<double> values;
  Provenance provenance = Provenance::cheap_estimator;
};

enum class StdConvention { population, bessel };

struct NormalizationStats {
  double mean = 0.0;
  double std = 0.0;
  StdConvention convention = StdConvention::population;
};

/// Mean and standard deviation; std divides by n (population) or n-1 (bessel).
/// Throws DegenerateSignal when the vector is constant or too short.
NormalizationStats normalization_stats(std::span<const double> values,
                                       StdConvention convention = StdConvention::population);

/// (x - mean) / std over the whole vector, population convention.
std::vector<double> standardize(std::span<const double> values);

enum class MatrixFormat { csv, bin };
enum class MatrixKind { activations, concepts };

/// Infers the format from the extension: ".bin" is binary, anything else CSV.
MatrixFormat format_for_path(const std::filesystem::path& path);

/// Inputs-as-rows, signals-as-columns table as stored on disk.
struct Matrix {
  ProbingIndex index;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // one vector per column, length index.size()
  MatrixKind kind = MatrixKind::activations;
  Provenance provenance = Provenance::cheap_estimator;
};

struct ActivationSet {
  ProbingIndex index;
  std::vector<ActivationVector> vectors;

  const ActivationVector* find(std::string_view neuron_id) const;
};

struct ConceptSet {
  ProbingIndex index;
  std::vector<ConceptVector> vectors;

  const ConceptVector* find(std::string_view concept_id) const;
};

/// Reads a matrix without workspace validation. `provenance` applies to CSV
/// concept files; binary files carry their own in the sidecar.
Matrix read_matrix(const std::filesystem::path& path, MatrixFormat format, MatrixKind kind,
                   Provenance provenance = Provenance::cheap_estimator);

/// Writes the matrix; binary output also writes `<path>.meta.json`.
void write_matrix(const Matrix& matrix, const std::filesystem::path& path, MatrixFormat format);

ActivationSet load_activations(const std::filesystem::path& path,
                               std::optional<MatrixFormat> format = std::nullopt);

ConceptSet load_concepts(const std::filesystem::path& path, Provenance provenance,
                         std::optional<MatrixFormat> format = std::nullopt);

/// Reads an `input_id,asset_uri` CSV and returns URIs aligned to `index`
/// (empty for inputs the file does not mention).
std::vector<std::string> load_asset_uris(const std::filesystem::path& path, const ProbingIndex& index);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

Matrix to_matrix(const ActivationSet& set);
Matrix to_matrix(const ConceptSet& set);

enum class ViolationKind {
  DimensionMismatch,
  ProvenanceViolation,
  RangeError,
  NonFinite,
  DuplicateId,
  IndexTooSmall,
};

std::string_view to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::string subject;  // vector id, or input id for index problems
  std::string message;
};

/// Every invariant violation in the workspace; empty iff usable.
std::vector<Violation> validate_workspace(const ProbingIndex& index,
                                          std::span<const ActivationVector> activations,
                                          std::span<const ConceptVector> concepts);

}  // namespace ngauge
