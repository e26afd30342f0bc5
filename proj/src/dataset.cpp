#include "neurongauge/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "neurongauge/error.hpp"

namespace ngauge {

namespace {

constexpr std::array<char, 4> kMagic = {'N', 'G', 'V', '1'};

std::string_view to_string(MatrixKind kind) {
  return kind == MatrixKind::activations ? "activation" : "concept";
}

// Splits one CSV record. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(field));
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

double parse_cell(std::string_view cell, std::size_t line_no, std::size_t col) {
  auto where = [&] { return "line " + std::to_string(line_no) + ", column " + std::to_string(col + 1); };
  // Surrounding spaces are tolerated; an empty cell is a missing value.
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (cell.empty()) fail(ErrorCode::ParseError, where() + ": blank cell (missing values are not supported)");
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    fail(ErrorCode::ParseError, where() + ": not a number: '" + std::string(cell) + "'");
  }
  if (!std::isfinite(value)) fail(ErrorCode::ParseError, where() + ": non-finite value");
  return value;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

namespace {

Matrix read_csv(const std::filesystem::path& path, MatrixKind kind, Provenance provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  Matrix m;
  m.kind = kind;
  m.provenance = provenance;

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto cells = split_csv_line(line, line_no);
    if (!have_header) {
      if (cells.size() < 2 || cells[0] != "input_id") {
        fail(ErrorCode::ParseError, path.string() + ": header must start with 'input_id' and name at least one column");
      }
      m.columns.assign(cells.begin() + 1, cells.end());
      m.data.resize(m.columns.size());
      have_header = true;
      continue;
    }
    if (cells.size() != m.columns.size() + 1) {
      fail(ErrorCode::DimensionMismatch, path.string() + ": line " + std::to_string(line_no) + " has " +
                                             std::to_string(cells.size()) + " cells, expected " +
                                             std::to_string(m.columns.size() + 1));
    }
    if (cells[0].empty()) fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no) + ": blank input_id");
    ids.push_back(std::move(cells[0]));
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      m.data[c].push_back(parse_cell(cells[c + 1], line_no, c + 1));
    }
  }
  if (!have_header) fail(ErrorCode::ParseError, path.string() + ": empty file");
  m.index = ProbingIndex(std::move(ids));
  return m;
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

Matrix read_bin(const std::filesystem::path& path, MatrixKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    fail(ErrorCode::ParseError, path.string() + ": missing NGV1 magic");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t rows = read_u32_le(raw + 4);
  const std::uint32_t cols = read_u32_le(raw + 8);
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(rows) * cols * 4;
  if (bytes.size() != expected) {
    fail(ErrorCode::ParseError, path.string() + ": payload size " + std::to_string(bytes.size()) +
                                    " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }

  std::ifstream meta_in(sidecar_path(path));
  if (!meta_in) fail(ErrorCode::Io, "cannot open sidecar " + sidecar_path(path).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, sidecar_path(path).string() + ": " + e.what());
  }

  Matrix m;
  m.kind = kind;
  try {
    const auto ids = meta.at("input_ids").get<std::vector<std::string>>();
    m.columns = meta.at("columns").get<std::vector<std::string>>();
    const auto file_kind = meta.at("kind").get<std::string>();
    if (file_kind != to_string(kind)) {
      fail(ErrorCode::ParseError, path.string() + ": sidecar kind '" + file_kind + "', expected '" +
                                      std::string(to_string(kind)) + "'");
    }
    if (meta.contains("provenance") && !meta["provenance"].is_null()) {
      m.provenance = provenance_from_string(meta["provenance"].get<std::string>());
    }
    if (ids.size() != rows || m.columns.size() != cols) {
      fail(ErrorCode::DimensionMismatch, path.string() + ": sidecar shape disagrees with header");
    }
    m.index = ProbingIndex(ids);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, sidecar_path(path).string() + ": " + e.what());
  }

  m.data.assign(cols, std::vector<double>(rows));
  const unsigned char* payload = raw + 12;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      const float f = std::bit_cast<float>(read_u32_le(payload + (static_cast<std::size_t>(r) * cols + c) * 4));
      if (!std::isfinite(f)) {
        fail(ErrorCode::ParseError, path.string() + ": non-finite value at row " + std::to_string(r));
      }
      m.data[c][r] = static_cast<double>(f);
    }
  }
  return m;
}

void check_concept_values(const Matrix& m, const std::string& source) {
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    for (std::size_t r = 0; r < m.data[c].size(); ++r) {
      const double v = m.data[c][r];
      if (v < 0.0 || v > 1.0) {
        fail(ErrorCode::RangeError, source + ": concept '" + m.columns[c] + "' has value " + format_double(v) +
                                        " outside [0,1] at input '" + m.index.id(r) + "'");
      }
      if (m.provenance == Provenance::ground_truth && v != 0.0 && v != 1.0) {
        fail(ErrorCode::ProvenanceViolation, source + ": ground-truth concept '" + m.columns[c] +
                                                 "' has non-binary value at input '" + m.index.id(r) + "'");
      }
    }
  }
}

void check_index(const ProbingIndex& index, const std::string& source) {
  if (index.size() < 2) fail(ErrorCode::DimensionMismatch, source + ": probing dataset needs at least 2 inputs");
  std::set<std::string_view> seen;
  for (const auto& id : index.input_ids()) {
    if (!seen.insert(id).second) fail(ErrorCode::ParseError, source + ": duplicate input_id '" + id + "'");
  }
}

}  // namespace

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::ground_truth: return "ground_truth";
    case Provenance::cheap_estimator: return "cheap_estimator";
    case Provenance::aggregated: return "aggregated";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view text) {
  if (text == "ground_truth") return Provenance::ground_truth;
  if (text == "cheap_estimator") return Provenance::cheap_estimator;
  if (text == "aggregated") return Provenance::aggregated;
  fail(ErrorCode::ParseError, "unknown provenance '" + std::string(text) + "'");
}

std::string_view to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::DimensionMismatch: return "DimensionMismatch";
    case ViolationKind::ProvenanceViolation: return "ProvenanceViolation";
    case ViolationKind::RangeError: return "RangeError";
    case ViolationKind::NonFinite: return "NonFinite";
    case ViolationKind::DuplicateId: return "DuplicateId";
    case ViolationKind::IndexTooSmall: return "IndexTooSmall";
  }
  return "Unknown";
}

ProbingIndex::ProbingIndex(std::vector<std::string> input_ids, std::vector<std::string> asset_uris)
    : ids_(std::move(input_ids)) {
  lookup_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) lookup_.emplace(ids_[i], i);
  set_asset_uris(std::move(asset_uris));
}

const std::string& ProbingIndex::asset_uri(std::size_t i) const {
  static const std::string kEmpty;
  if (i >= ids_.size()) fail(ErrorCode::IndexOutOfRange, "input index " + std::to_string(i) + " out of range");
  return assets_.empty() ? kEmpty : assets_[i];
}

void ProbingIndex::set_asset_uris(std::vector<std::string> uris) {
  if (!uris.empty() && uris.size() != ids_.size()) {
    fail(ErrorCode::DimensionMismatch, "asset URI count does not match probing index size");
  }
  assets_ = std::move(uris);
}

std::optional<std::size_t> ProbingIndex::find(std::string_view input_id) const {
  const auto it = lookup_.find(std::string(input_id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

NormalizationStats normalization_stats(std::span<const double> values, StdConvention convention) {
  const std::size_t n = values.size();
  const std::size_t min_n = convention == StdConvention::bessel ? 2 : 1;
  if (n < min_n) fail(ErrorCode::DegenerateSignal, "vector too short for standard deviation");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double denom = convention == StdConvention::bessel ? static_cast<double>(n - 1) : static_cast<double>(n);
  const double sd = std::sqrt(ss / denom);
  if (!(sd > 0.0)) fail(ErrorCode::DegenerateSignal, "constant vector has zero standard deviation");
  return {mean, sd, convention};
}

std::vector<double> standardize(std::span<const double> values) {
  const auto stats = normalization_stats(values);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - stats.mean) / stats.std;
  return out;
}

MatrixFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? MatrixFormat::bin : MatrixFormat::csv;
}

const ActivationVector* ActivationSet::find(std::string_view neuron_id) const {
  for (const auto& v : vectors)
    if (v.neuron_id == neuron_id) return &v;
  return nullptr;
}

const ConceptVector* ConceptSet::find(std::string_view concept_id) const {
  for (const auto& v : vectors)
    if (v.concept_id == concept_id) return &v;
  return nullptr;
}

Matrix read_matrix(const std::filesystem::path& path, MatrixFormat format, MatrixKind kind, Provenance provenance) {
  return format == MatrixFormat::csv ? read_csv(path, kind, provenance) : read_bin(path, kind);
}

void write_matrix(const Matrix& matrix, const std::filesystem::path& path, MatrixFormat format) {
  const std::size_t rows = matrix.index.size();
  const std::size_t cols = matrix.columns.size();
  require(matrix.data.size() == cols, ErrorCode::DimensionMismatch, "column data count does not match header");
  for (const auto& col : matrix.data) {
    require(col.size() == rows, ErrorCode::DimensionMismatch, "column length does not match probing index");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());

  if (format == MatrixFormat::csv) {
    std::string buf = "input_id";
    for (const auto& c : matrix.columns) buf += "," + csv_escape(c);
    buf += "\n";
    for (std::size_t r = 0; r < rows; ++r) {
      buf += csv_escape(matrix.index.id(r));
      for (std::size_t c = 0; c < cols; ++c) {
        buf += ",";
        buf += format_double(matrix.data[c][r]);
      }
      buf += "\n";
    }
    out << buf;
  } else {
    std::string buf(kMagic.begin(), kMagic.end());
    put_u32_le(buf, static_cast<std::uint32_t>(rows));
    put_u32_le(buf, static_cast<std::uint32_t>(cols));
    buf.reserve(buf.size() + rows * cols * 4);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        put_u32_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(matrix.data[c][r])));
      }
    }
    out << buf;

    nlohmann::json meta;
    meta["input_ids"] = matrix.index.input_ids();
    meta["columns"] = matrix.columns;
    meta["kind"] = to_string(matrix.kind);
    if (matrix.kind == MatrixKind::concepts) {
      meta["provenance"] = to_string(matrix.provenance);
    } else {
      meta["provenance"] = nullptr;
    }
    std::ofstream side(sidecar_path(path), std::ios::trunc);
    if (!side) fail(ErrorCode::Io, "cannot write " + sidecar_path(path).string());
    side << meta.dump() << "\n";
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

ActivationSet load_activations(const std::filesystem::path& path, std::optional<MatrixFormat> format) {
  Matrix m = read_matrix(path, format.value_or(format_for_path(path)), MatrixKind::activations);
  check_index(m.index, path.string());
  ActivationSet set;
  set.index = std::move(m.index);
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    set.vectors.push_back({m.columns[c], std::move(m.data[c])});
  }
  return set;
}

ConceptSet load_concepts(const std::filesystem::path& path, Provenance provenance, std::optional<MatrixFormat> format) {
  Matrix m = read_matrix(path, format.value_or(format_for_path(path)), MatrixKind::concepts, provenance);
  check_index(m.index, path.string());
  check_concept_values(m, path.string());
  ConceptSet set;
  set.index = std::move(m.index);
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    set.vectors.push_back({m.columns[c], std::move(m.data[c]), m.provenance});
  }
  return set;
}

std::vector<std::string> load_asset_uris(const std::filesystem::path& path, const ProbingIndex& index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::string> uris(index.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line, line_no);
    if (line_no == 1 && !cells.empty() && cells[0] == "input_id") continue;
    if (cells.size() != 2) fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no) + " needs 2 cells");
    const auto pos = index.find(cells[0]);
    if (!pos) fail(ErrorCode::ParseError, path.string() + ": unknown input_id '" + cells[0] + "'");
    uris[*pos] = std::move(cells[1]);
  }
  return uris;
}

Matrix to_matrix(const ActivationSet& set) {
  Matrix m;
  m.index = set.index;
  m.kind = MatrixKind::activations;
  for (const auto& v : set.vectors) {
    m.columns.push_back(v.neuron_id);
    m.data.push_back(v.values);
  }
  return m;
}

Matrix to_matrix(const ConceptSet& set) {
  Matrix m;
  m.index = set.index;
  m.kind = MatrixKind::concepts;
  m.provenance = set.vectors.empty() ? Provenance::cheap_estimator : set.vectors.front().provenance;
  for (const auto& v : set.vectors) {
    m.columns.push_back(v.concept_id);
    m.data.push_back(v.values);
  }
  return m;
}

std::vector<Violation> validate_workspace(const ProbingIndex& index, std::span<const ActivationVector> activations,
                                          std::span<const ConceptVector> concepts) {
  std::vector<Violation> report;
  const std::size_t n = index.size();
  if (n < 2) {
    report.push_back({ViolationKind::IndexTooSmall, "", "probing dataset has " + std::to_string(n) + " inputs; need >= 2"});
  }
  std::set<std::string_view> seen;
  for (const auto& id : index.input_ids()) {
    if (!seen.insert(id).second) report.push_back({ViolationKind::DuplicateId, id, "duplicate input id"});
  }

  auto check_length = [&](const std::string& id, std::size_t len) {
    if (len != n) {
      report.push_back({ViolationKind::DimensionMismatch, id,
                        "length " + std::to_string(len) + " != |D| = " + std::to_string(n)});
    }
  };

  for (const auto& a : activations) {
    check_length(a.neuron_id, a.values.size());
    if (std::any_of(a.values.begin(), a.values.end(), [](double v) { return !std::isfinite(v); })) {
      report.push_back({ViolationKind::NonFinite, a.neuron_id, "activation contains NaN or Inf"});
    }
  }
  for (const auto& c : concepts) {
    check_length(c.concept_id, c.values.size());
    bool out_of_range = false;
    bool non_binary = false;
    bool non_finite = false;
    for (double v : c.values) {
      if (!std::isfinite(v)) non_finite = true;
      else if (v < 0.0 || v > 1.0) out_of_range = true;
      else if (v != 0.0 && v != 1.0) non_binary = true;
    }
    if (non_finite) report.push_back({ViolationKind::NonFinite, c.concept_id, "concept contains NaN or Inf"});
    if (out_of_range) report.push_back({ViolationKind::RangeError, c.concept_id, "concept value outside [0,1]"});
    if (non_binary && c.provenance == Provenance::ground_truth) {
      report.push_back({ViolationKind::ProvenanceViolation, c.concept_id, "ground-truth concept has non-binary values"});
    }
  }
  return report;
}

}  // namespace ngauge
