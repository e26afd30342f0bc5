#pragma once

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "neurongauge/aggregation.hpp"
#include "neurongauge/dataset.hpp"

namespace ngauge {

/// One line of the append-only ratings log:
/// {"session":...,"input_id":...,"concept":...,"rater":...,"rating":0|1,"ts":iso8601}
struct RatingRecord {
  std::string session;
  std::string input_id;
  std::string concept_id;
  std::string rater;
  int rating = 0;
  std::string ts;
};

nlohmann::json to_json(const RatingRecord& r);
RatingRecord rating_record_from_json(const nlohmann::json& j);
std::string to_jsonl_line(const RatingRecord& r);

std::vector<RatingRecord> read_ratings_log(const std::filesystem::path& path);

/// Appends all records with a single write and flush.
void append_ratings_log(const std::filesystem::path& path, std::span<const RatingRecord> records);

/// Groups records by input for one concept (empty = all must share a single
/// concept), in order of first appearance. Unknown input ids throw ParseError.
std::vector<RatingSet> group_ratings(std::span<const RatingRecord> records, const ProbingIndex& index,
                                     std::string_view concept_id = {});

/// UTC timestamp, e.g. 2025-01-31T12:00:00Z.
std::string iso8601(std::chrono::system_clock::time_point t);
std::string iso8601_now();

}  // namespace ngauge
