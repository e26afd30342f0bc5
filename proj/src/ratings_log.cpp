#include "neurongauge/ratings_log.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>

#include "neurongauge/error.hpp"

namespace ngauge {

nlohmann::json to_json(const RatingRecord& r) {
  return nlohmann::json{{"session", r.session}, {"input_id", r.input_id}, {"concept", r.concept_id},
                        {"rater", r.rater},     {"rating", r.rating},     {"ts", r.ts}};
}

RatingRecord rating_record_from_json(const nlohmann::json& j) {
  RatingRecord r;
  try {
    r.session = j.value("session", std::string{});
    r.input_id = j.at("input_id").get<std::string>();
    r.concept_id = j.at("concept").get<std::string>();
    r.rater = j.value("rater", std::string{});
    r.rating = j.at("rating").get<int>();
    r.ts = j.value("ts", std::string{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("rating record: ") + e.what());
  }
  require(r.rating == 0 || r.rating == 1, ErrorCode::ParseError, "rating must be 0 or 1");
  return r;
}

std::string to_jsonl_line(const RatingRecord& r) { return to_json(r).dump() + "\n"; }

std::vector<RatingRecord> read_ratings_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      out.push_back(rating_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void append_ratings_log(const std::filesystem::path& path, std::span<const RatingRecord> records) {
  std::string buf;
  for (const auto& r : records) buf += to_jsonl_line(r);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot append to " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<RatingSet> group_ratings(std::span<const RatingRecord> records, const ProbingIndex& index,
                                     std::string_view concept_id) {
  std::string wanted(concept_id);
  std::vector<RatingSet> sets;
  std::map<std::size_t, std::size_t> slot;
  for (const auto& r : records) {
    if (wanted.empty()) wanted = r.concept_id;
    if (r.concept_id != wanted) {
      if (!concept_id.empty()) continue;
      fail(ErrorCode::InvalidArgument, "ratings log mixes concepts '" + wanted + "' and '" + r.concept_id +
                                           "'; select one concept");
    }
    const auto pos = index.find(r.input_id);
    if (!pos) fail(ErrorCode::ParseError, "rating for unknown input_id '" + r.input_id + "'");
    auto [it, inserted] = slot.emplace(*pos, sets.size());
    if (inserted) {
      RatingSet s;
      s.input_index = *pos;
      s.concept_id = wanted;
      sets.push_back(std::move(s));
    }
    auto& set = sets[it->second];
    set.ratings.push_back(static_cast<std::uint8_t>(r.rating));
    set.rater_ids.push_back(r.rater);
  }
  return sets;
}

std::string iso8601_now() { return iso8601(std::chrono::system_clock::now()); }

std::string iso8601(std::chrono::system_clock::time_point t) {
  const auto now = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ngauge
