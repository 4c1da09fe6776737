#pragma once

// Newline-delimited JSON datasets. Besides id/text/gold_answers/choices a
// record may carry its own answers ("conditioning_samples",
// "heldout_samples": lists of strings) and summaries ("summaries": list of
// {method, text, variant?}), which then take precedence over generation.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/stats.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

struct DatasetRecord {
  Query query;
  std::optional<std::vector<std::string>> conditioning_samples;
  std::optional<std::vector<std::string>> heldout_samples;
  std::vector<Summary> summaries;
};

namespace detail {

inline std::optional<std::vector<std::string>> string_list(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j[key];
  if (!v.is_array()) throw ParseError(line, std::string(key) + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ParseError(line, std::string(key) + " must be a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline DatasetRecord parse_record(const std::string& text, std::size_t line) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(line, "not a JSON object");
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer()))
    throw ParseError(line, "missing id");
  if (!j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty())
    throw ParseError(line, "missing or empty text");
  DatasetRecord r;
  r.query.id = j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(j["id"].get<long long>());
  r.query.text = j["text"].get<std::string>();
  r.query.gold_answers = string_list(j, "gold_answers", line);
  r.query.choices = string_list(j, "choices", line);
  r.conditioning_samples = string_list(j, "conditioning_samples", line);
  r.heldout_samples = string_list(j, "heldout_samples", line);
  if (j.contains("summaries")) {
    if (!j["summaries"].is_array()) throw ParseError(line, "summaries must be a list");
    for (const auto& s : j["summaries"]) {
      if (!s.is_object() || !s.contains("text") || !s["text"].is_string())
        throw ParseError(line, "summary without text");
      Summary sum;
      sum.query_id = r.query.id;
      try {
        sum.method = parse_summary_method(s.value("method", std::string("external")));
      } catch (const Error& e) {
        throw ParseError(line, e.what());
      }
      sum.text = s["text"].get<std::string>();
      sum.variant = s.value("variant", std::string());
      sum.provenance = s.value("provenance", std::string("dataset"));
      if (sum.text.empty()) throw ParseError(line, "empty summary text");
      r.summaries.push_back(std::move(sum));
    }
  }
  return r;
}

}  // namespace detail

// Every record of the file in seeded order, truncated to `limit` when given.
inline std::vector<DatasetRecord> load_dataset_records(const std::filesystem::path& path,
                                                       std::optional<std::size_t> limit, std::int64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<DatasetRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty()) continue;
    auto r = detail::parse_record(line, line_no);
    if (!ids.insert(r.query.id).second) throw ParseError(line_no, "duplicate id " + r.query.id);
    records.push_back(std::move(r));
  }
  seeded_shuffle(records, seed);
  if (limit && *limit < records.size()) records.resize(*limit);
  return records;
}

inline std::vector<Query> load_dataset(const std::filesystem::path& path, std::optional<std::size_t> limit,
                                       std::int64_t seed) {
  std::vector<Query> out;
  for (auto& r : load_dataset_records(path, limit, seed)) out.push_back(std::move(r.query));
  return out;
}

}  // namespace selfreflect
