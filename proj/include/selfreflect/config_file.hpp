#pragma once

// Run configuration files: "key = value" lines, "[section]" headers that
// prefix the following keys with "section.", and "#" comments. Values may be
// double-quoted. Command-line overrides use the same dotted keys.
//
//   n_conditioning = 50
//   tau = 5
//   [backend]
//   judge = "http:http://localhost:8000/v1,model=qwen"
//   [study]
//   kind = discrimination
//   methods = good, bad

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfreflect/backends.hpp"
#include "selfreflect/core.hpp"
#include "selfreflect/harness.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

// A '#' starts a comment unless it sits inside double quotes.
inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::string section;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const auto line = utf8::trim(detail::strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
      section = utf8::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const auto key = utf8::trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    out[section.empty() ? key : section + "." + key] = detail::unquote(utf8::trim(line.substr(eq + 1)));
  }
  return out;
}

inline ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

// "key=value"; the key may be dotted.
inline void apply_override(ConfigMap& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got " + assignment);
  cfg[utf8::trim(assignment.substr(0, eq))] = detail::unquote(utf8::trim(assignment.substr(eq + 1)));
}

// Everything a CLI run needs, resolved from the flat map.
struct ResolvedConfig {
  RunConfig run;
  StudySpec study;
  std::optional<std::string> judge_spec;
  std::optional<std::string> target_spec;
  std::optional<std::string> embed_spec;
  std::optional<std::filesystem::path> cache_dir;  // default <run_dir>/cache
  std::filesystem::path run_dir = "run";
  bool cache = true;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    auto comma = v.find(',', pos);
    if (comma == std::string::npos) comma = v.size();
    auto item = utf8::trim(v.substr(pos, comma - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T x;
    if constexpr (std::is_same_v<T, double>) x = std::stod(v, &used);
    else x = static_cast<T>(std::stoll(v, &used));
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: " + v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const auto l = utf8::lower(v);
  if (l == "true" || l == "1" || l == "yes") return true;
  if (l == "false" || l == "0" || l == "no") return false;
  throw ConfigError(key + ": not a boolean: " + v);
}

}  // namespace detail

// Unknown keys are an error so typos never silently fall back to defaults.
inline ResolvedConfig resolve_config(const ConfigMap& map) {
  ResolvedConfig r;
  auto& c = r.run;
  auto& s = r.study;
  using detail::parse_number;
  for (const auto& [key, v] : map) {
    if (key == "n_conditioning" || key == "n") c.n_conditioning = parse_number<int>(key, v);
    else if (key == "m_heldout" || key == "m") c.m_heldout = parse_number<int>(key, v);
    else if (key == "num_queries") c.num_queries = parse_number<int>(key, v);
    else if (key == "tau") c.tau = parse_number<double>(key, v);
    else if (key == "seed") c.seed = parse_number<std::int64_t>(key, v);
    else if (key == "stopwords" || key == "stopword_list_id") c.stopword_list_id = v;
    else if (key == "prompt_set" || key == "prompt_set_id") c.prompt_set_id = v;
    else if (key == "bootstrap_resamples") c.bootstrap_resamples = parse_number<int>(key, v);
    else if (key == "heldout_mode") {
      try {
        c.heldout_mode = detail::enum_parse(v, kHeldoutModeNames, "heldout_mode");
      } catch (const Error&) {
        throw ConfigError("heldout_mode: " + v);
      }
    } else if (key == "aggregation") {
      try {
        c.aggregation = detail::enum_parse(v, kAggregationNames, "aggregation");
      } catch (const Error&) {
        throw ConfigError("aggregation: " + v);
      }
    } else if (key == "ptrue_projection") c.ptrue_projection = detail::parse_bool(key, v);
    else if (key == "failure_budget") c.failure_budget = parse_number<double>(key, v);
    else if (key == "jobs") c.jobs = parse_number<int>(key, v);
    else if (key == "backend.judge") r.judge_spec = v;
    else if (key == "backend.target") r.target_spec = v;
    else if (key == "backend.embed") r.embed_spec = v;
    else if (key == "cache_dir") r.cache_dir = v;
    else if (key == "cache") r.cache = detail::parse_bool(key, v);
    else if (key == "run_dir") r.run_dir = v;
    else if (key == "study.kind") {
      try {
        s.kind = parse_study_kind(v);
      } catch (const Error&) {
        throw ConfigError("study.kind: " + v);
      }
    } else if (key == "study.dataset" || key == "dataset") s.dataset = v;
    else if (key == "study.limit" || key == "limit") s.limit = parse_number<std::size_t>(key, v);
    else if (key == "study.methods") s.summary_methods = detail::split_list(v);
    else if (key == "study.metrics") s.metrics = detail::split_list(v);
    else if (key == "study.convergence_step") s.convergence_step = parse_number<std::size_t>(key, v);
    else if (key == "study.pairs") {
      s.pairs.clear();
      for (const auto& p : detail::split_list(v)) {
        const auto gt = p.find('>');
        if (gt == std::string::npos) throw ConfigError("study.pairs: expected better>worse, got " + p);
        s.pairs.emplace_back(utf8::trim(p.substr(0, gt)), utf8::trim(p.substr(gt + 1)));
      }
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  if (r.judge_spec) c.judge_endpoint = parse_backend_spec(*r.judge_spec, "judge_endpoint");
  if (r.target_spec) c.target_endpoint = parse_backend_spec(*r.target_spec, "target_endpoint");
  if (r.embed_spec) c.embed_endpoint = parse_backend_spec(*r.embed_spec, "embed_endpoint");
  r.run = validate_run_config(c);
  return r;
}

inline json to_json_value(const StudySpec& s) {
  json pairs = json::array();
  for (const auto& [a, b] : s.pairs) pairs.push_back(json::array({a, b}));
  return json{{"kind", to_string(s.kind)},
              {"dataset", s.dataset.string()},
              {"limit", s.limit ? json(*s.limit) : json(nullptr)},
              {"methods", s.summary_methods},
              {"metrics", s.metrics},
              {"pairs", pairs},
              {"convergence_step", s.convergence_step}};
}

}  // namespace selfreflect
