#pragma once

// Study orchestration: answers, summaries and scores per (query, summary,
// metric) item, persisted as JSONL under the run directory so that a rerun
// only fills what is missing; statistics and the report come after.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "selfreflect/ablations.hpp"
#include "selfreflect/baselines.hpp"
#include "selfreflect/closed_form.hpp"
#include "selfreflect/core.hpp"
#include "selfreflect/dataset.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/hashing.hpp"
#include "selfreflect/metric.hpp"
#include "selfreflect/stats.hpp"
#include "selfreflect/stopwords.hpp"
#include "selfreflect/summarizers.hpp"
#include "selfreflect/templates.hpp"

namespace selfreflect {

enum class StudyKind { dataset_score, discrimination, closed_form, convergence, coverage, certainty_confusion };

inline constexpr std::pair<StudyKind, const char*> kStudyKindNames[] = {
    {StudyKind::dataset_score, "dataset_score"},
    {StudyKind::discrimination, "discrimination"},
    {StudyKind::closed_form, "closed_form"},
    {StudyKind::convergence, "convergence"},
    {StudyKind::coverage, "coverage"},
    {StudyKind::certainty_confusion, "certainty_confusion"},
};

inline std::string to_string(StudyKind k) { return detail::enum_name(k, kStudyKindNames); }
inline StudyKind parse_study_kind(const std::string& s) { return detail::enum_parse(s, kStudyKindNames, "study kind"); }

struct MetricInfo {
  const char* name;
  Orientation orientation;
};

inline constexpr MetricInfo kMetrics[] = {
    {"selfreflect", Orientation::lower_is_better},   {"sampling_free", Orientation::lower_is_better},
    {"pmi", Orientation::lower_is_better},           {"ptrue", Orientation::lower_is_better},
    {"optimal_transport", Orientation::lower_is_better}, {"summarization", Orientation::higher_is_better},
    {"lm_judge", Orientation::higher_is_better},     {"embedding", Orientation::higher_is_better},
};

inline Orientation metric_orientation(const std::string& name) {
  for (const auto& m : kMetrics)
    if (name == m.name) return m.orientation;
  throw ConfigError("metric: unknown metric " + name);
}

inline std::string to_string(Orientation o) {
  return o == Orientation::lower_is_better ? "lower_is_better" : "higher_is_better";
}

// Expected-better first.
using MethodPair = std::pair<std::string, std::string>;

inline std::vector<MethodPair> default_discrimination_pairs() {
  return {{"good", "bad"},          {"good", "almost_good"},     {"good", "truncated"},
          {"verbalized", "majority"}, {"verbalized", "or_concat"}, {"percentage", "or_concat"}};
}

struct StudySpec {
  StudyKind kind = StudyKind::dataset_score;
  std::filesystem::path dataset;
  std::optional<std::size_t> limit;  // defaults to cfg.num_queries
  // Summary labels: a method name, optionally ":variant" (sample_summarize:n20).
  std::vector<std::string> summary_methods;
  std::vector<std::string> metrics;
  std::vector<MethodPair> pairs;
  std::size_t convergence_step = 100;
};

// Backends and resolved configuration. `target` may be null when every
// record carries its own answers and summaries; `embedder` only matters for
// the embedding metric.
struct StudyEnv {
  std::shared_ptr<const LanguageModel> target;
  std::shared_ptr<const LanguageModel> judge;
  std::shared_ptr<const Embedder> embedder;
  TemplateSet templates = TemplateSet::builtin();
  StopwordList stopwords = StopwordList::english();
  RunConfig cfg;  // validated
  std::filesystem::path run_dir;
};

struct StudyReport {
  json lines = json::array();  // the report.jsonl records, in order
  std::string text;            // report.txt
  int n_items = 0;
  int n_failed_items = 0;
  bool failed = false;  // failure budget exceeded
};

struct StudyFailedError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Persistence

struct ScoreRecord {
  std::string query_id;
  std::string summary;
  std::string metric;
  double value = 0.0;
  int n_tasks = 0;
  int n_failed_tasks = 0;
  json detail;  // metric-specific extras (statements, ratings); null when none
};

inline void to_json(json& j, const ScoreRecord& r) {
  j = json{{"query_id", r.query_id}, {"summary", r.summary},       {"metric", r.metric},
           {"value", r.value},       {"n_tasks", r.n_tasks},       {"n_failed_tasks", r.n_failed_tasks}};
  if (!r.detail.is_null()) j["detail"] = r.detail;
}
inline void from_json(const json& j, ScoreRecord& r) {
  r.query_id = j.at("query_id").get<std::string>();
  r.summary = j.at("summary").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
  r.n_tasks = j.value("n_tasks", 0);
  r.n_failed_tasks = j.value("n_failed_tasks", 0);
  r.detail = j.value("detail", json());
}

// JSONL files under the run directory. Loading keeps the first record of
// each key, and a torn last line from an interrupted run is cut off.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    for (const char* f : {"answers.jsonl", "summaries.jsonl", "scores.jsonl", "words.jsonl"}) drop_torn_tail(f);
    for_each_line("answers.jsonl", [&](const json& j) {
      auto s = j.get<AnswerSet>();
      answers_.emplace(s.query_id, std::move(s));
    });
    for_each_line("summaries.jsonl", [&](const json& j) {
      auto s = j.get<Summary>();
      summaries_.emplace(std::make_pair(s.query_id, summary_label(s)), std::move(s));
    });
    for_each_line("scores.jsonl", [&](const json& j) {
      auto r = j.get<ScoreRecord>();
      scores_.emplace(std::make_tuple(r.query_id, r.summary, r.metric), std::move(r));
    });
  }

  const std::filesystem::path& dir() const { return dir_; }

  const AnswerSet* answers(const std::string& qid) const {
    auto it = answers_.find(qid);
    return it == answers_.end() ? nullptr : &it->second;
  }
  const AnswerSet& put_answers(AnswerSet s) {
    append("answers.jsonl", s);
    return answers_.insert_or_assign(s.query_id, std::move(s)).first->second;
  }

  const Summary* summary(const std::string& qid, const std::string& label) const {
    auto it = summaries_.find({qid, label});
    return it == summaries_.end() ? nullptr : &it->second;
  }
  const Summary& put_summary(Summary s) {
    append("summaries.jsonl", s);
    auto key = std::make_pair(s.query_id, summary_label(s));
    return summaries_.insert_or_assign(std::move(key), std::move(s)).first->second;
  }

  const ScoreRecord* score(const std::string& qid, const std::string& label, const std::string& metric) const {
    auto it = scores_.find({qid, label, metric});
    return it == scores_.end() ? nullptr : &it->second;
  }
  const ScoreRecord& put_score(ScoreRecord r, const std::vector<WordScore>& words = {}) {
    for (const auto& w : words) {
      json j = w;
      j["query_id"] = r.query_id;
      j["summary"] = r.summary;
      j["metric"] = r.metric;
      append("words.jsonl", j);
    }
    append("scores.jsonl", r);
    auto key = std::make_tuple(r.query_id, r.summary, r.metric);
    return scores_.insert_or_assign(std::move(key), std::move(r)).first->second;
  }

  void note_failure(json record) { failures_.push_back(std::move(record)); }
  const std::vector<json>& failures() const { return failures_; }

  // failures.jsonl describes the latest run only.
  void write_failures() const {
    std::string out;
    for (const auto& f : failures_) out += f.dump() + "\n";
    write_file("failures.jsonl", out);
  }

  void write_file(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << content;
  }

 private:
  // Appending after a torn line would glue the next record onto it.
  void drop_torn_tail(const std::string& name) const {
    const auto path = dir_ / name;
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size == 0) return;
    std::string text;
    {
      std::ifstream in(path, std::ios::binary);
      text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (text.back() == '\n') return;
    const auto nl = text.rfind('\n');
    std::filesystem::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
  }

  template <typename F>
  void for_each_line(const std::string& name, F fn) {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;
      try {
        fn(j);
      } catch (const std::exception&) {
      }
    }
  }

  void append(const std::string& name, const json& j) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + (dir_ / name).string());
    out << j.dump() << "\n";
  }

  std::filesystem::path dir_;
  std::map<std::string, AnswerSet> answers_;
  std::map<std::pair<std::string, std::string>, Summary> summaries_;
  std::map<std::tuple<std::string, std::string, std::string>, ScoreRecord> scores_;
  std::vector<json> failures_;
};

// ---------------------------------------------------------------------------
// Seeds, answers and summaries

// Per-query base seed: stable under dataset reordering and subsetting.
inline std::int64_t query_seed(std::int64_t seed, const std::string& query_id) {
  const auto h = sha256_hex(std::to_string(seed) + "/" + query_id);
  return static_cast<std::int64_t>(std::stoull(h.substr(0, 12), nullptr, 16));
}

inline constexpr std::int64_t kSampleSummarizeSeedOffset = 7000003;

namespace detail {

inline std::vector<Answer> indexed_answers(const std::vector<std::string>& texts, std::size_t count,
                                           std::int64_t first_seed) {
  std::vector<Answer> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (texts[i].empty()) throw Error("empty answer text in dataset record");
    out.push_back({texts[i], first_seed + static_cast<std::int64_t>(i)});
  }
  return out;
}

inline std::pair<std::string, std::string> split_label(const std::string& label) {
  const auto colon = label.find(':');
  if (colon == std::string::npos) return {label, ""};
  return {label.substr(0, colon), label.substr(colon + 1)};
}

inline bool is_intervention(SummaryMethod m) {
  switch (m) {
    case SummaryMethod::good:
    case SummaryMethod::bad:
    case SummaryMethod::almost_good:
    case SummaryMethod::truncated:
    case SummaryMethod::verbalized:
    case SummaryMethod::percentage:
    case SummaryMethod::or_concat:
    case SummaryMethod::majority:
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Rejects labels that no generator understands.
inline void validate_summary_label(const std::string& label) {
  const auto [method, variant] = detail::split_label(label);
  SummaryMethod m;
  try {
    m = parse_summary_method(method);
  } catch (const Error&) {
    throw ConfigError("method: unknown summary method " + method);
  }
  if (m == SummaryMethod::sample_summarize && !variant.empty()) {
    if (variant.size() < 2 || variant[0] != 'n' ||
        variant.find_first_not_of("0123456789", 1) != std::string::npos || std::stoi(variant.substr(1)) < 1)
      throw ConfigError("method: sample_summarize variant must be n<count>, got " + variant);
  }
}

class StudyRunner {
 public:
  StudyRunner(const StudyEnv& env, RunStore& store) : env_(env), store_(store) {}

  const StudyEnv& env() const { return env_; }
  RunStore& store() { return store_; }

  // Conditioning (N) and held-out (M) answers: the record's own lists when
  // present, otherwise samples from the target. Disjoint mode draws N+M
  // samples with seeds s..s+N+M-1; shared mode reuses the first M
  // conditioning answers as held-out answers.
  const AnswerSet& ensure_answers(const DatasetRecord& rec) {
    const auto& q = rec.query;
    if (const auto* s = store_.answers(q.id)) return *s;
    const auto& cfg = env_.cfg;
    const auto n = static_cast<std::size_t>(cfg.n()), m = static_cast<std::size_t>(cfg.m());
    const bool shared = cfg.heldout_mode == HeldoutMode::shared;
    if (shared && m > n) throw ConfigError("m_heldout: shared mode needs M <= N");
    AnswerSet set;
    set.query_id = q.id;
    if (rec.conditioning_samples) {
      if (rec.conditioning_samples->size() < n)
        throw Error("record " + q.id + " has " + std::to_string(rec.conditioning_samples->size()) +
                    " conditioning samples, need " + std::to_string(n));
      set.conditioning_samples = detail::indexed_answers(*rec.conditioning_samples, n, 0);
      if (shared) {
        set.heldout_samples.assign(set.conditioning_samples.begin(), set.conditioning_samples.begin() + m);
      } else {
        if (!rec.heldout_samples || rec.heldout_samples->size() < m)
          throw Error("record " + q.id + " lacks " + std::to_string(m) + " held-out samples");
        set.heldout_samples = detail::indexed_answers(*rec.heldout_samples, m, static_cast<std::int64_t>(n));
      }
    } else {
      if (!env_.target) throw ConfigError("target_endpoint: needed to sample answers for " + q.id);
      const auto seed = query_seed(cfg.seed, q.id);
      auto all = sample_answers(q, *env_.target, env_.templates, static_cast<int>(shared ? n : n + m), seed);
      set.conditioning_samples.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
      if (shared)
        set.heldout_samples.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
      else
        set.heldout_samples.assign(all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
    }
    return store_.put_answers(std::move(set));
  }

  // The record's summary with this label, else a stored one, else generated.
  const Summary& ensure_summary(const DatasetRecord& rec, const std::string& label, const AnswerSet& answers) {
    const auto& q = rec.query;
    if (const auto* s = store_.summary(q.id, label)) return *s;
    for (const auto& s : rec.summaries)
      if (summary_label(s) == label) return store_.put_summary(s);
    const auto [method_name, variant] = detail::split_label(label);
    const auto method = parse_summary_method(method_name);
    const auto seed = query_seed(env_.cfg.seed, q.id);
    if (detail::is_intervention(method)) {
      auto& set = interventions(rec, answers);
      for (auto& [name, s] : set.summaries)
        if (!store_.summary(q.id, name)) store_.put_summary(s);
      if (const auto* s = store_.summary(q.id, label)) return *s;
      auto f = set.failures.find(method_name);
      throw Error(label + " summary unavailable: " + (f == set.failures.end() ? "not produced" : f->second));
    }
    if (method == SummaryMethod::external || (!variant.empty() && method != SummaryMethod::sample_summarize))
      throw Error("no " + label + " summary in the dataset record for " + q.id);
    if (!env_.target) throw ConfigError("target_endpoint: needed to generate " + label + " summaries");
    switch (method) {
      case SummaryMethod::greedy:
        return store_.put_summary(summarize_greedy(q, *env_.target, env_.templates, seed));
      case SummaryMethod::basic:
        return store_.put_summary(summarize_basic(q, *env_.target, env_.templates, seed));
      case SummaryMethod::cot:
        return store_.put_summary(summarize_cot(q, *env_.target, env_.templates, seed));
      case SummaryMethod::sample_summarize: {
        const int n = variant.empty() ? env_.cfg.n() : std::stoi(variant.substr(1));
        auto s = summarize_sample_and_summarize(q, *env_.target, env_.templates, n,
                                                seed + kSampleSummarizeSeedOffset);
        if (variant.empty()) s.variant.clear();
        return store_.put_summary(std::move(s));
      }
      default:
        throw Error("cannot generate " + label + " summaries");
    }
  }

  ScoringContext scoring_context(const StopwordList& stopwords) const {
    if (!env_.judge) throw ConfigError("judge_endpoint: no judge configured");
    return ScoringContext{*env_.judge, env_.templates, stopwords, env_.cfg};
  }

  ScoreRecord compute(const std::string& metric, const Query& q, const Summary& s, const AnswerSet& answers,
                      const StopwordList& stopwords, std::vector<WordScore>* words) {
    ScoreRecord r;
    r.query_id = q.id;
    r.summary = summary_label(s);
    r.metric = metric;
    auto breakdown = [&](const ScoreBreakdown& b) {
      r.value = b.per_question;
      r.n_tasks = b.n_tasks;
      r.n_failed_tasks = b.n_failed_tasks;
      if (words) *words = b.per_word;
    };
    if (metric == "selfreflect") {
      breakdown(score_summary(q, s, answers, scoring_context(stopwords)));
    } else if (metric == "sampling_free") {
      breakdown(score_sampling_free(q, s, answers, scoring_context(stopwords)));
    } else if (metric == "pmi") {
      breakdown(score_pmi(q, s, answers, scoring_context(stopwords)));
    } else if (metric == "ptrue") {
      breakdown(score_ptrue(q, s, answers, scoring_context(stopwords)));
    } else if (metric == "summarization") {
      const auto d = score_summarization_detail(q, s, answers, judge(), env_.templates);
      r.value = d.score;
      r.detail = json{{"ratings", d.ratings}};
    } else if (metric == "lm_judge") {
      r.value = score_lm_judge(q, s, answers, judge(), env_.templates);
    } else if (metric == "embedding") {
      if (!env_.embedder) throw ConfigError("embed_endpoint: no embedder configured");
      r.value = score_embedding(s, answers, *env_.embedder);
    } else if (metric == "optimal_transport") {
      const auto ot = score_optimal_transport(q, s, answers, judge(), env_.templates);
      r.value = ot.distance;
      r.detail = json{{"statements", ot.statements}, {"entailment", ot.matrix}};
    } else {
      throw ConfigError("metric: unknown metric " + metric);
    }
    return r;
  }

  // Stored score for the item, else computed and stored. Item-level errors
  // propagate; configuration errors are the caller's to rethrow.
  const ScoreRecord& ensure_score(const std::string& metric, const Query& q, const Summary& s,
                                  const AnswerSet& answers, const StopwordList& stopwords) {
    if (const auto* r = store_.score(q.id, summary_label(s), metric)) return *r;
    std::vector<WordScore> words;
    auto r = compute(metric, q, s, answers, stopwords, &words);
    return store_.put_score(std::move(r), words);
  }

  void fail(const std::string& query_id, const std::string& stage, const std::string& summary,
            const std::string& metric, const std::string& error) {
    json f{{"query_id", query_id}, {"stage", stage}, {"error", error}};
    if (!summary.empty()) f["summary"] = summary;
    if (!metric.empty()) f["metric"] = metric;
    store_.note_failure(std::move(f));
  }

 private:
  const LanguageModel& judge() const {
    if (!env_.judge) throw ConfigError("judge_endpoint: no judge configured");
    return *env_.judge;
  }

  InterventionSet& interventions(const DatasetRecord& rec, const AnswerSet& answers) {
    auto it = interventions_.find(rec.query.id);
    if (it != interventions_.end()) return it->second;
    const auto seed = query_seed(env_.cfg.seed, rec.query.id);
    return interventions_
        .emplace(rec.query.id, make_intervention_summaries(rec.query, answers, judge(), env_.templates, seed))
        .first->second;
  }

  const StudyEnv& env_;
  RunStore& store_;
  std::map<std::string, InterventionSet> interventions_;
};

// ---------------------------------------------------------------------------
// Report rendering

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  auto line = [&](const std::vector<std::string>& r) {
    std::string out;
    for (std::size_t i = 0; i < width.size(); ++i) {
      const auto cell = i < r.size() ? r[i] : std::string();
      out += (i ? "  " : "") + cell + std::string(width[i] - cell.size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

}  // namespace detail

// Per-query values of one (summary, metric) column, aligned with the query
// order; nullopt marks a failed item.
using ScoreColumn = std::vector<std::optional<double>>;

struct ScoreGrid {
  std::vector<std::string> query_ids;
  std::map<std::pair<std::string, std::string>, ScoreColumn> columns;  // (summary, metric)
  int n_items = 0;
  int n_failed_items = 0;

  std::vector<double> present(const std::string& summary, const std::string& metric) const {
    std::vector<double> out;
    auto it = columns.find({summary, metric});
    if (it == columns.end()) return out;
    for (const auto& v : it->second)
      if (v) out.push_back(*v);
    return out;
  }
};

namespace detail {

inline bool is_config_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const TemplateError*>(&e);
}

inline std::vector<std::string> default_metrics(const StudySpec& spec) {
  return spec.metrics.empty() ? std::vector<std::string>{"selfreflect"} : spec.metrics;
}

inline std::vector<std::string> study_labels(const StudySpec& spec) {
  std::vector<std::string> labels = spec.summary_methods;
  if (spec.kind == StudyKind::discrimination) {
    const auto pairs = spec.pairs.empty() ? default_discrimination_pairs() : spec.pairs;
    for (const auto& [a, b] : pairs)
      for (const auto& l : {a, b})
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  return labels;
}

}  // namespace detail

// The Monte-Carlo loop shared by the score-based studies: queries in seeded
// order, each summary label, each metric.
inline ScoreGrid collect_scores(StudyRunner& runner, const std::vector<DatasetRecord>& records,
                                const std::vector<std::string>& labels, const std::vector<std::string>& metrics,
                                const StopwordList& stopwords) {
  ScoreGrid grid;
  for (const auto& l : labels)
    for (const auto& m : metrics) grid.columns[{l, m}] = ScoreColumn(records.size());
  for (std::size_t qi = 0; qi < records.size(); ++qi) {
    const auto& rec = records[qi];
    grid.query_ids.push_back(rec.query.id);
    const AnswerSet* answers = nullptr;
    std::string answer_error;
    try {
      answers = &runner.ensure_answers(rec);
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      answer_error = e.what();
      runner.fail(rec.query.id, "answers", "", "", answer_error);
    }
    for (const auto& label : labels) {
      const Summary* summary = nullptr;
      if (answers) {
        try {
          summary = &runner.ensure_summary(rec, label, *answers);
        } catch (const std::exception& e) {
          if (detail::is_config_error(e)) throw;
          runner.fail(rec.query.id, "summary", label, "", e.what());
        }
      }
      for (const auto& metric : metrics) {
        ++grid.n_items;
        if (!summary) {
          ++grid.n_failed_items;
          continue;
        }
        try {
          grid.columns[{label, metric}][qi] = runner.ensure_score(metric, rec.query, *summary, *answers, stopwords).value;
        } catch (const std::exception& e) {
          if (detail::is_config_error(e)) throw;
          ++grid.n_failed_items;
          runner.fail(rec.query.id, "score", label, metric, e.what());
        }
      }
    }
  }
  return grid;
}

namespace detail {

// One report record and one table row per (summary, metric) column.
inline void report_methods(const ScoreGrid& grid, const std::vector<std::string>& labels,
                           const std::vector<std::string>& metrics, const RunConfig& cfg, StudyReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& metric : metrics) {
    for (const auto& label : labels) {
      const auto v = grid.present(label, metric);
      const auto& col = grid.columns.at({label, metric});
      json j{{"kind", "method"},
             {"summary", label},
             {"metric", metric},
             {"orientation", to_string(metric_orientation(metric))},
             {"n", v.size()},
             {"n_failed", col.size() - v.size()}};
      std::vector<std::string> row{label, metric, std::to_string(v.size()), std::to_string(col.size() - v.size())};
      if (!v.empty()) {
        const auto ci = bootstrap_ci(v, cfg.resamples(), 0.95, cfg.seed);
        j["mean"] = mean(v);
        j["ci95"] = ci;
        row.push_back(fixed(mean(v)));
        row.push_back("[" + fixed(ci.lo) + ", " + fixed(ci.hi) + "]");
      } else {
        j["mean"] = nullptr;
        j["ci95"] = nullptr;
        row.push_back("-");
        row.push_back("-");
      }
      report.lines.push_back(std::move(j));
      rows.push_back(std::move(row));
    }
  }
  report.text += "Scores (mean and 95% bootstrap interval over questions)\n";
  report.text += render_table({"summary", "metric", "n", "failed", "mean", "ci95"}, rows) + "\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Studies

inline StudyReport run_discrimination(StudyRunner& runner, const StudySpec& spec,
                                      const std::vector<DatasetRecord>& records) {
  const auto& cfg = runner.env().cfg;
  const auto metrics = detail::default_metrics(spec);
  const auto labels = detail::study_labels(spec);
  const auto pairs = spec.pairs.empty() ? default_discrimination_pairs() : spec.pairs;
  const auto grid = collect_scores(runner, records, labels, metrics, runner.env().stopwords);
  StudyReport report;
  report.n_items = grid.n_items;
  report.n_failed_items = grid.n_failed_items;
  detail::report_methods(grid, labels, metrics, cfg, report);
  std::vector<std::vector<std::string>> rows;
  for (const auto& metric : metrics) {
    const auto orientation = metric_orientation(metric);
    for (const auto& [better, worse] : pairs) {
      const auto& cb = grid.columns.at({better, metric});
      const auto& cw = grid.columns.at({worse, metric});
      std::vector<double> b, w;
      for (std::size_t i = 0; i < cb.size(); ++i)
        if (cb[i] && cw[i]) {
          b.push_back(*cb[i]);
          w.push_back(*cw[i]);
        }
      json j{{"kind", "discrimination"}, {"better", better}, {"worse", worse}, {"metric", metric}, {"n_pairs", b.size()}};
      std::vector<std::string> row{better + " > " + worse, metric, std::to_string(b.size())};
      if (!b.empty()) {
        const auto r = discrimination_rate(b, w, orientation, cfg.resamples(), 0.95, cfg.seed);
        j["rate"] = r.rate;
        j["ci95"] = r.ci;
        row.push_back(detail::fixed(100.0 * r.rate, 1) + "%");
        row.push_back("[" + detail::fixed(100.0 * r.ci.lo, 1) + "%, " + detail::fixed(100.0 * r.ci.hi, 1) + "%]");
      } else {
        j["rate"] = nullptr;
        j["ci95"] = nullptr;
        row.push_back("-");
        row.push_back("-");
      }
      report.lines.push_back(std::move(j));
      rows.push_back(std::move(row));
    }
  }
  report.text += "Discrimination (share of questions where the expected-better summary wins; ties count half)\n";
  report.text += detail::render_table({"pair", "metric", "n", "rate", "ci95"}, rows) + "\n";
  return report;
}

inline StudyReport run_dataset_score(StudyRunner& runner, const StudySpec& spec,
                                     const std::vector<DatasetRecord>& records, ScoreGrid* grid_out = nullptr) {
  const auto metrics = detail::default_metrics(spec);
  const auto labels = detail::study_labels(spec);
  auto grid = collect_scores(runner, records, labels, metrics, runner.env().stopwords);
  StudyReport report;
  report.n_items = grid.n_items;
  report.n_failed_items = grid.n_failed_items;
  detail::report_methods(grid, labels, metrics, runner.env().cfg, report);
  if (grid_out) *grid_out = std::move(grid);
  return report;
}

inline StudyReport run_convergence(StudyRunner& runner, const StudySpec& spec,
                                   const std::vector<DatasetRecord>& records) {
  ScoreGrid grid;
  auto report = run_dataset_score(runner, spec, records, &grid);
  const auto metrics = detail::default_metrics(spec);
  const auto labels = detail::study_labels(spec);
  std::vector<std::vector<std::string>> rows;
  for (const auto& metric : metrics)
    for (const auto& label : labels) {
      const auto v = grid.present(label, metric);
      const auto curve = convergence_curve(v, every_k_checkpoints(v.size(), std::max<std::size_t>(1, spec.convergence_step)));
      json points = json::array();
      for (const auto& [k, m] : curve) {
        points.push_back(json::array({k, m}));
        rows.push_back({label, metric, std::to_string(k), detail::fixed(m, 5)});
      }
      report.lines.push_back(json{{"kind", "convergence"}, {"summary", label}, {"metric", metric}, {"curve", points}});
    }
  report.text += "Convergence (running mean over questions in seeded order)\n";
  report.text += detail::render_table({"summary", "metric", "k", "running_mean"}, rows) + "\n";
  return report;
}

// Highest coverage over the gold answers; questions without gold answers are skipped.
inline StudyReport run_coverage(StudyRunner& runner, const StudySpec& spec,
                                const std::vector<DatasetRecord>& records) {
  const auto& cfg = runner.env().cfg;
  StudyReport report;
  std::map<std::string, std::vector<double>> per_label;
  int skipped = 0;
  for (const auto& rec : records) {
    if (!rec.query.gold_answers || rec.query.gold_answers->empty()) {
      ++skipped;
      continue;
    }
    const AnswerSet* answers = nullptr;
    try {
      answers = &runner.ensure_answers(rec);
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      runner.fail(rec.query.id, "answers", "", "", e.what());
    }
    for (const auto& label : spec.summary_methods) {
      ++report.n_items;
      try {
        if (!answers) throw Error("answers unavailable");
        const auto& s = runner.ensure_summary(rec, label, *answers);
        double best = 0.0;
        for (const auto& g : *rec.query.gold_answers)
          if (!utf8::trim(g).empty()) best = std::max(best, answer_coverage(s.text, g));
        per_label[label].push_back(best);
      } catch (const std::exception& e) {
        if (detail::is_config_error(e)) throw;
        ++report.n_failed_items;
        runner.fail(rec.query.id, "coverage", label, "", e.what());
      }
    }
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& label : spec.summary_methods) {
    const auto& v = per_label[label];
    json j{{"kind", "coverage"}, {"summary", label}, {"n", v.size()}, {"n_without_gold", skipped}};
    std::vector<std::string> row{label, std::to_string(v.size())};
    if (!v.empty()) {
      const auto ci = bootstrap_ci(v, cfg.resamples(), 0.95, cfg.seed);
      j["mean"] = mean(v);
      j["ci95"] = ci;
      row.push_back(detail::fixed(100.0 * mean(v), 1) + "%");
      row.push_back("[" + detail::fixed(100.0 * ci.lo, 1) + "%, " + detail::fixed(100.0 * ci.hi, 1) + "%]");
    } else {
      j["mean"] = nullptr;
      row.push_back("-");
      row.push_back("-");
    }
    report.lines.push_back(std::move(j));
    rows.push_back(std::move(row));
  }
  report.text += "Answer coverage (longest shared substring of the gold answer)\n";
  report.text += detail::render_table({"summary", "n", "coverage", "ci95"}, rows) + "\n";
  return report;
}

// Rows: the certainty of the conditioning answers; columns: the certainty the
// summary conveys. Cells are fractions of the classified questions.
inline StudyReport run_certainty_confusion(StudyRunner& runner, const StudySpec& spec,
                                           const std::vector<DatasetRecord>& records) {
  const auto& env = runner.env();
  if (!env.judge) throw ConfigError("judge_endpoint: no judge configured");
  StudyReport report;
  std::map<std::string, Certainty> dist_label;
  std::map<std::string, std::array<int, 4>> cells;  // label -> {cc, cu, uc, uu}
  std::map<std::string, int> parse_failures;
  for (const auto& rec : records) {
    const AnswerSet* answers = nullptr;
    std::optional<Certainty> truth;
    try {
      answers = &runner.ensure_answers(rec);
      truth = classify_certainty(rec.query, "", answers->conditioning_samples, CertaintyMode::distribution,
                                 *env.judge, env.templates)
                  .label;
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      runner.fail(rec.query.id, "certainty_distribution", "", "", e.what());
    }
    for (const auto& label : spec.summary_methods) {
      ++report.n_items;
      try {
        if (!answers || !truth) throw Error("distribution certainty unavailable");
        const auto& s = runner.ensure_summary(rec, label, *answers);
        const auto got = classify_certainty(rec.query, s.text, {}, CertaintyMode::summary, *env.judge, env.templates);
        const int cell = (*truth == Certainty::certain ? 0 : 2) + (got.label == Certainty::certain ? 0 : 1);
        ++cells[label][static_cast<std::size_t>(cell)];
      } catch (const JudgeParseError& e) {
        ++report.n_failed_items;
        ++parse_failures[label];
        runner.fail(rec.query.id, "certainty_summary", label, "", e.what());
      } catch (const std::exception& e) {
        if (detail::is_config_error(e)) throw;
        ++report.n_failed_items;
        runner.fail(rec.query.id, "certainty_summary", label, "", e.what());
      }
    }
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& label : spec.summary_methods) {
    const auto c = cells[label];
    const int total = c[0] + c[1] + c[2] + c[3];
    auto frac = [&](int x) { return total ? static_cast<double>(x) / total : 0.0; };
    report.lines.push_back(json{{"kind", "certainty_confusion"},
                                {"summary", label},
                                {"n_classified", total},
                                {"n_parse_failures", parse_failures[label]},
                                {"certain_certain", frac(c[0])},
                                {"certain_uncertain", frac(c[1])},
                                {"uncertain_certain", frac(c[2])},
                                {"uncertain_uncertain", frac(c[3])}});
    rows.push_back({label, std::to_string(total), detail::fixed(frac(c[0]), 3), detail::fixed(frac(c[1]), 3),
                    detail::fixed(frac(c[2]), 3), detail::fixed(frac(c[3]), 3)});
  }
  report.text += "Certainty confusion (answers -> summary; fractions of classified questions)\n";
  report.text += detail::render_table({"summary", "n", "cert->cert", "cert->unc", "unc->cert", "unc->unc"}, rows) + "\n";
  return report;
}

// The four closed-form summaries are built per question from the conditioning
// letter frequencies and scored against the held-out answers; the reference
// is the distance between the stated and the held-out letter distribution.
inline StudyReport run_closed_form(StudyRunner& runner, const StudySpec& spec,
                                   const std::vector<DatasetRecord>& records) {
  const auto& cfg = runner.env().cfg;
  const auto metrics = detail::default_metrics(spec);
  // Choice letters are single characters, and "A" is an English stopword.
  const auto stopwords = StopwordList::none();
  constexpr ClosedFormVariant kVariants[] = {ClosedFormVariant::matched, ClosedFormVariant::majority_only,
                                             ClosedFormVariant::overconfident, ClosedFormVariant::random_percent};
  StudyReport report;
  // variant -> per-question values (aligned by question, only complete questions kept)
  std::map<std::string, std::vector<double>> reference;
  std::map<std::string, std::map<std::string, std::vector<double>>> scores;  // metric -> variant -> values
  int unmapped = 0, mapped = 0, skipped = 0;
  for (const auto& rec : records) {
    const auto& q = rec.query;
    if (!q.choices || q.choices->size() < 2 || q.choices->size() > 26) {
      ++skipped;
      continue;
    }
    const auto letters = choice_letters(q.choices->size());
    std::map<std::string, double> ref_row;
    std::map<std::string, std::map<std::string, double>> score_row;
    bool complete = true;
    try {
      const auto& answers = runner.ensure_answers(rec);
      const auto cond = choice_frequencies(answers.conditioning_samples, letters);
      const auto held = choice_frequencies(answers.heldout_samples, letters);
      mapped += held.n_mapped;
      unmapped += held.n_unmapped;
      const auto qs = query_seed(cfg.seed, q.id);
      // Only mappable held-out answers enter the metric.
      AnswerSet scored = answers;
      scored.heldout_samples.clear();
      for (const auto& a : answers.heldout_samples)
        if (extract_choice_letter(a.text, letters)) scored.heldout_samples.push_back(a);
      StudyEnv local = runner.env();
      local.cfg.m_heldout = static_cast<int>(scored.heldout_samples.size());
      StudyRunner sub(local, runner.store());
      for (std::size_t vi = 0; vi < std::size(kVariants); ++vi) {
        const auto v = kVariants[vi];
        const auto spec_v = make_closed_form_spec(v, cond.probs, qs + static_cast<std::int64_t>(vi));
        Summary s;
        s.query_id = q.id;
        s.method = SummaryMethod::external;
        s.variant = to_string(v);
        s.text = render_closed_form_summary(spec_v);
        s.provenance = json{{"closed_form", to_string(v)}, {"choice_probs", spec_v.choice_probs}}.dump();
        const Summary* stored = runner.store().summary(q.id, summary_label(s));
        if (!stored) stored = &runner.store().put_summary(s);
        ref_row[to_string(v)] = reference_wasserstein(spec_v, held.probs);
        for (const auto& metric : metrics) {
          ++report.n_items;
          try {
            score_row[metric][to_string(v)] = sub.ensure_score(metric, q, *stored, scored, stopwords).value;
          } catch (const std::exception& e) {
            if (detail::is_config_error(e)) throw;
            ++report.n_failed_items;
            complete = false;
            runner.fail(q.id, "score", summary_label(s), metric, e.what());
          }
        }
      }
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      report.n_items += static_cast<int>(std::size(kVariants) * metrics.size());
      report.n_failed_items += static_cast<int>(std::size(kVariants) * metrics.size());
      runner.fail(q.id, "closed_form", "", "", e.what());
      continue;
    }
    if (!complete) continue;
    for (const auto& [v, x] : ref_row) reference[v].push_back(x);
    for (const auto& [m, row] : score_row)
      for (const auto& [v, x] : row) scores[m][v].push_back(x);
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& metric : metrics) {
    std::vector<double> ref_avg, score_avg;
    json variants = json::array();
    for (const auto v : kVariants) {
      const auto name = to_string(v);
      ref_avg.push_back(mean(reference[name]));
      score_avg.push_back(mean(scores[metric][name]));
      variants.push_back(json{{"variant", name}, {"reference", ref_avg.back()}, {"score", score_avg.back()}});
      rows.push_back({metric, name, detail::fixed(score_avg.back()), detail::fixed(ref_avg.back())});
    }
    const auto n_q = reference[to_string(kVariants[0])].size();
    // Metrics where higher is better are compared against the negated reference.
    const double sign = metric_orientation(metric) == Orientation::lower_is_better ? 1.0 : -1.0;
    std::optional<double> rho_avg;
    try {
      if (n_q > 0) rho_avg = sign * spearman_rank(score_avg, ref_avg);
    } catch (const DegenerateError&) {
    }
    std::vector<double> per_q;
    int undefined = 0;
    for (std::size_t i = 0; i < n_q; ++i) {
      std::vector<double> xs, ys;
      for (const auto v : kVariants) {
        xs.push_back(scores[metric][to_string(v)][i]);
        ys.push_back(reference[to_string(v)][i]);
      }
      try {
        per_q.push_back(sign * spearman_rank(xs, ys));
      } catch (const DegenerateError&) {
        ++undefined;
      }
    }
    json j{{"kind", "closed_form"},
           {"metric", metric},
           {"n_questions", n_q},
           {"variants", variants},
           {"rank_corr_avg", rho_avg ? json(*rho_avg) : json(nullptr)},
           {"rank_corr_per_question", per_q.empty() ? json(nullptr) : json(mean(per_q))},
           {"n_undefined_per_question", undefined},
           {"per_question_rule", "mean of per-question rank correlations; undefined ones dropped"}};
    report.lines.push_back(std::move(j));
    rows.push_back({metric, "rank corr (avg)", rho_avg ? detail::fixed(*rho_avg, 3) : "-", ""});
    rows.push_back({metric, "rank corr (per question)", per_q.empty() ? "-" : detail::fixed(mean(per_q), 3), ""});
  }
  report.lines.push_back(json{{"kind", "closed_form_answers"},
                              {"n_mapped", mapped},
                              {"n_unmapped", unmapped},
                              {"n_without_choices", skipped}});
  report.text += "Closed-form study (average score per summary variant against the reference distance)\n";
  report.text += detail::render_table({"metric", "variant", "score", "reference"}, rows);
  report.text += "held-out answers mapped to a choice: " + std::to_string(mapped) + ", unmapped: " +
                 std::to_string(unmapped) + "\n\n";
  return report;
}

// Loads the dataset, runs the study, writes report.jsonl, report.txt,
// failures.jsonl and the resolved config. Throws StudyFailedError (after
// writing everything) when failed items exceed the budget.
inline StudyReport run_study(const StudySpec& spec, const StudyEnv& env) {
  for (const auto& m : spec.metrics) metric_orientation(m);
  for (const auto& l : detail::study_labels(spec)) validate_summary_label(l);
  if ((spec.kind == StudyKind::dataset_score || spec.kind == StudyKind::convergence ||
       spec.kind == StudyKind::coverage || spec.kind == StudyKind::certainty_confusion) &&
      spec.summary_methods.empty())
    throw ConfigError("method: the study needs at least one summary method");

  const auto limit = spec.limit ? *spec.limit : static_cast<std::size_t>(env.cfg.num_queries.value_or(1000));
  const auto records = load_dataset_records(spec.dataset, limit, env.cfg.seed);
  RunStore store(env.run_dir);
  StudyRunner runner(env, store);

  StudyReport report;
  switch (spec.kind) {
    case StudyKind::dataset_score:
      report = run_dataset_score(runner, spec, records);
      break;
    case StudyKind::discrimination:
      report = run_discrimination(runner, spec, records);
      break;
    case StudyKind::closed_form:
      report = run_closed_form(runner, spec, records);
      break;
    case StudyKind::convergence:
      report = run_convergence(runner, spec, records);
      break;
    case StudyKind::coverage:
      report = run_coverage(runner, spec, records);
      break;
    case StudyKind::certainty_confusion:
      report = run_certainty_confusion(runner, spec, records);
      break;
  }
  const double failed_share =
      report.n_items ? static_cast<double>(report.n_failed_items) / report.n_items : 0.0;
  report.failed = failed_share > env.cfg.failure_budget;

  json head{{"kind", "study"},
            {"study", to_string(spec.kind)},
            {"n_queries", records.size()},
            {"n_items", report.n_items},
            {"n_failed_items", report.n_failed_items},
            {"failure_budget", env.cfg.failure_budget},
            {"failed", report.failed},
            {"config", env.cfg}};
  report.lines.insert(report.lines.begin(), std::move(head));
  std::string header = "Study: " + to_string(spec.kind) + "\nQuestions: " + std::to_string(records.size()) +
                       "\nItems: " + std::to_string(report.n_items) + " (" + std::to_string(report.n_failed_items) +
                       " failed)\n";
  if (report.failed) header += "FAILED: failed items exceed the budget of " + detail::fixed(100.0 * env.cfg.failure_budget, 1) + "%\n";
  report.text = header + "\n" + report.text;

  std::string jsonl;
  for (const auto& l : report.lines) jsonl += l.dump() + "\n";
  store.write_file("report.jsonl", jsonl);
  store.write_file("report.txt", report.text);
  store.write_failures();
  if (report.failed)
    throw StudyFailedError(std::to_string(report.n_failed_items) + " of " + std::to_string(report.n_items) +
                           " items failed; see failures.jsonl");
  return report;
}

}  // namespace selfreflect
