#pragma once

// Shared domain types and run configuration. Everything here is a plain value
// type; JSON (de)serialization follows the run-artifact field names.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "selfreflect/errors.hpp"

namespace selfreflect {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Small enum <-> string helpers

namespace detail {

template <typename E, std::size_t N>
std::string enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  throw Error("unknown enum value");
}

template <typename E, std::size_t N>
E enum_parse(const std::string& s, const std::pair<E, const char*> (&table)[N],
             const char* what) {
  for (const auto& [e, name] : table)
    if (s == name) return e;
  throw Error(std::string("unknown ") + what + ": " + s);
}

template <typename T>
void get_opt(const json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null())
    out = it->get<T>();
  else
    out.reset();
}

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
  else j[key] = nullptr;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 256;

  // T=1, top_p=1 for drawing answers.
  static SamplingParams answers() { return {1.0, 1.0, 256}; }
  // Greedy decoding for summary generation.
  static SamplingParams greedy() { return {0.0, 1.0, 512}; }

  bool operator==(const SamplingParams&) const = default;
};

inline void to_json(json& j, const SamplingParams& p) {
  j = json{{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
}
inline void from_json(const json& j, SamplingParams& p) {
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.max_tokens = j.at("max_tokens").get<int>();
  if (p.temperature < 0) throw Error("temperature must be >= 0");
  if (!(p.top_p > 0 && p.top_p <= 1)) throw Error("top_p must be in (0,1]");
  if (p.max_tokens <= 0) throw Error("max_tokens must be positive");
}

struct Query {
  std::string id;
  std::string text;
  std::optional<std::vector<std::string>> gold_answers;
  std::optional<std::vector<std::string>> choices;

  bool operator==(const Query&) const = default;
};

inline void to_json(json& j, const Query& q) {
  j = json{{"id", q.id}, {"text", q.text}};
  detail::put_opt(j, "gold_answers", q.gold_answers);
  detail::put_opt(j, "choices", q.choices);
}
inline void from_json(const json& j, Query& q) {
  q.id = j.at("id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  if (q.text.empty()) throw Error("query text must be non-empty");
  detail::get_opt(j, "gold_answers", q.gold_answers);
  detail::get_opt(j, "choices", q.choices);
}

struct Answer {
  std::string text;
  std::int64_t seed = 0;

  bool operator==(const Answer&) const = default;
};

inline void to_json(json& j, const Answer& a) { j = json{{"text", a.text}, {"seed", a.seed}}; }
inline void from_json(const json& j, Answer& a) {
  a.text = j.at("text").get<std::string>();
  a.seed = j.at("seed").get<std::int64_t>();
  if (a.text.empty()) throw Error("answer text must be non-empty");
}

struct AnswerSet {
  std::string query_id;
  std::vector<Answer> conditioning_samples;
  std::vector<Answer> heldout_samples;
  SamplingParams sampling_params = SamplingParams::answers();

  bool operator==(const AnswerSet&) const = default;
};

inline void to_json(json& j, const AnswerSet& s) {
  j = json{{"query_id", s.query_id},
           {"conditioning_samples", s.conditioning_samples},
           {"heldout_samples", s.heldout_samples},
           {"sampling_params", s.sampling_params}};
}
inline void from_json(const json& j, AnswerSet& s) {
  s.query_id = j.at("query_id").get<std::string>();
  s.conditioning_samples = j.at("conditioning_samples").get<std::vector<Answer>>();
  s.heldout_samples = j.at("heldout_samples").get<std::vector<Answer>>();
  s.sampling_params = j.at("sampling_params").get<SamplingParams>();
}

enum class SummaryMethod {
  greedy,
  basic,
  cot,
  sample_summarize,
  good,
  bad,
  almost_good,
  truncated,
  verbalized,
  percentage,
  or_concat,
  majority,
  external,
};

inline constexpr std::pair<SummaryMethod, const char*> kSummaryMethodNames[] = {
    {SummaryMethod::greedy, "greedy"},
    {SummaryMethod::basic, "basic"},
    {SummaryMethod::cot, "cot"},
    {SummaryMethod::sample_summarize, "sample_summarize"},
    {SummaryMethod::good, "good"},
    {SummaryMethod::bad, "bad"},
    {SummaryMethod::almost_good, "almost_good"},
    {SummaryMethod::truncated, "truncated"},
    {SummaryMethod::verbalized, "verbalized"},
    {SummaryMethod::percentage, "percentage"},
    {SummaryMethod::or_concat, "or_concat"},
    {SummaryMethod::majority, "majority"},
    {SummaryMethod::external, "external"},
};

inline std::string to_string(SummaryMethod m) { return detail::enum_name(m, kSummaryMethodNames); }
inline SummaryMethod parse_summary_method(const std::string& s) {
  return detail::enum_parse(s, kSummaryMethodNames, "summary method");
}

struct Summary {
  std::string query_id;
  SummaryMethod method = SummaryMethod::external;
  std::string text;
  std::string provenance;
  // Distinguishes several summaries of one method for one query (e.g. the
  // closed-form variants, or N=10 vs N=20 sample-and-summarize runs).
  std::string variant;

  bool operator==(const Summary&) const = default;
};

inline void to_json(json& j, const Summary& s) {
  j = json{{"query_id", s.query_id},
           {"method", to_string(s.method)},
           {"text", s.text},
           {"provenance", s.provenance},
           {"variant", s.variant}};
}
inline void from_json(const json& j, Summary& s) {
  s.query_id = j.at("query_id").get<std::string>();
  s.method = parse_summary_method(j.at("method").get<std::string>());
  s.text = j.at("text").get<std::string>();
  s.provenance = j.value("provenance", "");
  s.variant = j.value("variant", "");
  if (s.text.empty()) throw Error("summary text must be non-empty");
}

// Label used to key a summary in reports: the method, plus the variant when set.
inline std::string summary_label(const Summary& s) {
  return s.variant.empty() ? to_string(s.method) : to_string(s.method) + ":" + s.variant;
}

// ---------------------------------------------------------------------------
// TokenDistribution

inline constexpr double kMassTolerance = 1e-9;

// Normalized distribution over a judge's token strings. Mass the backend did
// not enumerate (top-k truncation) sits in other_mass, which acts as one
// extra support point.
class TokenDistribution {
 public:
  using Entry = std::pair<std::string, double>;

  TokenDistribution() : other_mass_(1.0) {}

  // Duplicate keys are merged by summing. Throws ProbabilityMassError if the
  // total deviates from 1 by more than kMassTolerance.
  static TokenDistribution from_probs(std::vector<Entry> entries, double other_mass = 0.0) {
    TokenDistribution d;
    d.other_mass_ = other_mass;
    d.entries_ = merge(std::move(entries));
    d.check();
    return d;
  }

  // From top-k log-probabilities: the tail 1 - sum(exp) becomes other_mass.
  // Slight over-coverage from server-side rounding is renormalized away.
  static TokenDistribution from_logprobs(const std::vector<Entry>& logprobs) {
    std::vector<Entry> probs;
    probs.reserve(logprobs.size());
    double total = 0.0;
    for (const auto& [k, lp] : logprobs) {
      const double p = std::isfinite(lp) ? std::exp(lp) : 0.0;
      probs.emplace_back(k, p);
      total += p;
    }
    probs = merge(std::move(probs));
    TokenDistribution d;
    if (total > 1.0) {
      for (auto& e : probs) e.second /= total;
      d.other_mass_ = 0.0;
    } else {
      d.other_mass_ = 1.0 - total;
    }
    d.entries_ = std::move(probs);
    d.check();
    return d;
  }

  // Full softmax over logits.
  static TokenDistribution from_logits(const std::vector<Entry>& logits) {
    double mx = -INFINITY;
    for (const auto& e : logits) mx = std::max(mx, e.second);
    if (!std::isfinite(mx)) throw DegenerateDistributionError("no finite logit");
    std::vector<Entry> probs;
    double z = 0.0;
    for (const auto& [k, l] : logits) {
      const double p = std::exp(l - mx);
      probs.emplace_back(k, p);
      z += p;
    }
    for (auto& e : probs) e.second /= z;
    TokenDistribution d;
    d.other_mass_ = 0.0;
    d.entries_ = merge(std::move(probs));
    return d;
  }

  static TokenDistribution one_hot(const std::string& key) {
    return from_probs({{key, 1.0}}, 0.0);
  }

  // Keeps the k most probable entries (ties broken by key) and moves the rest
  // into other_mass.
  TokenDistribution truncated_top_k(std::size_t k) const {
    auto sorted = entries_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    TokenDistribution d;
    d.other_mass_ = other_mass_;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i < k) d.entries_.push_back(sorted[i]);
      else d.other_mass_ += sorted[i].second;
    }
    return d;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  double other_mass() const { return other_mass_; }

  double prob(const std::string& key) const {
    for (const auto& [k, p] : entries_)
      if (k == key) return p;
    return 0.0;
  }

  double total() const {
    double s = other_mass_;
    for (const auto& e : entries_) s += e.second;
    return s;
  }

  // Entry with the largest probability; other_mass never wins.
  std::optional<std::string> argmax() const {
    const Entry* best = nullptr;
    for (const auto& e : entries_)
      if (!best || e.second > best->second) best = &e;
    if (!best) return std::nullopt;
    return best->first;
  }

  bool operator==(const TokenDistribution&) const = default;

 private:
  static std::vector<Entry> merge(std::vector<Entry> entries) {
    std::vector<Entry> out;
    std::map<std::string, std::size_t> index;
    for (auto& [k, p] : entries) {
      if (auto it = index.find(k); it != index.end()) {
        out[it->second].second += p;
      } else {
        index.emplace(k, out.size());
        out.emplace_back(std::move(k), p);
      }
    }
    return out;
  }

  void check() const {
    if (!(other_mass_ >= 0.0 && other_mass_ <= 1.0 + kMassTolerance))
      throw ProbabilityMassError("other_mass outside [0,1]");
    for (const auto& e : entries_)
      if (!(e.second >= 0.0) || e.second > 1.0 + kMassTolerance)
        throw ProbabilityMassError("token probability outside [0,1]: " + e.first);
    if (std::abs(total() - 1.0) > kMassTolerance)
      throw ProbabilityMassError("token distribution does not sum to 1");
  }

  std::vector<Entry> entries_;
  double other_mass_;
};

inline void to_json(json& j, const TokenDistribution& d) {
  json entries = json::array();
  for (const auto& [k, p] : d.entries()) entries.push_back(json::array({k, p}));
  j = json{{"entries", std::move(entries)}, {"other_mass", d.other_mass()}};
}
inline void from_json(const json& j, TokenDistribution& d) {
  std::vector<TokenDistribution::Entry> entries;
  for (const auto& e : j.at("entries")) {
    if (e.is_array()) entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
    else entries.emplace_back(e.at("token_key").get<std::string>(), e.at("prob").get<double>());
  }
  d = TokenDistribution::from_probs(std::move(entries), j.value("other_mass", 0.0));
}

// ---------------------------------------------------------------------------

struct MaskTask {
  int answer_index = 0;
  int word_index = 0;
  std::string surface_word;
  std::string left_context;
  std::string right_context;
  std::vector<std::string> target_tokens;

  bool operator==(const MaskTask&) const = default;
};

inline void to_json(json& j, const MaskTask& t) {
  j = json{{"answer_index", t.answer_index}, {"word_index", t.word_index},
           {"surface_word", t.surface_word}, {"left_context", t.left_context},
           {"right_context", t.right_context}, {"target_tokens", t.target_tokens}};
}
inline void from_json(const json& j, MaskTask& t) {
  t.answer_index = j.at("answer_index").get<int>();
  t.word_index = j.at("word_index").get<int>();
  t.surface_word = j.at("surface_word").get<std::string>();
  t.left_context = j.at("left_context").get<std::string>();
  t.right_context = j.at("right_context").get<std::string>();
  t.target_tokens = j.at("target_tokens").get<std::vector<std::string>>();
}

struct TokenScore {
  int answer_index = 0;
  int word_index = 0;
  int token_position = 0;
  double distance = 0.0;
  bool operator==(const TokenScore&) const = default;
};

struct WordScore {
  int answer_index = 0;
  int word_index = 0;
  std::string word;
  double distance = 0.0;
  bool operator==(const WordScore&) const = default;
};

struct AnswerScore {
  int answer_index = 0;
  double distance = 0.0;
  bool operator==(const AnswerScore&) const = default;
};

// Hierarchical distances, ordered by (answer_index, word_index, token_position).
struct ScoreBreakdown {
  std::vector<TokenScore> per_token;
  std::vector<WordScore> per_word;
  std::vector<AnswerScore> per_answer;
  double per_question = 0.0;
  int n_tasks = 0;
  int n_failed_tasks = 0;
  int n_empty_answers = 0;

  bool operator==(const ScoreBreakdown&) const = default;
};

inline void to_json(json& j, const TokenScore& s) {
  j = json{{"answer_index", s.answer_index}, {"word_index", s.word_index},
           {"token_position", s.token_position}, {"distance", s.distance}};
}
inline void from_json(const json& j, TokenScore& s) {
  s.answer_index = j.at("answer_index").get<int>();
  s.word_index = j.at("word_index").get<int>();
  s.token_position = j.at("token_position").get<int>();
  s.distance = j.at("distance").get<double>();
}
inline void to_json(json& j, const WordScore& s) {
  j = json{{"answer_index", s.answer_index}, {"word_index", s.word_index},
           {"word", s.word}, {"distance", s.distance}};
}
inline void from_json(const json& j, WordScore& s) {
  s.answer_index = j.at("answer_index").get<int>();
  s.word_index = j.at("word_index").get<int>();
  s.word = j.at("word").get<std::string>();
  s.distance = j.at("distance").get<double>();
}
inline void to_json(json& j, const AnswerScore& s) {
  j = json{{"answer_index", s.answer_index}, {"distance", s.distance}};
}
inline void from_json(const json& j, AnswerScore& s) {
  s.answer_index = j.at("answer_index").get<int>();
  s.distance = j.at("distance").get<double>();
}
inline void to_json(json& j, const ScoreBreakdown& b) {
  j = json{{"per_token", b.per_token},      {"per_word", b.per_word},
           {"per_answer", b.per_answer},    {"per_question", b.per_question},
           {"n_tasks", b.n_tasks},          {"n_failed_tasks", b.n_failed_tasks},
           {"n_empty_answers", b.n_empty_answers}};
}
inline void from_json(const json& j, ScoreBreakdown& b) {
  b.per_token = j.at("per_token").get<std::vector<TokenScore>>();
  b.per_word = j.at("per_word").get<std::vector<WordScore>>();
  b.per_answer = j.at("per_answer").get<std::vector<AnswerScore>>();
  b.per_question = j.at("per_question").get<double>();
  b.n_tasks = j.at("n_tasks").get<int>();
  b.n_failed_tasks = j.value("n_failed_tasks", 0);
  b.n_empty_answers = j.value("n_empty_answers", 0);
}

// ---------------------------------------------------------------------------
// Backends and run configuration

enum class BackendKind { http_completion, toy_table, literal_oracle };

inline constexpr std::pair<BackendKind, const char*> kBackendKindNames[] = {
    {BackendKind::http_completion, "http_completion"},
    {BackendKind::toy_table, "toy_table"},
    {BackendKind::literal_oracle, "literal_oracle"},
};

inline std::string to_string(BackendKind k) { return detail::enum_name(k, kBackendKindNames); }
inline BackendKind parse_backend_kind(const std::string& s) {
  return detail::enum_parse(s, kBackendKindNames, "backend kind");
}

struct BackendRef {
  BackendKind kind = BackendKind::toy_table;
  std::optional<std::string> endpoint;
  std::string model_name;
  int top_k_logprobs = 20;
  std::optional<std::string> table_path;
  // Backend only exposes its top prediction; distributions degrade to one-hot.
  bool argmax_only = false;

  bool operator==(const BackendRef&) const = default;
};

inline void validate(const BackendRef& b, const std::string& field) {
  if (b.kind == BackendKind::http_completion && (!b.endpoint || b.endpoint->empty()))
    throw ConfigError(field + ".endpoint");
  if (b.kind == BackendKind::toy_table && (!b.table_path || b.table_path->empty()))
    throw ConfigError(field + ".table_path");
  if (b.top_k_logprobs < 1) throw ConfigError(field + ".top_k_logprobs");
}

inline void to_json(json& j, const BackendRef& b) {
  j = json{{"kind", to_string(b.kind)}, {"model_name", b.model_name},
           {"top_k_logprobs", b.top_k_logprobs}, {"argmax_only", b.argmax_only}};
  detail::put_opt(j, "endpoint", b.endpoint);
  detail::put_opt(j, "table_path", b.table_path);
}
inline void from_json(const json& j, BackendRef& b) {
  b.kind = parse_backend_kind(j.at("kind").get<std::string>());
  b.model_name = j.value("model_name", "");
  b.top_k_logprobs = j.value("top_k_logprobs", 20);
  b.argmax_only = j.value("argmax_only", false);
  detail::get_opt(j, "endpoint", b.endpoint);
  detail::get_opt(j, "table_path", b.table_path);
}

enum class HeldoutMode { disjoint, shared };
enum class Aggregation { hierarchical, pooled };

inline constexpr std::pair<HeldoutMode, const char*> kHeldoutModeNames[] = {
    {HeldoutMode::disjoint, "disjoint"}, {HeldoutMode::shared, "shared"}};
inline constexpr std::pair<Aggregation, const char*> kAggregationNames[] = {
    {Aggregation::hierarchical, "hierarchical"}, {Aggregation::pooled, "pooled"}};

struct RunConfig {
  std::optional<int> n_conditioning;
  std::optional<int> m_heldout;
  std::optional<int> num_queries;
  std::optional<double> tau;
  std::string stopword_list_id;
  std::int64_t seed = 0;
  std::optional<BackendRef> judge_endpoint;
  std::optional<BackendRef> target_endpoint;
  std::optional<BackendRef> embed_endpoint;
  std::string prompt_set_id;
  std::optional<int> bootstrap_resamples;

  HeldoutMode heldout_mode = HeldoutMode::disjoint;
  Aggregation aggregation = Aggregation::hierarchical;
  // Score P(True) on {True, False, other} instead of the full next-token distribution.
  bool ptrue_projection = false;
  // Fraction of failed items above which a study fails.
  double failure_budget = 0.10;
  int jobs = 1;

  // Stamped by the CLI after resolving stopwords and templates.
  std::string stopword_hash;
  std::string template_hash;

  int n() const { return n_conditioning.value(); }
  int m() const { return m_heldout.value(); }
  double temperature() const { return tau.value(); }
  int resamples() const { return bootstrap_resamples.value(); }

  bool operator==(const RunConfig&) const = default;
};

// Fills defaults (N=M=50, 1000 queries, tau=5, 100 bootstrap resamples) and
// rejects violated invariants with ConfigError naming the field.
inline RunConfig validate_run_config(RunConfig cfg) {
  if (!cfg.n_conditioning) cfg.n_conditioning = 50;
  if (!cfg.m_heldout) cfg.m_heldout = 50;
  if (!cfg.num_queries) cfg.num_queries = 1000;
  if (!cfg.tau) cfg.tau = 5.0;
  if (!cfg.bootstrap_resamples) cfg.bootstrap_resamples = 100;
  if (cfg.stopword_list_id.empty()) cfg.stopword_list_id = "english";
  if (cfg.prompt_set_id.empty()) cfg.prompt_set_id = "default";

  if (*cfg.n_conditioning < 1) throw ConfigError("n_conditioning");
  if (*cfg.m_heldout < 1) throw ConfigError("m_heldout");
  if (*cfg.num_queries < 1) throw ConfigError("num_queries");
  if (!(*cfg.tau > 0.0) || !std::isfinite(*cfg.tau)) throw ConfigError("tau");
  if (*cfg.bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples");
  if (!(cfg.failure_budget >= 0.0 && cfg.failure_budget <= 1.0)) throw ConfigError("failure_budget");
  if (cfg.jobs < 1) throw ConfigError("jobs");
  if (cfg.judge_endpoint) validate(*cfg.judge_endpoint, "judge_endpoint");
  if (cfg.target_endpoint) validate(*cfg.target_endpoint, "target_endpoint");
  if (cfg.embed_endpoint) validate(*cfg.embed_endpoint, "embed_endpoint");
  return cfg;
}

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"stopword_list_id", c.stopword_list_id},
           {"seed", c.seed},
           {"prompt_set_id", c.prompt_set_id},
           {"heldout_mode", detail::enum_name(c.heldout_mode, kHeldoutModeNames)},
           {"aggregation", detail::enum_name(c.aggregation, kAggregationNames)},
           {"ptrue_projection", c.ptrue_projection},
           {"failure_budget", c.failure_budget},
           {"jobs", c.jobs},
           {"stopword_hash", c.stopword_hash},
           {"template_hash", c.template_hash}};
  detail::put_opt(j, "n_conditioning", c.n_conditioning);
  detail::put_opt(j, "m_heldout", c.m_heldout);
  detail::put_opt(j, "num_queries", c.num_queries);
  detail::put_opt(j, "tau", c.tau);
  detail::put_opt(j, "bootstrap_resamples", c.bootstrap_resamples);
  detail::put_opt(j, "judge_endpoint", c.judge_endpoint);
  detail::put_opt(j, "target_endpoint", c.target_endpoint);
  detail::put_opt(j, "embed_endpoint", c.embed_endpoint);
}
inline void from_json(const json& j, RunConfig& c) {
  detail::get_opt(j, "n_conditioning", c.n_conditioning);
  detail::get_opt(j, "m_heldout", c.m_heldout);
  detail::get_opt(j, "num_queries", c.num_queries);
  detail::get_opt(j, "tau", c.tau);
  detail::get_opt(j, "bootstrap_resamples", c.bootstrap_resamples);
  detail::get_opt(j, "judge_endpoint", c.judge_endpoint);
  detail::get_opt(j, "target_endpoint", c.target_endpoint);
  detail::get_opt(j, "embed_endpoint", c.embed_endpoint);
  c.stopword_list_id = j.value("stopword_list_id", "");
  c.seed = j.value("seed", std::int64_t{0});
  c.prompt_set_id = j.value("prompt_set_id", "");
  c.heldout_mode = detail::enum_parse(j.value("heldout_mode", "disjoint"), kHeldoutModeNames, "heldout_mode");
  c.aggregation = detail::enum_parse(j.value("aggregation", "hierarchical"), kAggregationNames, "aggregation");
  c.ptrue_projection = j.value("ptrue_projection", false);
  c.failure_budget = j.value("failure_budget", 0.10);
  c.jobs = j.value("jobs", 1);
  c.stopword_hash = j.value("stopword_hash", "");
  c.template_hash = j.value("template_hash", "");
}

// ---------------------------------------------------------------------------

struct Statement {
  double prob = 0.0;
  std::string text;
  bool operator==(const Statement&) const = default;
};

struct StatementDistribution {
  std::vector<Statement> statements;

  // Non-empty, probabilities in [0,1] summing to 1 within 1e-6.
  static StatementDistribution make(std::vector<Statement> statements) {
    if (statements.empty()) throw ProbabilityMassError("statement distribution is empty");
    double s = 0.0;
    for (const auto& st : statements) {
      if (!(st.prob >= 0.0 && st.prob <= 1.0)) throw ProbabilityMassError("statement prob outside [0,1]");
      s += st.prob;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ProbabilityMassError("statement probabilities do not sum to 1");
    return StatementDistribution{std::move(statements)};
  }

  bool operator==(const StatementDistribution&) const = default;
};

inline void to_json(json& j, const Statement& s) { j = json{{"prob", s.prob}, {"text", s.text}}; }
inline void from_json(const json& j, Statement& s) {
  s.prob = j.at("prob").get<double>();
  s.text = j.at("text").get<std::string>();
}
inline void to_json(json& j, const StatementDistribution& d) { j = json{{"statements", d.statements}}; }
inline void from_json(const json& j, StatementDistribution& d) {
  d = StatementDistribution::make(j.at("statements").get<std::vector<Statement>>());
}

}  // namespace selfreflect
