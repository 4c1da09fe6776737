#pragma once

// Comparison metrics: judge-rated summarization quality, an LM-judge score,
// embedding similarity, and optimal transport between the summary's
// statements and the samples.

#include <array>
#include <cmath>
#include <regex>
#include <string>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/emd.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/judging.hpp"
#include "selfreflect/masking.hpp"
#include "selfreflect/templates.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

// ---------------------------------------------------------------------------
// Summarization

inline constexpr std::array<const char*, 4> kSummarizationAxes = {"fluency", "coherence", "consistency",
                                                                   "relevance"};

struct SummarizationScore {
  std::array<double, 4> ratings{};  // in kSummarizationAxes order, each in [0,1]
  double score = 0.0;
};

inline std::optional<double> parse_first_number(const std::string& reply) {
  static const std::regex re(R"([-+]?(?:\d+\.?\d*|\.\d+))");
  std::smatch m;
  if (!std::regex_search(reply, m, re)) return std::nullopt;
  return std::stod(m.str());
}

inline SummarizationScore score_summarization_detail(const Query& query, const Summary& summary,
                                                     const AnswerSet& answers, const LanguageModel& judge,
                                                     const TemplateSet& templates) {
  if (summary.text.empty()) throw Error("score_summarization: empty summary");
  const auto block = render_answers(answers.conditioning_samples);
  SummarizationScore out;
  for (std::size_t a = 0; a < kSummarizationAxes.size(); ++a) {
    const std::string axis = kSummarizationAxes[a];
    // Fluency and coherence templates have no {answers} or {question} slot.
    const auto prompt = templates.render("summ_" + axis, {{"few_shot", templates.get("fewshot_" + axis)},
                                                          {"summary", summary.text},
                                                          {"question", query.text},
                                                          {"answers", block}});
    const double r = ask_judge(judge, judge_request(prompt), parse_first_number);
    out.ratings[a] = std::clamp(r, 0.0, 1.0);
  }
  out.score = (out.ratings[0] + out.ratings[1] + out.ratings[2] + out.ratings[3]) / 4.0;
  return out;
}

inline double score_summarization(const Query& query, const Summary& summary, const AnswerSet& answers,
                                  const LanguageModel& judge, const TemplateSet& templates) {
  return score_summarization_detail(query, summary, answers, judge, templates).score;
}

// ---------------------------------------------------------------------------
// LM judge

// Integer after the last "Score:", which must lie in 0..10.
inline std::optional<int> parse_judge_score(const std::string& reply) {
  static const std::regex re(R"(Score:\s*\**\s*(\d+))");
  std::optional<int> last;
  for (auto it = std::sregex_iterator(reply.begin(), reply.end(), re); it != std::sregex_iterator(); ++it) {
    const auto digits = (*it)[1].str();
    if (digits.size() > 3) continue;
    last = std::stoi(digits);
  }
  if (!last || *last < 0 || *last > 10) return std::nullopt;
  return last;
}

inline int score_lm_judge(const Query& query, const Summary& summary, const AnswerSet& answers,
                          const LanguageModel& judge, const TemplateSet& templates) {
  const auto prompt = templates.render(
      "lm_judge", {{"n_answers", std::to_string(answers.conditioning_samples.size())},
                   {"question", query.text},
                   {"answers", render_answers(answers.conditioning_samples)},
                   {"summary", summary.text}});
  return ask_judge(judge, judge_request(prompt), parse_judge_score);
}

// ---------------------------------------------------------------------------
// Embedding

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionMismatchError("embedding dimensions differ");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DegenerateError("zero embedding vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// Mean cosine similarity between the summary and each conditioning sample.
inline double score_embedding(const Summary& summary, const AnswerSet& answers, const Embedder& embedder) {
  if (answers.conditioning_samples.empty()) throw Error("score_embedding: no samples");
  const auto s = embedder.embed(summary.text);
  double total = 0.0;
  for (const auto& a : answers.conditioning_samples) total += cosine_similarity(s, embedder.embed(a.text));
  return total / static_cast<double>(answers.conditioning_samples.size());
}

// ---------------------------------------------------------------------------
// Optimal transport

namespace detail {

// The JSON array in a reply, tolerating code fences and Python-style quotes.
inline std::optional<json> extract_json_array(const std::string& reply) {
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  const auto body = reply.substr(open, close - open + 1);
  auto j = json::parse(body, nullptr, false);
  if (!j.is_discarded()) return j;
  std::string swapped = body;
  for (auto& c : swapped)
    if (c == '\'') c = '"';
  j = json::parse(swapped, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

inline std::optional<double> as_probability(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    auto s = utf8::trim(v.get<std::string>());
    bool percent = !s.empty() && s.back() == '%';
    if (percent) s.pop_back();
    try {
      std::size_t used = 0;
      const double d = std::stod(s, &used);
      if (used != s.size()) return std::nullopt;
      return percent ? d / 100.0 : d;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline std::optional<std::vector<Statement>> parse_statements(const std::string& reply) {
  const auto j = detail::extract_json_array(reply);
  if (!j || !j->is_array() || j->empty()) return std::nullopt;
  std::vector<Statement> out;
  for (const auto& e : *j) {
    if (!e.is_object() || !e.contains("prob") || !e.contains("statement") || !e["statement"].is_string())
      return std::nullopt;
    const auto p = detail::as_probability(e["prob"]);
    if (!p || !(*p >= 0.0)) return std::nullopt;
    out.push_back({*p, e["statement"].get<std::string>()});
  }
  return out;
}

// Renormalizes totals within [0.98, 1.02]; anything further off is an error.
inline StatementDistribution normalize_statements(std::vector<Statement> statements) {
  double total = 0.0;
  for (const auto& s : statements) total += s.prob;
  if (statements.empty() || total < 0.98 || total > 1.02)
    throw ProbabilityMassError("statement probabilities sum to " + std::to_string(total));
  for (auto& s : statements) s.prob /= total;
  return StatementDistribution::make(std::move(statements));
}

inline StatementDistribution split_statements(const Query& query, const Summary& summary,
                                              const LanguageModel& judge, const TemplateSet& templates) {
  if (summary.text.empty()) throw Error("split_statements: empty summary");
  const auto prompt = templates.render("ot_split", {{"question", query.text}, {"summary", summary.text}});
  return normalize_statements(ask_judge(judge, judge_request(prompt), parse_statements));
}

// P(yes) / (P(yes) + P(no)) of the judge's next token under the yes/no probe.
inline double entailment_probability(const std::string& premise, const std::string& hypothesis,
                                     const LanguageModel& judge, const TemplateSet& templates) {
  const auto prompt = templates.render("entailment", {{"premise", premise}, {"hypothesis", hypothesis}});
  const auto d = judge.next_token_distribution({prompt, {}});
  double yes = 0.0, no = 0.0;
  for (const auto& [k, p] : d.entries()) {
    const auto s = utf8::lower(utf8::trim(k));
    if (s == "yes") yes += p;
    else if (s == "no") no += p;
  }
  if (yes + no <= 0.0) throw JudgeParseError("entailment probe put no mass on yes or no");
  return yes / (yes + no);
}

struct EntailmentMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<double>> cost;
};

inline void to_json(json& j, const EntailmentMatrix& m) {
  j = json{{"rows", m.rows}, {"cols", m.cols}, {"cost", m.cost}};
}

inline EntailmentMatrix entailment_matrix(const StatementDistribution& statements,
                                          const std::vector<Answer>& samples, const LanguageModel& judge,
                                          const TemplateSet& templates) {
  EntailmentMatrix m;
  m.rows = statements.statements.size();
  m.cols = samples.size();
  m.cost.assign(m.rows, std::vector<double>(m.cols, 0.0));
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      const auto& s = statements.statements[i].text;
      const auto& a = samples[j].text;
      m.cost[i][j] = (1.0 - entailment_probability(s, a, judge, templates)) *
                     (1.0 - entailment_probability(a, s, judge, templates));
    }
  return m;
}

// Statements carry their probabilities; every sample carries 1/n.
inline double emd(const StatementDistribution& statements, std::size_t n_samples, const EntailmentMatrix& cost) {
  if (n_samples == 0) throw InfeasibleError("no samples");
  if (cost.rows != statements.statements.size() || cost.cols != n_samples)
    throw DimensionMismatchError("entailment matrix shape does not match the marginals");
  std::vector<double> rows;
  for (const auto& s : statements.statements) rows.push_back(s.prob);
  const std::vector<double> cols(n_samples, 1.0 / static_cast<double>(n_samples));
  return solve_transport(rows, cols, cost.cost).cost;
}

struct OptimalTransportScore {
  StatementDistribution statements;
  EntailmentMatrix matrix;
  double distance = 0.0;
};

inline OptimalTransportScore score_optimal_transport(const Query& query, const Summary& summary,
                                                     const AnswerSet& answers, const LanguageModel& judge,
                                                     const TemplateSet& templates) {
  OptimalTransportScore out;
  out.statements = split_statements(query, summary, judge, templates);
  out.matrix = entailment_matrix(out.statements, answers.conditioning_samples, judge, templates);
  out.distance = emd(out.statements, answers.conditioning_samples.size(), out.matrix);
  return out;
}

}  // namespace selfreflect
