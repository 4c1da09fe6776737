#pragma once

// Summary strategies: greedy answers, the basic and chain-of-thought prompts,
// sample-and-summarize, the interventional variants derived from a good
// summary, answer clustering, and the certainty classifier.

#include <algorithm>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/judging.hpp"
#include "selfreflect/masking.hpp"
#include "selfreflect/templates.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

namespace detail {

inline Summary make_summary(const Query& q, SummaryMethod m, std::string text, json provenance) {
  if (text.empty()) throw EmptyCompletionError(to_string(m) + " summary for " + q.id + " is empty");
  Summary s;
  s.query_id = q.id;
  s.method = m;
  s.text = std::move(text);
  s.provenance = provenance.dump();
  return s;
}

// Greedy completion with trailing whitespace removed; an empty reply is
// retried once with the next seed.
inline std::string non_empty_completion(const LanguageModel& model, GenerateRequest req) {
  auto text = utf8::rtrim(model.generate(req));
  if (!text.empty()) return text;
  ++req.seed;
  text = utf8::rtrim(model.generate(req));
  if (text.empty()) throw EmptyCompletionError("empty completion after retry");
  return text;
}

inline GenerateRequest greedy_request(std::string prompt, std::int64_t seed) {
  GenerateRequest req;
  req.prompt = std::move(prompt);
  req.params = SamplingParams::greedy();
  req.seed = seed;
  return req;
}

}  // namespace detail

inline Summary summarize_greedy(const Query& query, const LanguageModel& target, const TemplateSet& templates,
                                std::int64_t seed = 0) {
  const auto prompt = templates.render("greedy", {{"question", query.text}});
  auto text = detail::non_empty_completion(target, detail::greedy_request(prompt, seed));
  return detail::make_summary(query, SummaryMethod::greedy, std::move(text),
                              {{"template", "greedy"}, {"model", target.model_name()}, {"seed", seed}});
}

inline Summary summarize_basic(const Query& query, const LanguageModel& target, const TemplateSet& templates,
                               std::int64_t seed = 0) {
  const auto prompt = templates.render("basic", {{"question", query.text}});
  auto text = utf8::trim(detail::non_empty_completion(target, detail::greedy_request(prompt, seed)));
  return detail::make_summary(query, SummaryMethod::basic, std::move(text),
                              {{"template", "basic"}, {"model", target.model_name()}, {"seed", seed}});
}

// Text after the last "Summary:" marker, trimmed; nullopt when absent or empty.
inline std::optional<std::string> extract_cot_summary(const std::string& completion) {
  const auto at = completion.rfind("Summary:");
  if (at == std::string::npos) return std::nullopt;
  auto text = utf8::trim(std::string_view(completion).substr(at + 8));
  if (text.empty()) return std::nullopt;
  return text;
}

inline Summary summarize_cot(const Query& query, const LanguageModel& target, const TemplateSet& templates,
                             std::int64_t seed = 0) {
  const auto prompt = templates.render("cot", {{"question", query.text}});
  JudgeReply reply;
  auto text = ask_judge<MarkerMissingError>(target, detail::greedy_request(prompt, seed), extract_cot_summary,
                                            &reply);
  return detail::make_summary(query, SummaryMethod::cot, std::move(text),
                              {{"template", "cot"},
                               {"model", target.model_name()},
                               {"seed", seed},
                               {"completion", reply.raw},
                               {"reprompted", reply.reprompted}});
}

// n answers at the answer-sampling parameters, seeds seed, seed+1, ...
inline std::vector<Answer> sample_answers(const Query& query, const LanguageModel& target,
                                          const TemplateSet& templates, int n, std::int64_t seed,
                                          SamplingParams params = SamplingParams::answers()) {
  if (n < 1) throw ConfigError("n_conditioning");
  const auto prompt = templates.render("greedy", {{"question", query.text}});
  std::vector<Answer> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    GenerateRequest req;
    req.prompt = prompt;
    req.params = params;
    req.seed = seed + i;
    req.allow_truncation = true;
    out.push_back({utf8::rtrim(target.generate(req)), req.seed});
    if (out.back().text.empty()) throw EmptyCompletionError("empty sampled answer for " + query.id);
  }
  return out;
}

inline Summary summarize_from_samples(const Query& query, const std::vector<Answer>& samples,
                                      const LanguageModel& model, const TemplateSet& templates,
                                      SummaryMethod method, std::int64_t seed) {
  const auto prompt = templates.render("good_summary", {{"n_answers", std::to_string(samples.size())},
                                                        {"question", query.text},
                                                        {"answers", render_answers(samples)}});
  auto text = utf8::trim(detail::non_empty_completion(model, detail::greedy_request(prompt, seed)));
  return detail::make_summary(query, method, std::move(text),
                              {{"template", "good_summary"},
                               {"model", model.model_name()},
                               {"n", samples.size()},
                               {"seed", seed},
                               {"samples", samples}});
}

inline Summary summarize_sample_and_summarize(const Query& query, const LanguageModel& target,
                                              const TemplateSet& templates, int n, std::int64_t seed) {
  const auto samples = sample_answers(query, target, templates, n, seed);
  auto s = summarize_from_samples(query, samples, target, templates, SummaryMethod::sample_summarize, seed);
  s.variant = "n" + std::to_string(n);
  return s;
}

// ---------------------------------------------------------------------------
// Clustering

struct Cluster {
  std::string id;
  std::string representative;
  std::vector<int> members;  // 1-based sample indices, ascending
};

struct ClusterReport {
  std::vector<Cluster> clusters;  // descending size, ties by earliest member
  std::map<std::string, int> counted_sizes;
  bool single_cluster = false;  // the judge ignored the two-cluster minimum
};

namespace detail {

inline std::vector<std::string> json_fences(const std::string& reply) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = reply.find("```json", pos);
    if (open == std::string::npos) break;
    const auto body = open + 7;
    const auto close = reply.find("```", body);
    if (close == std::string::npos) {
      out.push_back(reply.substr(body));
      break;
    }
    out.push_back(reply.substr(body, close - body));
    pos = close + 3;
  }
  return out;
}

inline std::optional<int> parse_member(const json& v, int n) {
  int k = 0;
  if (v.is_number_integer()) {
    k = v.get<int>();
  } else if (v.is_string()) {
    static const std::regex re(R"(^\s*x_(\d{1,6})\s*$)");
    std::smatch m;
    const auto s = v.get<std::string>();
    if (!std::regex_match(s, m, re)) return std::nullopt;
    k = std::stoi(m[1].str());
  } else {
    return std::nullopt;
  }
  if (k < 1 || k > n) return std::nullopt;
  return k;
}

}  // namespace detail

inline std::optional<ClusterReport> parse_clusters(const std::string& reply, int n_answers) {
  const auto blocks = detail::json_fences(reply);
  if (blocks.size() < 2) return std::nullopt;
  const auto reps = json::parse(blocks[0], nullptr, false);
  const auto mems = json::parse(blocks[1], nullptr, false);
  if (!reps.is_array() || !mems.is_array() || reps.empty()) return std::nullopt;

  std::vector<Cluster> clusters;
  std::map<std::string, std::size_t> index;
  for (const auto& r : reps) {
    if (!r.is_object() || !r.contains("cluster_id") || !r.contains("representative_answer")) return std::nullopt;
    if (!r["cluster_id"].is_string() || !r["representative_answer"].is_string()) return std::nullopt;
    const auto id = r["cluster_id"].get<std::string>();
    if (index.count(id)) return std::nullopt;
    index[id] = clusters.size();
    clusters.push_back({id, r["representative_answer"].get<std::string>(), {}});
  }
  std::vector<bool> taken(static_cast<std::size_t>(n_answers) + 1, false);
  for (const auto& m : mems) {
    if (!m.is_object() || !m.contains("cluster_id") || !m.contains("cluster_members")) return std::nullopt;
    if (!m["cluster_id"].is_string() || !m["cluster_members"].is_array()) return std::nullopt;
    const auto it = index.find(m["cluster_id"].get<std::string>());
    if (it == index.end()) return std::nullopt;
    for (const auto& v : m["cluster_members"]) {
      const auto k = detail::parse_member(v, n_answers);
      if (!k || taken[static_cast<std::size_t>(*k)]) return std::nullopt;
      taken[static_cast<std::size_t>(*k)] = true;
      clusters[it->second].members.push_back(*k);
    }
  }

  ClusterReport report;
  for (auto& c : clusters) {
    if (c.members.empty()) continue;
    std::sort(c.members.begin(), c.members.end());
    report.clusters.push_back(std::move(c));
  }
  if (report.clusters.empty()) return std::nullopt;
  std::stable_sort(report.clusters.begin(), report.clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.members.front() < b.members.front();
  });
  for (const auto& c : report.clusters) report.counted_sizes[c.id] = static_cast<int>(c.members.size());
  report.single_cluster = report.clusters.size() == 1;
  return report;
}

inline ClusterReport cluster_answers(const Query& query, const std::vector<Answer>& answers,
                                     const LanguageModel& judge, const TemplateSet& templates,
                                     std::int64_t seed = 0) {
  if (answers.size() < 2) throw Error("cluster_answers needs at least two answers");
  const int n = static_cast<int>(answers.size());
  const auto prompt = templates.render("cluster", {{"n_answers", std::to_string(n)},
                                                   {"question", query.text},
                                                   {"answers", render_answers(answers)}});
  return ask_judge(judge, judge_request(prompt, seed), [n](const std::string& r) { return parse_clusters(r, n); });
}

// Integer percentages summing to 100 (largest remainder, ties to the earlier entry).
inline std::vector<int> integer_percentages(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (weights.empty() || total <= 0.0) throw Error("integer_percentages: no mass");
  std::vector<int> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = 100.0 * weights[i] / total;
    out[i] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += out[i];
    rem.emplace_back(exact - out[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < 100; ++k, ++assigned) ++out[rem[k % rem.size()].second];
  return out;
}

// "- <representative> (<p>%)" lines in cluster order.
inline std::string render_cluster_list(const ClusterReport& report) {
  std::vector<double> sizes;
  for (const auto& c : report.clusters) sizes.push_back(static_cast<double>(c.members.size()));
  const auto pct = integer_percentages(sizes);
  std::string out;
  for (std::size_t i = 0; i < report.clusters.size(); ++i) {
    if (i) out += '\n';
    out += "- " + report.clusters[i].representative + " (" + std::to_string(pct[i]) + "%)";
  }
  return out;
}

// Drops "(NN% sure)" brackets and tidies the spacing they leave behind.
inline std::string remove_percentages(const std::string& text) {
  static const std::regex bracket(R"(\s*\(\s*\d+(?:\.\d+)?\s*%(?:\s*sure)?\s*\))");
  static const std::regex space_before_punct(R"(\s+([,.;:!?]))");
  auto s = std::regex_replace(text, bracket, "");
  s = std::regex_replace(s, space_before_punct, "$1");
  return utf8::trim(s);
}

// ---------------------------------------------------------------------------
// Interventions

struct InterventionSet {
  std::map<std::string, Summary> summaries;  // keyed by method name
  std::map<std::string, std::string> failures;
  std::optional<ClusterReport> clusters;
};

namespace detail {
template <typename F>
void try_variant(InterventionSet& set, const std::string& name, F make) {
  try {
    set.summaries.emplace(name, make());
  } catch (const Error& e) {
    set.failures.emplace(name, e.what());
  }
}
}  // namespace detail

// Good summary from the conditioning samples, then bad (key facts changed),
// almost_good and truncated (shortened), and the cluster-based majority,
// percentage, verbalized and or_concat variants.
inline InterventionSet make_intervention_summaries(const Query& query, const AnswerSet& answers,
                                                   const LanguageModel& judge, const TemplateSet& templates,
                                                   std::int64_t seed = 0) {
  InterventionSet set;
  const auto& samples = answers.conditioning_samples;
  detail::try_variant(set, "good", [&] {
    return summarize_from_samples(query, samples, judge, templates, SummaryMethod::good, seed);
  });
  if (auto it = set.summaries.find("good"); it != set.summaries.end()) {
    const Summary good = it->second;
    const std::string good_ref = query.id + "/good";
    auto derive = [&](SummaryMethod method, const char* tpl) {
      const auto prompt = templates.render(tpl, {{"question", query.text}, {"good_summary", good.text}});
      auto text = utf8::trim(detail::non_empty_completion(judge, detail::greedy_request(prompt, seed)));
      return detail::make_summary(query, method, std::move(text),
                                  {{"template", tpl}, {"model", judge.model_name()}, {"seed", seed},
                                   {"source", good_ref}});
    };
    detail::try_variant(set, "bad", [&] { return derive(SummaryMethod::bad, "change"); });
    detail::try_variant(set, "almost_good", [&] { return derive(SummaryMethod::almost_good, "shorten"); });
    detail::try_variant(set, "truncated", [&] { return derive(SummaryMethod::truncated, "shorten"); });
  }

  try {
    set.clusters = cluster_answers(query, samples, judge, templates, seed);
  } catch (const Error& e) {
    for (const char* m : {"majority", "percentage", "verbalized", "or_concat"}) set.failures.emplace(m, e.what());
    return set;
  }
  const auto& report = *set.clusters;
  const json cluster_prov = {{"counted_sizes", report.counted_sizes}, {"single_cluster", report.single_cluster}};
  detail::try_variant(set, "majority", [&] {
    return detail::make_summary(query, SummaryMethod::majority, report.clusters.front().representative,
                                {{"template", "cluster"}, {"model", judge.model_name()}, {"clusters", cluster_prov}});
  });
  const auto list = render_cluster_list(report);
  auto stitch = [&](SummaryMethod method, const char* tpl) {
    const auto prompt = templates.render(tpl, {{"question", query.text}, {"answer_list", list}});
    auto text = utf8::trim(detail::non_empty_completion(judge, detail::greedy_request(prompt, seed)));
    return detail::make_summary(query, method, std::move(text),
                                {{"template", tpl}, {"model", judge.model_name()}, {"seed", seed},
                                 {"answer_list", list}, {"clusters", cluster_prov}});
  };
  detail::try_variant(set, "percentage", [&] { return stitch(SummaryMethod::percentage, "percentage"); });
  if (auto it = set.summaries.find("percentage"); it != set.summaries.end()) {
    const Summary pct = it->second;
    detail::try_variant(set, "verbalized", [&] {
      auto s = pct;
      s.method = SummaryMethod::verbalized;
      s.text = remove_percentages(pct.text);
      s.provenance = json{{"source", query.id + "/percentage"}}.dump();
      if (s.text.empty()) throw EmptyCompletionError("verbalized summary is empty");
      return s;
    });
  } else {
    set.failures.emplace("verbalized", "percentage summary unavailable");
  }
  detail::try_variant(set, "or_concat", [&] { return stitch(SummaryMethod::or_concat, "or_concat"); });
  return set;
}

// ---------------------------------------------------------------------------
// Certainty

enum class Certainty { certain, uncertain };
enum class CertaintyMode { summary, distribution };

inline std::string to_string(Certainty c) { return c == Certainty::certain ? "certain" : "uncertain"; }

// A lone A, B or C, optionally followed by '.', ')' or ':' and an explanation.
inline std::optional<char> parse_certainty_letter(const std::string& reply) {
  const auto s = utf8::trim(reply);
  if (s.empty() || (s[0] != 'A' && s[0] != 'B' && s[0] != 'C')) return std::nullopt;
  if (s.size() == 1) return s[0];
  if (s[1] == '.' || s[1] == ')' || s[1] == ':') return s[0];
  return std::nullopt;
}

struct CertaintyResult {
  Certainty label = Certainty::certain;
  char letter = 'A';
};

inline CertaintyResult classify_certainty(const Query& query, const std::string& summary_text,
                                          const std::vector<Answer>& answers, CertaintyMode mode,
                                          const LanguageModel& judge, const TemplateSet& templates) {
  std::string prompt;
  if (mode == CertaintyMode::summary) {
    prompt = templates.render("certainty_summary", {{"question", query.text}, {"summary", summary_text}});
  } else {
    prompt = templates.render("certainty_distribution", {{"n_answers", std::to_string(answers.size())},
                                                         {"question", query.text},
                                                         {"answers", render_answers(answers)}});
  }
  const char letter = ask_judge(judge, judge_request(prompt), parse_certainty_letter);
  return {letter == 'A' ? Certainty::certain : Certainty::uncertain, letter};
}

}  // namespace selfreflect
