#pragma once

// The SelfReflect metric: per-token judge distributions under the summary
// and the samples conditioning, tau-flattening, categorical W1, and the
// hierarchical mean token -> word -> answer -> question -> dataset.

#include <map>
#include <string>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/masking.hpp"
#include "selfreflect/parallel.hpp"
#include "selfreflect/stats.hpp"
#include "selfreflect/stopwords.hpp"
#include "selfreflect/templates.hpp"
#include "selfreflect/wasserstein.hpp"

namespace selfreflect {

// Everything a scorer needs besides the item itself. `cfg` must have passed
// validate_run_config.
struct ScoringContext {
  const LanguageModel& judge;
  const TemplateSet& templates;
  const StopwordList& stopwords;
  RunConfig cfg;
};

struct DistancePair {
  int answer_index = 0;
  int word_index = 0;
  int token_position = 0;
  TokenDistribution p_summary;  // flattened
  TokenDistribution p_samples;  // flattened
  double distance = 0.0;
};

// Distances for one (summary prompt, samples prompt) pair over a forced
// target sequence: at position t both prompts are extended by the true
// targets 0..t-1, flattened, and compared.
inline std::vector<DistancePair> score_forced_sequence(const std::string& summary_prompt,
                                                       const std::string& samples_prompt,
                                                       const std::vector<std::string>& targets,
                                                       const LanguageModel& judge, double tau,
                                                       int answer_index, int word_index) {
  std::vector<DistancePair> out;
  out.reserve(targets.size());
  std::vector<std::string> prefix;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    DistancePair dp;
    dp.answer_index = answer_index;
    dp.word_index = word_index;
    dp.token_position = static_cast<int>(t);
    dp.p_summary = flatten(judge.next_token_distribution({summary_prompt, prefix}), tau);
    dp.p_samples = flatten(judge.next_token_distribution({samples_prompt, prefix}), tau);
    dp.distance = wasserstein_categorical(dp.p_summary, dp.p_samples);
    out.push_back(std::move(dp));
    prefix.push_back(targets[t]);
  }
  return out;
}

inline std::vector<DistancePair> score_word(const PromptPair& pair, const LanguageModel& judge, double tau) {
  if (pair.task.target_tokens.empty()) throw Error("score_word: task has no target tokens");
  return score_forced_sequence(pair.summary_prompt, pair.samples_prompt, pair.task.target_tokens, judge,
                               tau, pair.task.answer_index, pair.task.word_index);
}

// Outcome of one scored unit (a masked word, or a whole answer for PMI).
struct WordResult {
  int answer_index = 0;
  int word_index = 0;
  std::string word;
  std::vector<double> token_distances;
  bool failed = false;
};

// Word = mean of its tokens; answer = mean of its words; question = mean of
// answers that have at least one scored word (or, pooled, mean of all
// words). Failed words are excluded and counted.
inline ScoreBreakdown aggregate_words(const std::vector<WordResult>& words, int n_answers,
                                      Aggregation aggregation) {
  ScoreBreakdown b;
  b.n_tasks = static_cast<int>(words.size());
  std::map<int, std::vector<double>> by_answer;
  std::vector<double> all_words;
  for (const auto& w : words) {
    if (w.failed || w.token_distances.empty()) {
      ++b.n_failed_tasks;
      continue;
    }
    for (std::size_t t = 0; t < w.token_distances.size(); ++t)
      b.per_token.push_back({w.answer_index, w.word_index, static_cast<int>(t), w.token_distances[t]});
    const double wm = mean(w.token_distances);
    b.per_word.push_back({w.answer_index, w.word_index, w.word, wm});
    by_answer[w.answer_index].push_back(wm);
    all_words.push_back(wm);
  }
  std::vector<double> answer_means;
  for (const auto& [a, ws] : by_answer) {
    b.per_answer.push_back({a, mean(ws)});
    answer_means.push_back(b.per_answer.back().distance);
  }
  std::map<int, bool> has_task;
  for (const auto& w : words) has_task[w.answer_index] = true;
  b.n_empty_answers = n_answers - static_cast<int>(has_task.size());
  if (answer_means.empty()) {
    if (words.empty()) throw EmptyTaskSetError("no held-out answer produced a task");
    throw BackendError("every task failed");
  }
  b.per_question = aggregation == Aggregation::pooled ? mean(all_words) : mean(answer_means);
  return b;
}

inline std::vector<MaskTask> build_all_tasks(const AnswerSet& answers, const StopwordList& stopwords,
                                             const LanguageModel& judge) {
  std::vector<MaskTask> tasks;
  for (std::size_t j = 0; j < answers.heldout_samples.size(); ++j) {
    auto t = build_mask_tasks(answers.heldout_samples[j], static_cast<int>(j), stopwords, judge);
    tasks.insert(tasks.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  return tasks;
}

inline void check_heldout(const AnswerSet& answers, const RunConfig& cfg) {
  if (static_cast<int>(answers.heldout_samples.size()) != cfg.m())
    throw Error("answer set for " + answers.query_id + " has " +
                std::to_string(answers.heldout_samples.size()) + " held-out samples, expected " +
                std::to_string(cfg.m()));
}

// Shared driver for the masked-word metrics (SelfReflect and sampling-free).
inline ScoreBreakdown score_masked(const Query& query, const Summary& summary, const AnswerSet& answers,
                                   const ScoringContext& ctx, SecondPrompt second) {
  check_heldout(answers, ctx.cfg);
  const auto tasks = build_all_tasks(answers, ctx.stopwords, ctx.judge);
  if (tasks.empty()) throw EmptyTaskSetError("every held-out answer of " + query.id + " is all stopwords");
  std::vector<WordResult> results(tasks.size());
  parallel_for(tasks.size(), ctx.cfg.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    auto& r = results[i];
    r.answer_index = task.answer_index;
    r.word_index = task.word_index;
    r.word = task.surface_word;
    try {
      const auto pair = render_prompt_pair(query, summary, answers, task, ctx.templates, second);
      for (const auto& dp : score_word(pair, ctx.judge, ctx.cfg.temperature()))
        r.token_distances.push_back(dp.distance);
    } catch (const BackendError&) {
      r.failed = true;
      r.token_distances.clear();
    }
  });
  return aggregate_words(results, static_cast<int>(answers.heldout_samples.size()), ctx.cfg.aggregation);
}

inline ScoreBreakdown score_summary(const Query& query, const Summary& summary, const AnswerSet& answers,
                                    const ScoringContext& ctx) {
  return score_masked(query, summary, answers, ctx, SecondPrompt::samples);
}

// ---------------------------------------------------------------------------
// Dataset level

struct MethodStats {
  std::string method;
  double mean = 0.0;
  Interval ci;
  int n = 0;
  int n_failed_items = 0;
  int n_failed_tasks = 0;
};

inline void to_json(json& j, const MethodStats& s) {
  j = json{{"method", s.method}, {"mean", s.mean}, {"ci95", s.ci}, {"n", s.n},
           {"n_failed_items", s.n_failed_items}, {"n_failed_tasks", s.n_failed_tasks}};
}

struct DatasetItem {
  Query query;
  AnswerSet answers;
  Summary summary;
};

struct DatasetReport {
  std::vector<MethodStats> methods;  // sorted by method label
  std::map<std::string, std::vector<double>> per_question;  // in item order
};

// Mean and bootstrap interval of per-question scores per summary label.
inline DatasetReport score_dataset(const std::vector<DatasetItem>& items, const ScoringContext& ctx) {
  std::map<std::string, MethodStats> stats;
  DatasetReport report;
  for (const auto& item : items) {
    const auto label = summary_label(item.summary);
    auto& s = stats[label];
    s.method = label;
    try {
      const auto b = score_summary(item.query, item.summary, item.answers, ctx);
      report.per_question[label].push_back(b.per_question);
      s.n_failed_tasks += b.n_failed_tasks;
    } catch (const EmptyTaskSetError&) {
      ++s.n_failed_items;
    } catch (const BackendError&) {
      ++s.n_failed_items;
    }
  }
  for (auto& [label, s] : stats) {
    const auto& v = report.per_question[label];
    s.n = static_cast<int>(v.size());
    if (!v.empty()) {
      s.mean = mean(v);
      s.ci = bootstrap_ci(v, ctx.cfg.resamples(), 0.95, ctx.cfg.seed);
    }
    report.methods.push_back(s);
  }
  return report;
}

}  // namespace selfreflect
