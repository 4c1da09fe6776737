#pragma once

// Ablations of the masked-word metric: a question-only second prompt, whole
// answer likelihoods without masking, and a discriminative True/False probe.

#include <string>
#include <vector>

#include "selfreflect/metric.hpp"

namespace selfreflect {

inline ScoreBreakdown score_sampling_free(const Query& query, const Summary& summary, const AnswerSet& answers,
                                          const ScoringContext& ctx) {
  return score_masked(query, summary, answers, ctx, SecondPrompt::question_only);
}

// Each held-out answer is one unit: its judge tokens are forced one after
// another under both conditionings.
inline ScoreBreakdown score_pmi(const Query& query, const Summary& summary, const AnswerSet& answers,
                                const ScoringContext& ctx) {
  check_heldout(answers, ctx.cfg);
  const std::map<std::string, std::string> slots{
      {"question", query.text},
      {"summary", summary.text},
      {"answers", render_answers(answers.conditioning_samples)},
  };
  const auto summary_prompt = ctx.templates.render("pmi_summary", slots);
  const auto samples_prompt = ctx.templates.render("pmi_samples", slots);

  std::vector<WordResult> results;
  std::vector<std::vector<std::string>> targets;
  for (std::size_t j = 0; j < answers.heldout_samples.size(); ++j) {
    auto tokens = ctx.judge.tokenize(answers.heldout_samples[j].text);
    if (tokens.empty()) continue;
    WordResult r;
    r.answer_index = static_cast<int>(j);
    r.word = answers.heldout_samples[j].text;
    results.push_back(std::move(r));
    targets.push_back(std::move(tokens));
  }
  if (results.empty()) throw EmptyTaskSetError("no held-out answer of " + query.id + " has tokens");
  parallel_for(results.size(), ctx.cfg.jobs, [&](std::size_t i) {
    auto& r = results[i];
    try {
      for (const auto& dp : score_forced_sequence(summary_prompt, samples_prompt, targets[i], ctx.judge,
                                                  ctx.cfg.temperature(), r.answer_index, 0))
        r.token_distances.push_back(dp.distance);
    } catch (const BackendError&) {
      r.failed = true;
      r.token_distances.clear();
    }
  });
  return aggregate_words(results, static_cast<int>(answers.heldout_samples.size()), ctx.cfg.aggregation);
}

// ---------------------------------------------------------------------------
// P(True)

struct CandidateTriple {
  std::string true_word;
  std::string word_from_summary_cond;
  std::string word_from_samples_cond;

  std::vector<std::string> words() const { return {true_word, word_from_summary_cond, word_from_samples_cond}; }
};

inline constexpr std::int64_t kCandidateSeedStride = 7919;

// Seed for one candidate draw; `which` is 0 for the summary prompt, 1 for the samples prompt.
inline std::int64_t candidate_seed(std::int64_t base, int answer_index, int word_index, int which) {
  const std::int64_t slot = (static_cast<std::int64_t>(answer_index) << 20) + word_index;
  return base + kCandidateSeedStride * (2 * slot + which);
}

// First word of a temperature-1 completion of the masked-word prompt.
inline std::string sample_candidate(const LanguageModel& judge, const std::string& prompt, std::int64_t seed) {
  GenerateRequest req;
  req.prompt = prompt;
  req.params = {1.0, 1.0, 16};
  req.seed = seed;
  req.stop = {"\n"};
  req.allow_truncation = true;
  const auto words = segment_words(judge.generate(req));
  if (words.empty()) throw BackendError("judge produced no candidate word");
  return words.front().surface;
}

inline CandidateTriple build_candidates(const MaskTask& task, const PromptPair& prompts,
                                        const LanguageModel& judge, std::int64_t seed) {
  return {task.surface_word,
          sample_candidate(judge, prompts.summary_prompt, candidate_seed(seed, task.answer_index, task.word_index, 0)),
          sample_candidate(judge, prompts.samples_prompt, candidate_seed(seed, task.answer_index, task.word_index, 1))};
}

namespace detail {
inline std::string stripped_lower(std::string_view token) {
  return utf8::lower(utf8::trim(token));
}
}  // namespace detail

// Collapses a next-token distribution onto {True, False, other}; token
// variants match after trimming whitespace and lowercasing.
inline TokenDistribution project_true_false(const TokenDistribution& d) {
  double t = 0.0, f = 0.0, other = d.other_mass();
  for (const auto& [k, p] : d.entries()) {
    const auto s = detail::stripped_lower(k);
    if (s == "true") t += p;
    else if (s == "false") f += p;
    else other += p;
  }
  return TokenDistribution::from_probs({{"True", t}, {"False", f}}, other);
}

inline ScoreBreakdown score_ptrue(const Query& query, const Summary& summary, const AnswerSet& answers,
                                  const ScoringContext& ctx) {
  check_heldout(answers, ctx.cfg);
  const auto tasks = build_all_tasks(answers, ctx.stopwords, ctx.judge);
  if (tasks.empty()) throw EmptyTaskSetError("every held-out answer of " + query.id + " is all stopwords");
  const auto conditioning = render_answers(answers.conditioning_samples);
  std::vector<WordResult> results(tasks.size());
  parallel_for(tasks.size(), ctx.cfg.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    auto& r = results[i];
    r.answer_index = task.answer_index;
    r.word_index = task.word_index;
    r.word = task.surface_word;
    try {
      const auto pair = render_prompt_pair(query, summary, answers, task, ctx.templates);
      const auto triple = build_candidates(task, pair, ctx.judge, ctx.cfg.seed);
      std::map<std::string, std::string> slots{
          {"question", query.text},
          {"summary", summary.text},
          {"answers", conditioning},
          {"masked_answer", masked_answer(task, ctx.templates.placeholder())},
          {"placeholder", ctx.templates.placeholder()},
      };
      // One entry per candidate; the word score is their mean.
      for (const auto& candidate : triple.words()) {
        slots["candidate"] = candidate;
        auto p = ctx.judge.next_token_distribution({ctx.templates.render("ptrue_summary", slots), {}});
        auto q = ctx.judge.next_token_distribution({ctx.templates.render("ptrue_samples", slots), {}});
        if (ctx.cfg.ptrue_projection) {
          p = project_true_false(p);
          q = project_true_false(q);
        }
        r.token_distances.push_back(
            wasserstein_categorical(flatten(p, ctx.cfg.temperature()), flatten(q, ctx.cfg.temperature())));
      }
    } catch (const BackendError&) {
      r.failed = true;
      r.token_distances.clear();
    }
  });
  return aggregate_words(results, static_cast<int>(answers.heldout_samples.size()), ctx.cfg.aggregation);
}

}  // namespace selfreflect
