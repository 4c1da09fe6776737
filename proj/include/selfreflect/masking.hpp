#pragma once

// Masked-word (Cloze) tasks over held-out answers and the two conditioned
// prompt renderings that the judge scores.

#include <string>
#include <string_view>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/gateway.hpp"
#include "selfreflect/stopwords.hpp"
#include "selfreflect/templates.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

struct WordSpan {
  std::string surface;
  std::size_t begin = 0;  // byte offsets into the answer text
  std::size_t end = 0;
  bool operator==(const WordSpan&) const = default;
};

// A word is a maximal run of non-whitespace code points (Unicode White_Space).
inline std::vector<WordSpan> segment_words(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  std::optional<std::size_t> start;
  while (i < text.size()) {
    std::size_t len = 1;
    const char32_t c = utf8::decode(text, i, len);
    if (utf8::is_space(c)) {
      if (start) {
        out.push_back({std::string(text.substr(*start, i - *start)), *start, i});
        start.reset();
      }
    } else if (!start) {
      start = i;
    }
    i += len;
  }
  if (start) out.push_back({std::string(text.substr(*start)), *start, text.size()});
  return out;
}

// One task per non-stopword word. The masked span is the full surface word
// (punctuation included); target_tokens is the judge's tokenization of it.
inline std::vector<MaskTask> build_mask_tasks(const Answer& answer, int answer_index,
                                              const StopwordList& stopwords,
                                              const LanguageModel& judge) {
  std::vector<MaskTask> tasks;
  const auto words = segment_words(answer.text);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& span = words[w];
    if (stopwords.is_stopword(span.surface)) continue;
    MaskTask t;
    t.answer_index = answer_index;
    t.word_index = static_cast<int>(w);
    t.surface_word = span.surface;
    t.left_context = answer.text.substr(0, span.begin);
    t.right_context = answer.text.substr(span.end);
    t.target_tokens = judge.tokenize(span.surface);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline std::string masked_answer(const MaskTask& task, const std::string& placeholder) {
  return task.left_context + placeholder + task.right_context;
}

inline std::string render_answers(const std::vector<Answer>& answers) {
  return render_answer_block(answers, [](const Answer& a) { return a.text; });
}

struct PromptPair {
  std::string summary_prompt;
  std::string samples_prompt;
  MaskTask task;
};

// Which second prompt to pair with the summary-conditioned one.
enum class SecondPrompt { samples, question_only };

inline PromptPair render_prompt_pair(const Query& query, const Summary& summary,
                                     const AnswerSet& conditioning, const MaskTask& task,
                                     const TemplateSet& templates,
                                     SecondPrompt second = SecondPrompt::samples) {
  const std::map<std::string, std::string> slots{
      {"question", query.text},
      {"summary", summary.text},
      {"answers", render_answers(conditioning.conditioning_samples)},
      {"masked_answer", masked_answer(task, templates.placeholder())},
      {"placeholder", templates.placeholder()},
  };
  PromptPair pair;
  pair.summary_prompt = templates.render("mask_summary", slots);
  pair.samples_prompt =
      templates.render(second == SecondPrompt::samples ? "mask_samples" : "mask_question_only", slots);
  pair.task = task;
  return pair;
}

}  // namespace selfreflect
