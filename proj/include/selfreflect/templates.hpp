#pragma once

// Named prompt templates with {slot} placeholders. The built-in "default"
// set can be overridden file-by-file from a directory of <name>.txt files;
// any change shows up in the template-set hash stamped into the run config.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "selfreflect/errors.hpp"
#include "selfreflect/hashing.hpp"

namespace selfreflect {

namespace templates {

// Masked-word task. Both renderings share everything except the
// conditioning block under "Background information:".
inline constexpr std::string_view kMaskSummary =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
{summary}

Here is one more answer to the question, with one word masked out as {placeholder}:
{masked_answer}

Reply with only the word that was masked out.
Masked word:
)";

inline constexpr std::string_view kMaskSamples =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
We received many answers to this question. Here they are:
{answers}

Here is one more answer to the question, with one word masked out as {placeholder}:
{masked_answer}

Reply with only the word that was masked out.
Masked word:
)";

inline constexpr std::string_view kMaskQuestionOnly =
    R"(You are given a question.

Question: {question}

Here is an answer to the question, with one word masked out as {placeholder}:
{masked_answer}

Reply with only the word that was masked out.
Masked word:
)";

inline constexpr std::string_view kPmiSummary =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
{summary}

Here is one more answer to the question:
)";

inline constexpr std::string_view kPmiSamples =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
We received many answers to this question. Here they are:
{answers}

Here is one more answer to the question:
)";

inline constexpr std::string_view kPTrueSummary =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
{summary}

Here is one more answer to the question, with one word masked out as {placeholder}:
{masked_answer}

Candidate word: {candidate}
Classify whether this word fits as the masked-out word. Reply with True or False.
Reply:
)";

inline constexpr std::string_view kPTrueSamples =
    R"(You are given a question and background information that describes a distribution of possible answers to it.

Question: {question}

Background information:
We received many answers to this question. Here they are:
{answers}

Here is one more answer to the question, with one word masked out as {placeholder}:
{masked_answer}

Candidate word: {candidate}
Classify whether this word fits as the masked-out word. Reply with True or False.
Reply:
)";

inline constexpr std::string_view kGreedy = "{question}";

inline constexpr std::string_view kBasic =
    R"(Please respond to the following question '{question}'.

Your goal is to summarize all possible answers to this question:
- If there are multiple possible answers, the summarized answer should mention the main possible answers. However, you do not have to list possibilities that are too unlikely.
- If some possibilities are more likely than others, delineate which possibilities are more more likely by using words like "most likely" and "could also be".
- The format of the summarized answer should be the same as a normal answer.
- If there is only clear answer to the question, just provide that answer, without hedging across possibilities.

Please provide the summarized answer.)";

inline constexpr std::string_view kCot =
    R"(Please respond to the following question '{question}'.

Your goal is to first reason about all possible answers to this question and then summarize them into a final answer:
- Reflect on whether there are multiple possible answers to this question.
- If there are multiple possible answers, the summarized answer should mention the main possible answers. However, you do not have to list possibilities that are too unlikely.
- If some possibilities are more likely than others, delineate which possibilities are more more likely by using words like "most likely" and "could also be".
- The format of the summarized answer should be the same as a typical answer and be stand-alone.
- If there is only clear answer to the question, just provide that answer, without hedging across possibilities.

The output should be in the following format:
Reasoning: [REASONING ABOUT WHICH POSSIBLITIES THERE ARE AND HOW LIKELY THEY ARE]
Summary: [SUMMARIZED ANSWER]

Please provide the reasoning and then the summarized answer.)";

inline constexpr std::string_view kGoodSummary =
    R"(Below, you are given {n_answers} individual answers to the question '{question}'.

Your goal is to summarize the {n_answers} answers into one answer.
- The summarized answer should mention the main possibilities mentioned by the {n_answers} answers. If a possibility is mentioned only once, it can be skipped so that the summary remains concise.
- If some possibilities are mentioned much more often than others, delineate which possibilities are more often found in the others by using words like "most likely" and "could also be".
- The format of the summarized answer should be the same as each individual answer. Provide only the answer, as if it were part of the {n_answers} answers, without statements like "The answers include...".
- Similarly, the summarized answer should use the same wording as the original answers. If the original answer always uses "is situated", then use "is situated" and not "is located".
- The summarized answer should reflect what the {n_answers} answers deem possible. They can contain factually wrong options. Do not correct those, just report the possibilities as they are given in the answers.

Here are the {n_answers} answers:

{answers}

Please provide the summarized answer.)";

inline constexpr std::string_view kShorten =
    R"(Below, you are given an answer to the question '{question}'.

Your goal is to shorten the answer.
- If the answer mentions multiple possibilities, only return the main possibility.
- If the answer includes a main answer and details, remove the details.
- The shortened answer should have the same format as the original answer. If the original answer uses full sentences, the shortened answer should also use a full sentence.
- The shortened answer should use the same wording as the original answers. If the original answer always uses "is situated", then use "is situated" and not "is located".
- The answer can contain factually wrong options. Do not correct those, just shorten what the answer says, even if it is factually wrong.

Original answer: {good_summary}

Please provide the shortened answer.)";

inline constexpr std::string_view kChange =
    R"(Below, you are given a response to the question '{question}'.

Your goal is to change the answer.
- The answer should generally stay close to the original answer, with only some key factual terms changed.
- The answer might already be factually wrong. But the goal is still to change the key facts, so that the changed answer is different from the original one.
- The changed answer should have the same format as the original answer. The structure should remain the same, only keywords should be exchanged.
- The changed answer should also use the same wording as the original answers for any non-factual words. If the original answer always uses "is situated", then use "is situated" and not "is located".

Original answer: {good_summary}

Please provide the changed answer.)";

inline constexpr std::string_view kCluster =
    R"(Below, you are given {n_answers} individual answers to the question '{question}'. These {n_answers} answers can be seen as samples from an answer distribution. Your goal is to cluster the distribution in two steps:

First step: Find the clusters and their representatives.
- Each cluster contains a set of answers that are essentially the same. This means they may vary in the level of detail, but their primary answer should be the same.
- Different clusters should be mutually exclusive answers.
- There are at least two clusters.
- The answer can contain factually wrong options. Do not correct them, just cluster the answers as they are.
- Output a json file with each entry giving the "cluster_id" (cluster_1, cluster_2, ...), and a "representative_answer", copy-pasted from the answers below.

Second step: Match the answers to their clusters.
- Match each of the {n_answers} individual answers to one cluster representative.
- Output a json file with each entry giving the "cluster_id" (cluster_1, cluster_2, ...) and the "cluster_members", a list of [x_1, x_26, ...].

Here are the {n_answers} answers:

{answers}

Please output the two json files, one after another. Each json file should start with ```json)";

inline constexpr std::string_view kPercentage =
    R"(Below, you are given list of answers with their probabilities to the question '{question}'.

Your goal is to stitch these answers together into one sentence.
- The sentence should have the structure 'It is most likely that <Answer A> (<probability of Answer A>% sure), but it could also be <Answer B> (<probability of Answer B>% sure) or <Answer C> (<probability of Answer C>% sure) or ...'
- Stick to the original wording of the answers as much as possible, but you can add small words so that the sentence becomes a grammatically coherent sentence.
- The answer can contain factually wrong options. Do not correct those, just stitch together the answer options, even if it is factually wrong.

List of answers:

{answer_list}

Please provide the coherent sentence.)";

inline constexpr std::string_view kOrConcat =
    R"(Below, you are given list of answers with their probabilities to the question '{question}'.

Your goal is to stitch these answers together into one sentence.
- The sentence should have the structure 'Either <Answer A> or <Answer B> or <Answer C> or ...'
- The sentence should be grammatically coherent.
- Stick to the original wording of the answers as much as possible.
- The answer can contain factually wrong options. Do not correct those, just stitch together the answer options, even if it is factually wrong.

List of answers:

{answer_list}

Please provide the coherent sentence.)";

inline constexpr std::string_view kCertaintySummary =
    R"(Below, you are given an answer to the question '{question}'.

Your goal is to classify which type of answer this is:
A. The answer is certain, it only mentions one answer option.
B. The answer is not fully certain. It might mention one or two further answer options but judges them as less likely.
C. The answer is very uncertain. It mentions many mutually exclusive answer options, without a clear single most likely answer.

Ignore differences in form and style. You are only supposed to judge the answer semantically.

Here is the answer:
{summary}

Please respond with the category of what type of this answer this is. Respond only with A, B, or C.)";

inline constexpr std::string_view kCertaintyDistribution =
    R"(Below, you are given {n_answers} individual answers to the question '{question}'. These {n_answers} answers can be seen as samples from an answer distribution.

Your goal is to classify which type of distribution this is:
A. The answers all do not contradict each other, up to one or two that differ from the majority answer.
B. The answers give multiple mutually exclusive answer options, but there is one answer option that is given in the majority of cases.
C. The answers give multiple mutually exclusive answer options, and they are almost all different, without a clear majority answer.

The answers will have some natural variability. Ignore differences in form and style. You are only supposed to judge if answer options are semantically different.

Here are the {n_answers} answers:

{answers}

Please respond with the category of what type of this distribution this is. Respond only with A, B, or C.)";

inline constexpr std::string_view kSummFluency =
    R"(Fluency measures the quality of individual sentences, and whether they are well-written and grammatically correct. Rate the summary of a given text on a scale of 0 to 1 on fluency.

Here are some examples:
{few_shot}

Now here is the summary whose fluency you are supposed to rate:

Summary: {summary}

Fluency:)";

inline constexpr std::string_view kSummCoherence =
    R"(Rate the following summaries on a scale from 0 to 1 on coherence, with a higher value corresponding to higher coherence. Coherence is a collective quality of all sentences. To score highly on it, the summary should be well-structured and well-organized. It should not just be a heap of related information, but should build from sentence to sentence to form a coherent body of information about the topic.

Here are some examples:
{few_shot}

Now here is the summary whose coherence you are supposed to rate:

Summary: {summary}

Coherence:)";

inline constexpr std::string_view kSummConsistency =
    R"(Consistency measures whether the details in the summary reproduce the facts present in the text accurately. Rate the summary of given text on a scale from 0 to 1 on consistency.

Here are some examples:
{few_shot}

Now here is the text and summary whose consistency you are supposed to rate:

Text: We received many answers to our question '{question}'. Here they are:

{answers}

Summary: {summary}

Consistency:)";

inline constexpr std::string_view kSummRelevance =
    R"(Relevance is the quality of a summary to capture important information from a reference text. Rate the summary on a scale from 0 to 1 on relevance.

Here are some examples:
{few_shot}

Now here is the text and summary whose relevance you are supposed to rate:

Text: We received many answers to our question '{question}'. Here they are:

{answers}

Summary: {summary}

Relevance:)";

// Few-shot examples for the four summarization axes. Authored for this
// project; the originals are not published.
inline constexpr std::string_view kFewShotFluency =
    R"(Summary: The Eiffel Tower is located in Paris, France.
Fluency: 1.0

Summary: Most likely the river is the Nile, but it could also be the Amazon.
Fluency: 0.9

Summary: capital city the is Canberra Australia of.
Fluency: 0.1

Summary: It was most likely built in 1889 but it could also been built 1887 when construction started.
Fluency: 0.6)";

inline constexpr std::string_view kFewShotCoherence =
    R"(Summary: The novel was most likely written by Mary Shelley in 1818. It could also have been revised by her in 1831.
Coherence: 1.0

Summary: Mount Everest is the highest mountain. It is 8,849 metres tall, and it lies on the border of Nepal and China.
Coherence: 0.9

Summary: Paris. Bananas are yellow. It could be 1920. The answer is blue.
Coherence: 0.0

Summary: The composer was Mozart. Also Vienna. It could also be Haydn who lived earlier, maybe.
Coherence: 0.4)";

inline constexpr std::string_view kFewShotConsistency =
    R"(Text: We received many answers to our question 'What is the capital of Australia?'. Here they are:
x_1 = 'The capital of Australia is Canberra.'
x_2 = 'Canberra is the capital of Australia.'
Summary: The capital of Australia is Canberra.
Consistency: 1.0

Text: We received many answers to our question 'Who painted the Mona Lisa?'. Here they are:
x_1 = 'Leonardo da Vinci painted the Mona Lisa.'
x_2 = 'The Mona Lisa was painted by Leonardo da Vinci.'
Summary: The Mona Lisa was painted by Michelangelo.
Consistency: 0.0

Text: We received many answers to our question 'When did the Berlin Wall fall?'. Here they are:
x_1 = 'The Berlin Wall fell in 1989.'
x_2 = 'It fell on 9 November 1989.'
Summary: The Berlin Wall fell in 1989.
Consistency: 1.0

Text: We received many answers to our question 'What is the largest planet?'. Here they are:
x_1 = 'Jupiter is the largest planet.'
x_2 = 'Saturn is the largest planet.'
Summary: Jupiter is the largest planet, and it has no moons.
Consistency: 0.5)";

inline constexpr std::string_view kFewShotRelevance =
    R"(Text: We received many answers to our question 'What is the boiling point of water at sea level?'. Here they are:
x_1 = 'Water boils at 100 degrees Celsius at sea level.'
x_2 = 'At sea level, water boils at 100 °C.'
Summary: Water boils at 100 degrees Celsius at sea level.
Relevance: 1.0

Text: We received many answers to our question 'Who wrote Hamlet?'. Here they are:
x_1 = 'Hamlet was written by William Shakespeare.'
x_2 = 'William Shakespeare wrote Hamlet around 1600.'
Summary: Shakespeare was born in Stratford-upon-Avon.
Relevance: 0.2

Text: We received many answers to our question 'Which element has the symbol O?'. Here they are:
x_1 = 'The symbol O stands for oxygen.'
x_2 = 'Oxygen has the symbol O.'
Summary: It is oxygen.
Relevance: 0.9

Text: We received many answers to our question 'What is the tallest animal?'. Here they are:
x_1 = 'The giraffe is the tallest animal.'
x_2 = 'Giraffes are the tallest animals on Earth.'
Summary: Elephants are large.
Relevance: 0.0)";

inline constexpr std::string_view kLmJudge =
    R"(Your task is to analyze whether a summarized answer correctly contains all the possibilities that {n_answers} individual answers to a question mention.

Note that some individual answers occur more often than other individual answers. You should output a score from 0 to 10, indicating whether the summarized answer mentions all possibilities and whether it correctly outlines which are the most often appearing individual answers and which appear less often. A higher score is means the summarized answer matches the distribution of individual answers better.

Also note that some individual answers may be factually wrong. Do not correct those, just report how good the summarized answer matches the individual answers.

You should first provide your reasoning for how well the summarized answer matches the distribution over individual answers, and then assign a score based on this reasoning. The output should be in the following format:

Reason: [REASON]

Score: [SCORE]

Here is an example:

Question: Who received the first Nobel Prize in physics?

Individual answers:

x_1 = 'The first Nobel Prize in Physics was awarded to Wilhelm Conrad Röntgen for his discovery of X-rays.'
x_2 = 'Wilhelm Conrad Röntgen received the first Nobel Prize in Physics in 1901.'
x_3 = 'Hendrik Antoon Lorentz and Pieter Zeeman received the first Nobel Prize in Physics.'
x_4 = 'Wilhelm Conrad Röntgen, for the discovery of X-rays.'

Summarized answer: It is most likely that Wilhelm Conrad Röntgen received the first Nobel Prize in Physics.

Then your output can be:

Reason: The summarized answer mentions the most likely possibility, and it also correctly mentions that this is the most likely one. For other possibilities, it mentions Wilhelm Conrad Röntgen, but does not mention that he got the award for his discovery of x-rays, which the individual answers do mention. It also does not mention the possibility of Hendrik Antoon Lorentz and Pieter Zeeman, which the individual answers mention.

Score: 8

Now consider the following case:

{question}

Individual answers:

{answers}

Summarized answer: '{summary}'

Please provide the reason and the score of how good the summarized answer matches the distribution of individual answers.)";

inline constexpr std::string_view kOtSplit =
    R"(Question: {question}

Here is some background information. This background information defines a distribution of possible answers you can later sample from:

{summary}

Now, split this distribution up into its mutually fundamental statements and the explicitly or implicitly connected probabilities.

Split it up such that each statement is mutually exclusive and the probabilities sum to 1.

Include an 'I don't know' statement with the remaining percentage if the background information explicitly mentions not being certain.

Return a json file with a list of dictionaries, where in every dictionary the first key is called 'prob' and includes the numerical probability and the second key is 'statement' and includes a string of the fundamental statement.)";

// Yes/no entailment probe used in place of a dedicated NLI model.
inline constexpr std::string_view kEntailment =
    R"(Premise: {premise}
Hypothesis: {hypothesis}

Does the premise entail the hypothesis? Reply with Yes or No.
Reply:
)";

}  // namespace templates

// A resolved set of named templates plus the mask placeholder.
class TemplateSet {
 public:
  static TemplateSet builtin() {
    using namespace templates;
    TemplateSet t;
    t.id_ = "default";
    t.texts_ = {
        {"mask_summary", std::string(kMaskSummary)},
        {"mask_samples", std::string(kMaskSamples)},
        {"mask_question_only", std::string(kMaskQuestionOnly)},
        {"pmi_summary", std::string(kPmiSummary)},
        {"pmi_samples", std::string(kPmiSamples)},
        {"ptrue_summary", std::string(kPTrueSummary)},
        {"ptrue_samples", std::string(kPTrueSamples)},
        {"greedy", std::string(kGreedy)},
        {"basic", std::string(kBasic)},
        {"cot", std::string(kCot)},
        {"good_summary", std::string(kGoodSummary)},
        {"shorten", std::string(kShorten)},
        {"change", std::string(kChange)},
        {"cluster", std::string(kCluster)},
        {"percentage", std::string(kPercentage)},
        {"or_concat", std::string(kOrConcat)},
        {"certainty_summary", std::string(kCertaintySummary)},
        {"certainty_distribution", std::string(kCertaintyDistribution)},
        {"summ_fluency", std::string(kSummFluency)},
        {"summ_coherence", std::string(kSummCoherence)},
        {"summ_consistency", std::string(kSummConsistency)},
        {"summ_relevance", std::string(kSummRelevance)},
        {"fewshot_fluency", std::string(kFewShotFluency)},
        {"fewshot_coherence", std::string(kFewShotCoherence)},
        {"fewshot_consistency", std::string(kFewShotConsistency)},
        {"fewshot_relevance", std::string(kFewShotRelevance)},
        {"lm_judge", std::string(kLmJudge)},
        {"ot_split", std::string(kOtSplit)},
        {"entailment", std::string(kEntailment)},
    };
    return t;
  }

  // "default" is the built-in set; anything else names a directory whose
  // <name>.txt files override built-in entries (placeholder.txt sets the
  // mask placeholder).
  static TemplateSet load(const std::string& id_or_dir) {
    auto t = builtin();
    if (id_or_dir.empty() || id_or_dir == "default") return t;
    const std::filesystem::path dir(id_or_dir);
    if (!std::filesystem::is_directory(dir)) throw TemplateError("unknown template set: " + id_or_dir);
    t.id_ = id_or_dir;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".txt") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      const auto name = entry.path().stem().string();
      if (name == "placeholder") {
        auto p = ss.str();
        while (!p.empty() && (p.back() == '\n' || p.back() == '\r')) p.pop_back();
        if (p.empty()) throw TemplateError("empty placeholder");
        t.placeholder_ = p;
      } else {
        t.texts_[name] = ss.str();
      }
    }
    return t;
  }

  const std::string& get(const std::string& name) const {
    auto it = texts_.find(name);
    if (it == texts_.end()) throw TemplateError("unknown template: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return texts_.count(name) > 0; }

  const std::string& id() const { return id_; }
  const std::string& placeholder() const { return placeholder_; }

  std::string hash() const {
    std::string buf = "placeholder\x1f" + placeholder_ + "\x1e";
    for (const auto& [k, v] : texts_) buf += k + "\x1f" + v + "\x1e";
    return sha256_hex(buf);
  }

  // Single pass: substituted values are never rescanned. Unknown slots throw.
  std::string render(const std::string& name, const std::map<std::string, std::string>& slots) const {
    const auto& tpl = get(name);
    std::string out;
    out.reserve(tpl.size() + 256);
    for (std::size_t i = 0; i < tpl.size();) {
      if (tpl[i] == '{') {
        std::size_t j = i + 1;
        while (j < tpl.size() && (std::isalnum(static_cast<unsigned char>(tpl[j])) || tpl[j] == '_')) ++j;
        if (j < tpl.size() && tpl[j] == '}' && j > i + 1) {
          const auto slot = tpl.substr(i + 1, j - i - 1);
          auto it = slots.find(slot);
          if (it == slots.end()) throw TemplateError("template '" + name + "' needs slot {" + slot + "}");
          out += it->second;
          i = j + 1;
          continue;
        }
      }
      out += tpl[i++];
    }
    return out;
  }

 private:
  std::string id_;
  std::string placeholder_ = "____";
  std::map<std::string, std::string> texts_;
};

// "x_1 = '…'" lines, one per answer, in order.
template <typename Range, typename Proj>
std::string render_answer_block(const Range& answers, Proj text_of) {
  std::string out;
  std::size_t k = 0;
  for (const auto& a : answers) {
    if (k) out += '\n';
    out += "x_" + std::to_string(++k) + " = '" + text_of(a) + "'";
  }
  return out;
}

}  // namespace selfreflect
