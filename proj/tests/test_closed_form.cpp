#include <gtest/gtest.h>

#include "selfreflect/closed_form.hpp"
#include "selfreflect/metric.hpp"
#include "selfreflect/oracle_judge.hpp"
#include "selfreflect/stopwords.hpp"
#include "support/synthetic.hpp"

using namespace selfreflect;

namespace {

std::vector<Answer> answers(const std::vector<std::string>& texts) {
  std::vector<Answer> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({texts[i], static_cast<std::int64_t>(i)});
  return out;
}

const std::vector<std::string> kLetters = choice_letters(4);

}  // namespace

// ---------------------------------------------------------------------------
// Literal oracle judge

TEST(OracleJudge, ParsesSummaryPercentages) {
  const auto a = oracle_detail::parse_summary(
      "It is most likely that Paris (60% sure), but it could also be Lyon (30% sure) or the city of Nice (10% sure).");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].text, "Paris");
  EXPECT_DOUBLE_EQ(a[0].weight, 0.6);
  EXPECT_EQ(a[1].text, "Lyon");
  EXPECT_EQ(a[2].text, "the city of Nice");
  EXPECT_DOUBLE_EQ(a[2].weight, 0.1);
}

TEST(OracleJudge, ParsesSamplesBlock) {
  const auto a = oracle_detail::parse_samples(render_answers(answers({"Paris", "Lyon", "Paris"})));
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[1].text, "Lyon");
}

TEST(OracleJudge, MaskFillersFollowTheConditioning) {
  const LiteralOracleJudge judge;
  const auto templates = TemplateSet::builtin();
  const auto stopwords = StopwordList::english();
  const Query q{"q", "Where to go?", std::nullopt, std::nullopt};
  const Summary s{"q", SummaryMethod::external,
                  "It is most likely that Paris (75% sure), but it could also be Lyon (25% sure).", "", ""};
  AnswerSet set;
  set.query_id = "q";
  set.conditioning_samples = answers({"Paris", "Lyon", "Lyon", "Lyon"});
  set.heldout_samples = answers({"Paris"});
  const auto tasks = build_all_tasks(set, stopwords, judge);
  ASSERT_EQ(tasks.size(), 1u);
  const auto pair = render_prompt_pair(q, s, set, tasks[0], templates);
  const auto p = judge.next_token_distribution({pair.summary_prompt, {}});
  const auto r = judge.next_token_distribution({pair.samples_prompt, {}});
  EXPECT_EQ(p, TokenDistribution::from_probs({{"Lyon", 0.25}, {"Paris", 0.75}}));
  EXPECT_EQ(r, TokenDistribution::from_probs({{"Lyon", 0.75}, {"Paris", 0.25}}));
  EXPECT_EQ(judge.next_token_distribution({pair.summary_prompt, {"Paris"}}), TokenDistribution::one_hot("<eos>"));
}

TEST(OracleJudge, ContextPinsDownMultiWordAnswers) {
  // "Mont ____" only fits "Mont Blanc", whatever the weights.
  const LiteralOracleJudge judge;
  const auto templates = TemplateSet::builtin();
  const auto stopwords = StopwordList::english();
  const Query q{"q", "Where to go?", std::nullopt, std::nullopt};
  const Summary s{"q", SummaryMethod::external,
                  "It is most likely that Mont Blanc (90% sure), but it could also be Paris (10% sure).", "", ""};
  AnswerSet set;
  set.query_id = "q";
  set.conditioning_samples = answers({"Paris", "Paris", "Mont Blanc"});
  set.heldout_samples = answers({"Mont Blanc"});
  const auto tasks = build_all_tasks(set, stopwords, judge);
  ASSERT_EQ(tasks.size(), 2u);
  const auto pair = render_prompt_pair(q, s, set, tasks[1], templates);
  EXPECT_EQ(judge.next_token_distribution({pair.summary_prompt, {}}), TokenDistribution::one_hot("Blanc"));
  EXPECT_EQ(judge.next_token_distribution({pair.samples_prompt, {}}), TokenDistribution::one_hot("Blanc"));
}

TEST(OracleJudge, ExactSummaryScoresZeroAndPerturbedScoresMore) {
  const LiteralOracleJudge judge;
  const auto templates = TemplateSet::builtin();
  const auto stopwords = StopwordList::english();
  RunConfig cfg;
  cfg.n_conditioning = 50;
  cfg.m_heldout = 20;
  const ScoringContext ctx{judge, templates, stopwords, validate_run_config(cfg)};
  for (int seed = 0; seed < 5; ++seed) {
    const auto c = synth::literal_case(seed, 50, 20, 0.1);
    const double a = score_summary(c.query, c.exact, c.answers, ctx).per_question;
    const double b = score_summary(c.query, c.perturbed, c.answers, ctx).per_question;
    EXPECT_NEAR(a, 0.0, 1e-12);
    EXPECT_GT(b, a);
  }
}

TEST(OracleJudge, RejectsUnknownPrompts) {
  const LiteralOracleJudge judge;
  EXPECT_THROW(judge.next_token_distribution({"hello", {}}), BackendError);
  GenerateRequest req;
  req.prompt = "Write a poem.";
  EXPECT_THROW(judge.generate(req), BackendError);
}

// ---------------------------------------------------------------------------
// Closed-form summaries

TEST(ClosedForm, ChoiceLetterExtraction) {
  EXPECT_EQ(extract_choice_letter("C", kLetters), "C");
  EXPECT_EQ(extract_choice_letter("The answer is (B).", kLetters), "B");
  EXPECT_EQ(extract_choice_letter("B, definitely B", kLetters), "B");
  EXPECT_EQ(extract_choice_letter("A or C", kLetters), std::nullopt);
  EXPECT_EQ(extract_choice_letter("Ambiguous", kLetters), std::nullopt);
  EXPECT_EQ(extract_choice_letter("E", kLetters), std::nullopt);
}

TEST(ClosedForm, Frequencies) {
  const auto f = choice_frequencies(answers({"A", "A", "B", "none", "C"}), kLetters);
  EXPECT_EQ(f.n_mapped, 4);
  EXPECT_EQ(f.n_unmapped, 1);
  EXPECT_DOUBLE_EQ(f.probs.at("A"), 0.5);
  EXPECT_DOUBLE_EQ(f.probs.at("D"), 0.0);
  EXPECT_THROW(choice_frequencies(answers({"no idea"}), kLetters), DegenerateError);
}

TEST(ClosedForm, ReferenceExamples) {
  const std::map<std::string, double> empirical{{"A", 0.14}, {"B", 0.32}, {"C", 0.54}, {"D", 0.0}};
  const auto majority = make_closed_form_spec(ClosedFormVariant::majority_only, empirical, 0);
  EXPECT_EQ(majority.choice_probs.at("C"), 1.0);
  EXPECT_NEAR(reference_wasserstein(majority, empirical), 0.46, 1e-12);

  const auto matched = make_closed_form_spec(ClosedFormVariant::matched, empirical, 0);
  EXPECT_EQ(reference_wasserstein(matched, empirical), 0.0);

  const std::map<std::string, double> flat{{"A", 0.25}, {"B", 0.25}, {"C", 0.25}, {"D", 0.25}};
  EXPECT_EQ(reference_wasserstein(make_closed_form_spec(ClosedFormVariant::matched, flat, 0), flat), 0.0);
}

TEST(ClosedForm, Rendering) {
  const std::map<std::string, double> empirical{{"A", 0.14}, {"B", 0.32}, {"C", 0.54}, {"D", 0.0}};
  EXPECT_EQ(render_closed_form_summary(make_closed_form_spec(ClosedFormVariant::matched, empirical, 0)),
            "It is most likely that C (54% sure), but it could also be B (32% sure) or A (14% sure).");
  EXPECT_EQ(render_closed_form_summary(make_closed_form_spec(ClosedFormVariant::majority_only, empirical, 0)),
            "The answer is C.");
}

TEST(ClosedForm, OverconfidentSharpens) {
  const std::map<std::string, double> e{{"A", 0.2}, {"B", 0.3}, {"C", 0.5}, {"D", 0.0}};
  const auto s = make_closed_form_spec(ClosedFormVariant::overconfident, e, 0);
  // 0.04 : 0.09 : 0.25 over 0.38.
  EXPECT_EQ(s.choice_probs.at("C"), 0.66);
  EXPECT_EQ(s.choice_probs.at("B"), 0.24);
  EXPECT_EQ(s.choice_probs.at("A"), 0.10);
  EXPECT_GT(reference_wasserstein(s, e), 0.0);
}

TEST(ClosedForm, RandomPercentIsSeededAndOnTheGrid) {
  const std::map<std::string, double> e{{"A", 0.25}, {"B", 0.25}, {"C", 0.25}, {"D", 0.25}};
  const auto a = make_closed_form_spec(ClosedFormVariant::random_percent, e, 3);
  EXPECT_EQ(a.choice_probs, make_closed_form_spec(ClosedFormVariant::random_percent, e, 3).choice_probs);
  EXPECT_NE(a.choice_probs, make_closed_form_spec(ClosedFormVariant::random_percent, e, 4).choice_probs);
  double total = 0.0;
  for (const auto& [l, p] : a.choice_probs) {
    EXPECT_DOUBLE_EQ(p * 100.0, std::round(p * 100.0));
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

// With the oracle judge, single-letter answers and a stated distribution on
// the percent grid, the metric reproduces the reference distance.
TEST(ClosedForm, OracleScoreEqualsReferenceDistance) {
  const LiteralOracleJudge judge;
  const auto templates = TemplateSet::builtin();
  const auto stopwords = StopwordList::none();
  RunConfig cfg;
  cfg.n_conditioning = 20;
  cfg.m_heldout = 20;
  cfg.tau = 1.0;
  cfg.aggregation = Aggregation::pooled;
  const ScoringContext ctx{judge, templates, stopwords, validate_run_config(cfg)};
  const auto record = synth::closed_form_record(77, 20, 20);
  AnswerSet set;
  set.query_id = record.query.id;
  set.conditioning_samples = answers(*record.conditioning_samples);
  for (const auto& t : *record.heldout_samples) set.heldout_samples.push_back({t, 100});
  const auto cond = choice_frequencies(set.conditioning_samples, kLetters).probs;
  for (auto v : {ClosedFormVariant::matched, ClosedFormVariant::majority_only, ClosedFormVariant::overconfident,
                 ClosedFormVariant::random_percent}) {
    const auto spec = make_closed_form_spec(v, cond, 5);
    const Summary s{set.query_id, SummaryMethod::external, render_closed_form_summary(spec), "", to_string(v)};
    const double metric = score_summary(record.query, s, set, ctx).per_question;
    // Each held-out task compares the stated distribution with the conditioning frequencies.
    EXPECT_NEAR(metric, reference_wasserstein(spec, cond), 1e-9) << to_string(v);
  }
}
