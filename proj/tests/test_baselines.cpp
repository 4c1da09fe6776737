#include <gtest/gtest.h>

#include <random>

#include "selfreflect/backends.hpp"
#include "selfreflect/baselines.hpp"
#include "support/oracles.hpp"

using namespace selfreflect;

namespace {

const Query kQuery{"q", "Name a French city.", std::nullopt, std::nullopt};
const Summary kSummary{"q", SummaryMethod::external, "Paris (72% sure) or Lyon (28% sure).", "", ""};

AnswerSet samples(const std::vector<std::string>& texts) {
  AnswerSet a;
  a.query_id = "q";
  for (std::size_t i = 0; i < texts.size(); ++i) a.conditioning_samples.push_back({texts[i], static_cast<int>(i)});
  return a;
}

ToyTable::GenerationRule reply_when(std::optional<std::string> ends_with, std::string text) {
  return {ContextMatcher{{}, {}, std::move(ends_with), std::nullopt}, {{std::move(text), 1.0}}};
}

ToyTable judge_table() {
  ToyTable t;
  t.model_name = "toy-judge";
  t.tokenizer = ToyTable::Tokenizer::whitespace;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Transportation solver

TEST(Transport, Examples) {
  EXPECT_DOUBLE_EQ(solve_transport({1.0}, {1.0}, {{0.37}}).cost, 0.37);
  EXPECT_EQ(solve_transport({0.5, 0.5}, {0.5, 0.5}, {{0, 1}, {1, 0}}).cost, 0.0);
  EXPECT_NEAR(solve_transport({0.7, 0.3}, {0.5, 0.5}, {{0, 1}, {1, 0}}).cost, 0.2, 1e-12);
}

TEST(Transport, PlanHasTheRequestedMarginals) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 5, n = 1 + rng() % 5;
    const auto s = oracle::random_simplex(rng, m), d = oracle::random_simplex(rng, n);
    oracle::Matrix c(m, std::vector<double>(n));
    for (auto& row : c)
      for (auto& x : row) x = u(rng);
    const auto r = solve_transport(s, d, c);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(r.plan[i][j], -1e-12);
        row += r.plan[i][j];
        total += r.plan[i][j] * c[i][j];
      }
      EXPECT_NEAR(row, s[i], 1e-9);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < m; ++i) col += r.plan[i][j];
      EXPECT_NEAR(col, d[j], 1e-9);
    }
    EXPECT_NEAR(total, r.cost, 1e-9);
    EXPECT_NEAR(r.cost, oracle::transport_lp(s, d, c), 1e-7);
  }
}

TEST(Transport, DegenerateMarginalsWithZeros) {
  EXPECT_NEAR(solve_transport({0.5, 0.0, 0.5}, {0.0, 1.0}, {{3, 1}, {0, 0}, {2, 2}}).cost, 1.5, 1e-12);
}

TEST(Transport, Errors) {
  EXPECT_THROW(solve_transport({}, {1.0}, {}), InfeasibleError);
  EXPECT_THROW(solve_transport({1.0}, {0.5}, {{0.0}}), InfeasibleError);
  EXPECT_THROW(solve_transport({1.0}, {1.0}, {{0.0, 1.0}}), DimensionMismatchError);
  EXPECT_THROW(solve_transport({1.5, -0.5}, {1.0}, {{0.0}, {0.0}}), InfeasibleError);
}

// ---------------------------------------------------------------------------
// Summarization axes

TEST(Summarization, AllOnesGiveOne) {
  auto t = judge_table();
  t.generations.push_back(reply_when(std::nullopt, "1.0"));
  const ToyModel judge(t);
  EXPECT_EQ(score_summarization(kQuery, kSummary, samples({"Paris"}), judge, TemplateSet::builtin()), 1.0);
}

TEST(Summarization, MeanOfFourAxes) {
  auto t = judge_table();
  t.generations.push_back(reply_when("Fluency:", " 1.0"));
  t.generations.push_back(reply_when("Coherence:", " 0.5 because it flows"));
  t.generations.push_back(reply_when("Consistency:", "Rating: 0.5"));
  t.generations.push_back(reply_when("Relevance:", " 0"));
  const ToyModel judge(t);
  const auto d = score_summarization_detail(kQuery, kSummary, samples({"Paris"}), judge, TemplateSet::builtin());
  EXPECT_EQ(d.ratings[0], 1.0);
  EXPECT_EQ(d.ratings[1], 0.5);
  EXPECT_EQ(d.ratings[2], 0.5);
  EXPECT_EQ(d.ratings[3], 0.0);
  EXPECT_EQ(d.score, 0.5);
}

TEST(Summarization, NonNumericTwiceIsParseError) {
  auto t = judge_table();
  t.generations.push_back(reply_when(std::nullopt, "excellent"));
  const ToyModel judge(t);
  EXPECT_THROW(score_summarization(kQuery, kSummary, samples({"Paris"}), judge, TemplateSet::builtin()),
               JudgeParseError);
}

TEST(Summarization, RepromptRecovers) {
  auto t = judge_table();
  t.generations.push_back({ContextMatcher{{std::string(kRepromptSuffix)}, {}, std::nullopt, std::nullopt}, {{"0.8", 1.0}}});
  t.generations.push_back(reply_when(std::nullopt, "good"));
  const ToyModel judge(t);
  EXPECT_DOUBLE_EQ(score_summarization(kQuery, kSummary, samples({"Paris"}), judge, TemplateSet::builtin()), 0.8);
}

// ---------------------------------------------------------------------------
// LM judge

TEST(LmJudge, ParsesScoreLine) {
  EXPECT_EQ(parse_judge_score("The summary is close.\nScore: 8"), 8);
  EXPECT_EQ(parse_judge_score("Score: 10"), 10);
  EXPECT_EQ(parse_judge_score("Score: 3 at first, final Score: **7**"), 7);
  EXPECT_EQ(parse_judge_score("no score here"), std::nullopt);
  EXPECT_EQ(parse_judge_score("Score: 11"), std::nullopt);
}

TEST(LmJudge, EndToEnd) {
  auto t = judge_table();
  t.generations.push_back(reply_when(std::nullopt, "Reason: matches well.\nScore: 8"));
  const ToyModel judge(t);
  EXPECT_EQ(score_lm_judge(kQuery, kSummary, samples({"Paris", "Lyon"}), judge, TemplateSet::builtin()), 8);
}

TEST(LmJudge, MissingScoreTwiceIsParseError) {
  auto t = judge_table();
  t.generations.push_back(reply_when(std::nullopt, "It is fine."));
  const ToyModel judge(t);
  EXPECT_THROW(score_lm_judge(kQuery, kSummary, samples({"Paris"}), judge, TemplateSet::builtin()), JudgeParseError);
}

// ---------------------------------------------------------------------------
// Embedding

TEST(Embedding, Examples) {
  const Summary s{"q", SummaryMethod::external, "S", "", ""};
  const ToyEmbedder same(2, {{"S", {1.0, 0.0}}, {"a", {2.0, 0.0}}, {"b", {0.5, 0.0}}});
  EXPECT_DOUBLE_EQ(score_embedding(s, samples({"a", "b"}), same), 1.0);
  const ToyEmbedder orth(2, {{"S", {1.0, 0.0}}, {"a", {0.0, 3.0}}});
  EXPECT_DOUBLE_EQ(score_embedding(s, samples({"a"}), orth), 0.0);
  const ToyEmbedder mixed(2, {{"S", {1.0, 0.0}}, {"a", {0.8, 0.6}}, {"b", {0.6, 0.8}}});
  EXPECT_NEAR(score_embedding(s, samples({"a", "b"}), mixed), 0.7, 1e-12);
}

TEST(Embedding, Errors) {
  EXPECT_THROW(cosine_similarity({1.0}, {1.0, 0.0}), DimensionMismatchError);
  EXPECT_THROW(cosine_similarity({0.0, 0.0}, {1.0, 0.0}), DegenerateError);
}

// ---------------------------------------------------------------------------
// Optimal transport

TEST(Statements, ParsesJudgeList) {
  const auto s = parse_statements(
      "Here you go:\n```json\n[{'prob': 0.72, 'statement': 'Paris'}, {\"prob\": \"28%\", \"statement\": \"Lyon\"}]\n```");
  ASSERT_TRUE(s);
  ASSERT_EQ(s->size(), 2u);
  EXPECT_EQ((*s)[0], (Statement{0.72, "Paris"}));
  EXPECT_DOUBLE_EQ((*s)[1].prob, 0.28);
  EXPECT_FALSE(parse_statements("no list"));
  EXPECT_FALSE(parse_statements("[{\"prob\": \"often\", \"statement\": \"x\"}]"));
}

TEST(Statements, Normalization) {
  EXPECT_EQ(normalize_statements({{1.0, "Paris"}}).statements.size(), 1u);
  EXPECT_THROW(normalize_statements({{0.5, "a"}, {0.4, "b"}}), ProbabilityMassError);
  const auto d = normalize_statements({{0.5, "a"}, {0.51, "b"}});
  EXPECT_NEAR(d.statements[0].prob + d.statements[1].prob, 1.0, 1e-12);
}

TEST(OptimalTransport, EntailmentCostsAndDistance) {
  auto t = judge_table();
  t.generations.push_back(reply_when(std::nullopt, R"([{"prob": 0.72, "statement": "Paris"}, {"prob": 0.28, "statement": "Lyon"}])"));
  for (const char* w : {"Paris", "Lyon"})
    t.rules.push_back({ContextMatcher{{std::string("Premise: ") + w + "\nHypothesis: " + w + "\n"}, {}, std::nullopt,
                                      std::nullopt},
                       TokenDistribution::from_probs({{"Yes", 1.0}})});
  t.default_distribution = TokenDistribution::from_probs({{" No", 0.9}}, 0.1);
  const ToyModel judge(t);
  const auto r = score_optimal_transport(kQuery, kSummary, samples({"Paris", "Paris", "Lyon", "Paris"}), judge,
                                         TemplateSet::builtin());
  ASSERT_EQ(r.matrix.rows, 2u);
  ASSERT_EQ(r.matrix.cols, 4u);
  EXPECT_EQ(r.matrix.cost[0][0], 0.0);
  EXPECT_EQ(r.matrix.cost[0][2], 1.0);
  EXPECT_EQ(r.matrix.cost[1][2], 0.0);
  // 0.72 of statement mass meets 0.75 of Paris samples; 0.03 must move.
  EXPECT_NEAR(r.distance, 0.03, 1e-12);
}

TEST(OptimalTransport, EntailmentWithoutYesOrNoIsParseError) {
  auto t = judge_table();
  t.default_distribution = TokenDistribution::from_probs({{"Maybe", 1.0}});
  const ToyModel judge(t);
  EXPECT_THROW(entailment_probability("a", "b", judge, TemplateSet::builtin()), JudgeParseError);
}

TEST(OptimalTransport, ShapeMismatch) {
  const auto st = StatementDistribution::make({{1.0, "a"}});
  EntailmentMatrix m{1, 2, {{0.0, 1.0}}};
  EXPECT_THROW(emd(st, 3, m), DimensionMismatchError);
  EXPECT_THROW(emd(st, 0, m), InfeasibleError);
  EXPECT_DOUBLE_EQ(emd(st, 2, m), 0.5);
}
