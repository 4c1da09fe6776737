#include <gtest/gtest.h>

#include <random>

#include "selfreflect/core.hpp"

using namespace selfreflect;

TEST(RunConfig, FillsDefaults) {
  const auto cfg = validate_run_config(RunConfig{});
  EXPECT_EQ(cfg.tau, 5.0);
  EXPECT_EQ(cfg.bootstrap_resamples, 100);
  EXPECT_EQ(cfg.n_conditioning, 50);
  EXPECT_EQ(cfg.m_heldout, 50);
  EXPECT_EQ(cfg.num_queries, 1000);
  EXPECT_EQ(cfg.stopword_list_id, "english");
  EXPECT_EQ(cfg.prompt_set_id, "default");
}

TEST(RunConfig, KeepsExplicitValues) {
  RunConfig in;
  in.tau = 2.0;
  in.n_conditioning = 7;
  const auto cfg = validate_run_config(in);
  EXPECT_EQ(cfg.tau, 2.0);
  EXPECT_EQ(cfg.n(), 7);
}

namespace {
std::string rejected_field(RunConfig cfg) {
  try {
    validate_run_config(cfg);
  } catch (const ConfigError& e) {
    return e.field;
  }
  return "";
}
}  // namespace

TEST(RunConfig, RejectsNamedFields) {
  RunConfig c;
  c.n_conditioning = 0;
  EXPECT_EQ(rejected_field(c), "n_conditioning");
  c = {};
  c.m_heldout = -1;
  EXPECT_EQ(rejected_field(c), "m_heldout");
  c = {};
  c.tau = 0.0;
  EXPECT_EQ(rejected_field(c), "tau");
  c = {};
  c.tau = -3.0;
  EXPECT_EQ(rejected_field(c), "tau");
  c = {};
  c.bootstrap_resamples = 0;
  EXPECT_EQ(rejected_field(c), "bootstrap_resamples");
  c = {};
  c.judge_endpoint = BackendRef{BackendKind::http_completion, std::nullopt, "m", 5, std::nullopt, false};
  EXPECT_EQ(rejected_field(c), "judge_endpoint.endpoint");
  c = {};
  c.target_endpoint = BackendRef{};
  EXPECT_EQ(rejected_field(c), "target_endpoint.table_path");
}

TEST(TokenDistribution, TopKMovesTailIntoOtherMass) {
  const auto d = TokenDistribution::from_probs({{"a", 0.5}, {"b", 0.3}, {"c", 0.1}, {"d", 0.07}, {"e", 0.03}});
  const auto t = d.truncated_top_k(2);
  ASSERT_EQ(t.entries().size(), 2u);
  EXPECT_EQ(t.entries()[0].first, "a");
  EXPECT_DOUBLE_EQ(t.entries()[0].second, 0.5);
  EXPECT_DOUBLE_EQ(t.entries()[1].second, 0.3);
  EXPECT_NEAR(t.other_mass(), 0.2, 1e-12);
  EXPECT_NEAR(t.total(), 1.0, 1e-12);
}

TEST(TokenDistribution, MergesCollidingKeys) {
  const auto d = TokenDistribution::from_probs({{"x", 0.25}, {"y", 0.5}, {"x", 0.25}});
  ASSERT_EQ(d.entries().size(), 2u);
  EXPECT_DOUBLE_EQ(d.prob("x"), 0.5);
}

TEST(TokenDistribution, RejectsUnnormalized) {
  EXPECT_THROW(TokenDistribution::from_probs({{"a", 0.5}}), ProbabilityMassError);
  EXPECT_THROW(TokenDistribution::from_probs({{"a", 1.2}}, -0.2), ProbabilityMassError);
  EXPECT_THROW(TokenDistribution::from_probs({{"a", -0.1}, {"b", 1.1}}), ProbabilityMassError);
}

TEST(TokenDistribution, FromLogprobsTailIsOtherMass) {
  const auto d = TokenDistribution::from_logprobs({{"a", std::log(0.6)}, {"b", std::log(0.3)}});
  EXPECT_NEAR(d.other_mass(), 0.1, 1e-12);
  const auto over = TokenDistribution::from_logprobs({{"a", std::log(0.6)}, {"b", std::log(0.4000001)}});
  EXPECT_NEAR(over.total(), 1.0, 1e-12);
  EXPECT_EQ(over.other_mass(), 0.0);
}

TEST(TokenDistribution, NormalizedAfterEveryConstructionPath) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-8.0, 0.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<TokenDistribution::Entry> logits;
    for (int i = 0; i < n; ++i) logits.emplace_back("t" + std::to_string(rng() % 8), u(rng));
    const auto full = TokenDistribution::from_logits(logits);
    EXPECT_NEAR(full.total(), 1.0, 1e-9);
    for (std::size_t k = 0; k <= full.entries().size(); ++k)
      EXPECT_NEAR(full.truncated_top_k(k).total(), 1.0, 1e-9);
    std::vector<TokenDistribution::Entry> lps;
    const auto top3 = full.truncated_top_k(3);
    for (const auto& [key, p] : top3.entries()) lps.emplace_back(key, std::log(p));
    EXPECT_NEAR(TokenDistribution::from_logprobs(lps).total(), 1.0, 1e-9);
  }
}

TEST(StatementDistribution, Validates) {
  EXPECT_THROW(StatementDistribution::make({}), ProbabilityMassError);
  EXPECT_THROW(StatementDistribution::make({{0.5, "a"}, {0.4, "b"}}), ProbabilityMassError);
  EXPECT_NO_THROW(StatementDistribution::make({{0.5, "a"}, {0.5 + 5e-7, "b"}}));
}

// ---------------------------------------------------------------------------
// Round trips through the artifact format.

namespace {

template <class T>
T round_trip(const T& v) {
  return json::parse(json(v).dump()).template get<T>();
}

std::string random_text(std::mt19937_64& rng) {
  static const char* pieces[] = {"Paris", " ", "Röntgen", "'", "\"", "\n", "ü", "42", "{x}", "\\"};
  std::string s;
  const int n = 1 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) s += pieces[rng() % 10];
  return s;
}

}  // namespace

TEST(Serialization, RoundTripsEveryType) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Query q{random_text(rng), random_text(rng), std::nullopt, std::nullopt};
    if (rng() % 2) q.gold_answers = std::vector<std::string>{random_text(rng)};
    if (rng() % 2) q.choices = std::vector<std::string>{random_text(rng), random_text(rng)};
    EXPECT_EQ(round_trip(q), q);

    AnswerSet s;
    s.query_id = q.id;
    for (int i = 0; i < 3; ++i) s.conditioning_samples.push_back({random_text(rng), static_cast<std::int64_t>(rng() >> 2)});
    s.heldout_samples.push_back({random_text(rng), -5});
    s.sampling_params = {0.7, 0.9, 33};
    EXPECT_EQ(round_trip(s), s);

    Summary sum{q.id, static_cast<SummaryMethod>(rng() % 13), random_text(rng), random_text(rng), ""};
    if (rng() % 2) sum.variant = "overconfident";
    EXPECT_EQ(round_trip(sum), sum);

    const auto d = TokenDistribution::from_probs({{random_text(rng), 0.25}, {"b", 0.5}}, 0.25);
    EXPECT_EQ(round_trip(d), d);

    MaskTask t{1, 2, "w", random_text(rng), random_text(rng), {"a", "b"}};
    EXPECT_EQ(round_trip(t), t);

    ScoreBreakdown b;
    b.per_token = {{0, 1, 0, 0.25}};
    b.per_word = {{0, 1, "w", 0.25}};
    b.per_answer = {{0, 0.25}};
    b.per_question = 0.25;
    b.n_tasks = 3;
    b.n_failed_tasks = 1;
    b.n_empty_answers = 2;
    EXPECT_EQ(round_trip(b), b);

    RunConfig c;
    c.seed = static_cast<std::int64_t>(rng() % 1000);
    c.judge_endpoint = BackendRef{BackendKind::http_completion, "http://h:1/v1", "m", 7, std::nullopt, true};
    c = validate_run_config(c);
    c.stopword_hash = "abc";
    EXPECT_EQ(round_trip(c), c);

    const auto sd = StatementDistribution::make({{0.75, random_text(rng)}, {0.25, "x"}});
    EXPECT_EQ(round_trip(sd), sd);
  }
}

TEST(Summary, MethodNamesRoundTrip) {
  for (int i = 0; i < 13; ++i) {
    const auto m = static_cast<SummaryMethod>(i);
    EXPECT_EQ(parse_summary_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_summary_method("nope"), Error);
}
