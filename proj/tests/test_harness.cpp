#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "selfreflect/config_file.hpp"
#include "selfreflect/harness.hpp"
#include "selfreflect/oracle_judge.hpp"
#include "support/synthetic.hpp"

using namespace selfreflect;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("selfreflect-harness-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p, std::ios::binary);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

// The literal oracle, counting calls, failing on any prompt that mentions "Broken".
class FlakyOracle final : public LanguageModel {
 public:
  std::string model_name() const override { return inner_.model_name(); }
  std::string generate(const GenerateRequest& r) const override {
    check(r.prompt);
    return inner_.generate(r);
  }
  TokenDistribution next_token_distribution(const DistributionRequest& r) const override {
    check(r.context);
    return inner_.next_token_distribution(r);
  }
  std::vector<std::string> tokenize(std::string_view t) const override { return inner_.tokenize(t); }
  mutable std::atomic<int> calls{0};

 private:
  void check(const std::string& prompt) const {
    ++calls;
    if (prompt.find("Broken") != std::string::npos) throw BackendError("injected");
  }
  LiteralOracleJudge inner_;
};

// Query q carries summaries "a" and "b"; which one is the exact summary alternates.
fs::path write_literal_dataset(const fs::path& dir, int n_queries, int n_broken = 0) {
  const auto path = dir / "dataset.jsonl";
  std::ofstream out(path);
  for (int q = 0; q < n_queries; ++q) {
    const auto c = synth::literal_case(900 + q, 10, 10, 0.2);
    DatasetRecord r;
    r.query = c.query;
    if (q < n_broken) r.query.text = "Broken question?";
    std::vector<std::string> cond, held;
    for (const auto& a : c.answers.conditioning_samples) cond.push_back(a.text);
    for (const auto& a : c.answers.heldout_samples) held.push_back(a.text);
    r.conditioning_samples = cond;
    r.heldout_samples = held;
    auto a = c.exact, b = c.perturbed;
    if (q % 2) std::swap(a, b);
    a.variant = "a";
    b.variant = "b";
    r.summaries = {a, b};
    out << synth::record_json(r).dump() << "\n";
  }
  return path;
}

StudyEnv literal_env(std::shared_ptr<const LanguageModel> judge, const fs::path& run_dir) {
  StudyEnv env;
  env.judge = std::move(judge);
  RunConfig cfg;
  cfg.n_conditioning = 10;
  cfg.m_heldout = 10;
  env.cfg = validate_run_config(cfg);
  env.run_dir = run_dir;
  return env;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset loading

TEST(Dataset, MalformedLineReportsItsNumber) {
  const auto dir = scratch("malformed");
  {
    std::ofstream out(dir / "d.jsonl");
    for (int i = 1; i <= 6; ++i) out << R"({"id": "q)" << i << R"(", "text": "Q?"})" << "\n";
    out << "{\"id\": \"q7\", \"text\": \n";
  }
  try {
    load_dataset(dir / "d.jsonl", std::nullopt, 0);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 7u);
  }
}

TEST(Dataset, DuplicateIdIsRejected) {
  const auto dir = scratch("dup");
  {
    std::ofstream out(dir / "d.jsonl");
    out << R"({"id": "q1", "text": "A?"})" << "\n\n" << R"({"id": "q1", "text": "B?"})" << "\n";
  }
  try {
    load_dataset(dir / "d.jsonl", std::nullopt, 0);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
  }
}

TEST(Dataset, SeededSubsets) {
  const auto path = fs::path(FIXTURE_DIR) / "capitals" / "dataset.jsonl";
  const auto all = load_dataset(path, std::nullopt, 1);
  ASSERT_GE(all.size(), 4u);
  auto ids = [](const std::vector<Query>& qs) {
    std::vector<std::string> out;
    for (const auto& q : qs) out.push_back(q.id);
    return out;
  };
  EXPECT_EQ(ids(load_dataset(path, 3, 5)), ids(load_dataset(path, 3, 5)));
  EXPECT_EQ(load_dataset(path, all.size() + 10, 1).size(), all.size());
  auto sorted = ids(load_dataset(path, all.size(), 9));
  auto base = ids(all);
  std::sort(sorted.begin(), sorted.end());
  std::sort(base.begin(), base.end());
  EXPECT_EQ(sorted, base);
}

TEST(Seeds, QuerySeedIsStableAndPerQuery) {
  EXPECT_EQ(query_seed(42, "q1"), query_seed(42, "q1"));
  EXPECT_NE(query_seed(42, "q1"), query_seed(42, "q2"));
  EXPECT_NE(query_seed(42, "q1"), query_seed(43, "q1"));
  EXPECT_GE(query_seed(0, "x"), 0);
}

// ---------------------------------------------------------------------------
// Run store

TEST(RunStore, FirstRecordWinsAndTornLinesAreSkipped) {
  const auto dir = scratch("store");
  {
    RunStore s(dir);
    s.put_score({"q1", "greedy", "selfreflect", 0.25, 0, 0, json()});
    s.put_score({"q1", "greedy", "selfreflect", 0.75, 0, 0, json()});
  }
  {
    std::ofstream out(dir / "scores.jsonl", std::ios::app);
    out << R"({"query_id": "q2", "summ)";
  }
  RunStore s(dir);
  ASSERT_NE(s.score("q1", "greedy", "selfreflect"), nullptr);
  EXPECT_EQ(s.score("q1", "greedy", "selfreflect")->value, 0.25);
  EXPECT_EQ(s.score("q2", "greedy", "selfreflect"), nullptr);
  s.put_score({"q3", "greedy", "selfreflect", 0.5, 0, 0, json()});
  EXPECT_NE(RunStore(dir).score("q3", "greedy", "selfreflect"), nullptr);
}

TEST(Resume, SecondRunReusesEveryScore) {
  const auto dir = scratch("resume");
  StudySpec spec;
  spec.kind = StudyKind::dataset_score;
  spec.dataset = write_literal_dataset(dir, 6);
  spec.summary_methods = {"external:a", "external:b"};
  auto judge = std::make_shared<FlakyOracle>();
  const auto env = literal_env(judge, dir / "run");

  const auto first = run_study(spec, env);
  const int first_calls = judge->calls;
  EXPECT_GT(first_calls, 0);
  const auto scores = lines_of(dir / "run" / "scores.jsonl");
  EXPECT_EQ(scores.size(), 12u);

  const auto second = run_study(spec, env);
  EXPECT_EQ(judge->calls, first_calls);
  EXPECT_EQ(lines_of(dir / "run" / "scores.jsonl"), scores);
  EXPECT_EQ(second.lines, first.lines);
}

TEST(Resume, InterruptedRunCompletesTheMissingScores) {
  const auto dir = scratch("interrupted");
  StudySpec spec;
  spec.kind = StudyKind::dataset_score;
  spec.dataset = write_literal_dataset(dir, 6);
  spec.summary_methods = {"external:a", "external:b"};
  const auto full = run_study(spec, literal_env(std::make_shared<FlakyOracle>(), dir / "full"));

  // Keep the first five scores and half of the sixth.
  const auto run_dir = dir / "cut";
  fs::create_directories(run_dir);
  fs::copy_file(dir / "full" / "answers.jsonl", run_dir / "answers.jsonl");
  fs::copy_file(dir / "full" / "summaries.jsonl", run_dir / "summaries.jsonl");
  const auto scores = lines_of(dir / "full" / "scores.jsonl");
  {
    std::ofstream out(run_dir / "scores.jsonl", std::ios::binary);
    for (int i = 0; i < 5; ++i) out << scores[i] << "\n";
    out << scores[5].substr(0, scores[5].size() / 2);
  }
  auto judge = std::make_shared<FlakyOracle>();
  const auto resumed = run_study(spec, literal_env(judge, run_dir));
  EXPECT_GT(judge->calls, 0);
  EXPECT_EQ(resumed.lines, full.lines);
  RunStore store(run_dir);
  for (const auto& l : scores) {
    const auto j = json::parse(l);
    ASSERT_NE(store.score(j.at("query_id"), j.at("summary"), j.at("metric")), nullptr);
  }
}

// ---------------------------------------------------------------------------
// Studies

TEST(DiscriminationStudy, SwappingThePairComplementsTheRate) {
  const auto dir = scratch("antisym");
  StudySpec spec;
  spec.kind = StudyKind::discrimination;
  spec.dataset = write_literal_dataset(dir, 8);
  spec.pairs = {{"external:a", "external:b"}, {"external:b", "external:a"}};
  const auto report = run_study(spec, literal_env(std::make_shared<FlakyOracle>(), dir / "run"));
  std::vector<double> rates;
  for (const auto& l : report.lines)
    if (l.at("kind") == "discrimination") rates.push_back(l.at("rate").get<double>());
  ASSERT_EQ(rates.size(), 2u);
  EXPECT_DOUBLE_EQ(rates[0] + rates[1], 1.0);
  // "a" is the exact summary on even questions only.
  EXPECT_DOUBLE_EQ(rates[0], 0.5);
}

TEST(FailureBudget, ExceededBudgetFailsTheStudy) {
  const auto dir = scratch("budget");
  StudySpec spec;
  spec.kind = StudyKind::dataset_score;
  spec.dataset = write_literal_dataset(dir, 10, 2);
  spec.summary_methods = {"external:a"};
  EXPECT_THROW(run_study(spec, literal_env(std::make_shared<FlakyOracle>(), dir / "run")), StudyFailedError);
  const auto failures = lines_of(dir / "run" / "failures.jsonl");
  EXPECT_EQ(failures.size(), 2u);
  const auto head = json::parse(lines_of(dir / "run" / "report.jsonl").at(0));
  EXPECT_EQ(head.at("kind"), "study");
  EXPECT_EQ(head.at("n_failed_items"), 2);
  EXPECT_EQ(head.at("failed"), true);
  EXPECT_NE(slurp(dir / "run" / "report.txt").find("FAILED"), std::string::npos);
}

TEST(FailureBudget, FailuresWithinBudgetAreReported) {
  const auto dir = scratch("within");
  StudySpec spec;
  spec.kind = StudyKind::dataset_score;
  spec.dataset = write_literal_dataset(dir, 10, 2);
  spec.summary_methods = {"external:a"};
  auto env = literal_env(std::make_shared<FlakyOracle>(), dir / "run");
  env.cfg.failure_budget = 0.25;
  const auto report = run_study(spec, env);
  EXPECT_FALSE(report.failed);
  EXPECT_EQ(report.n_items, 10);
  EXPECT_EQ(report.n_failed_items, 2);
}

TEST(Studies, MissingMethodsIsAConfigError) {
  const auto dir = scratch("nomethods");
  StudySpec spec;
  spec.kind = StudyKind::dataset_score;
  spec.dataset = write_literal_dataset(dir, 2);
  EXPECT_THROW(run_study(spec, literal_env(std::make_shared<FlakyOracle>(), dir / "run")), ConfigError);
}

// ---------------------------------------------------------------------------
// Config files

TEST(ConfigFile, SectionsCommentsAndQuotes) {
  const auto m = parse_config_text(
      "# run\n"
      "n_conditioning = 20   # inline\n"
      "tau=5\n"
      "\n"
      "[backend]\n"
      "judge = \"http:http://host:8000/v1,model=a#b\"\n"
      "[study]\n"
      "methods = greedy, basic\n");
  EXPECT_EQ(m.at("n_conditioning"), "20");
  EXPECT_EQ(m.at("tau"), "5");
  EXPECT_EQ(m.at("backend.judge"), "http:http://host:8000/v1,model=a#b");
  EXPECT_EQ(m.at("study.methods"), "greedy, basic");
  EXPECT_EQ(m.size(), 4u);
}

TEST(ConfigFile, ParseErrorsCarryTheLine) {
  try {
    parse_config_text("a = 1\n\nno equals sign\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
  }
  EXPECT_THROW(parse_config_text("[study\n"), ParseError);
  EXPECT_THROW(parse_config_text(" = 3\n"), ParseError);
}

TEST(ConfigFile, ResolvesKnownKeys) {
  auto m = parse_config_text(
      "n = 20\nm = 10\ntau = 1\naggregation = pooled\nfailure_budget = 0.2\n"
      "[study]\nkind = discrimination\npairs = good > bad, basic>greedy\nmetrics = selfreflect,pmi\n");
  apply_override(m, "n=50");
  apply_override(m, "study.limit = 7");
  const auto r = resolve_config(m);
  EXPECT_EQ(r.run.n_conditioning, 50);
  EXPECT_EQ(r.run.m_heldout, 10);
  EXPECT_EQ(r.run.tau, 1.0);
  EXPECT_EQ(r.run.aggregation, Aggregation::pooled);
  EXPECT_EQ(r.run.failure_budget, 0.2);
  EXPECT_EQ(r.study.kind, StudyKind::discrimination);
  EXPECT_EQ(r.study.limit, 7u);
  ASSERT_EQ(r.study.pairs.size(), 2u);
  EXPECT_EQ(r.study.pairs[1], (MethodPair{"basic", "greedy"}));
  EXPECT_EQ(r.study.metrics, (std::vector<std::string>{"selfreflect", "pmi"}));
}

TEST(ConfigFile, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(resolve_config({{"n_condtioning", "5"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"tau", "hot"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"tau", "0"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"study.pairs", "a,b"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"cache", "perhaps"}}), ConfigError);
  ConfigMap m;
  EXPECT_THROW(apply_override(m, "noequals"), ConfigError);
}
