#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("selfreflect-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string("\"") + CLI_PATH + "\" " + args + " >\"" + (dir / "stdout.txt").string() +
                          "\" 2>\"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string capitals_args(const fs::path& dir, const std::string& target) {
  return "score --dataset \"" + (kFixtures / "capitals" / "dataset.jsonl").string() + "\" --backend-target \"toy:" +
         target + "\" --backend-judge oracle --method greedy --method basic --n 10 --m 10 --run-dir \"" +
         (dir / "run").string() + "\"";
}

}  // namespace

TEST(Cli, UnknownSubcommandIsAUsageError) {
  const auto dir = scratch("unknown");
  EXPECT_EQ(run("frobnicate", dir), 1);
}

TEST(Cli, UnknownConfigKeyIsAUsageError) {
  const auto dir = scratch("badkey");
  EXPECT_EQ(run("score --set n_condtioning=5 --run-dir \"" + (dir / "run").string() + "\"", dir), 1);
}

TEST(Cli, ScoreWritesTheRunDirectory) {
  const auto dir = scratch("score");
  ASSERT_EQ(run(capitals_args(dir, (kFixtures / "capitals" / "target.json").string()), dir), 0);
  for (const char* f : {"config.json", "metadata.json", "answers.jsonl", "summaries.jsonl", "scores.jsonl",
                        "report.jsonl", "report.txt", "failures.jsonl"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  std::ifstream meta(dir / "run" / "metadata.json");
  EXPECT_EQ(nlohmann::json::parse(meta).at("exit_code"), 0);
}

TEST(Cli, FailuresBeyondTheBudgetExitWithTwo) {
  const auto dir = scratch("budget");
  {
    std::ofstream out(dir / "broken.json");
    out << R"({"model_name": "broken", "tokenizer": "whitespace", "generations": [{"match": {}, "error": "backend"}]})";
  }
  EXPECT_EQ(run(capitals_args(dir, (dir / "broken.json").string()), dir), 2);
  EXPECT_TRUE(fs::exists(dir / "run" / "failures.jsonl"));
  EXPECT_GT(fs::file_size(dir / "run" / "failures.jsonl"), 0u);
}
