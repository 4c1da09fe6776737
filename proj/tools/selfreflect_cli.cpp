// selfreflect: sample answers, build summaries, score them and run studies.
//
//   selfreflect score --config run.toml --method selfreflect --dataset questions.jsonl
//   selfreflect study --kind discrimination --backend-judge oracle --dataset d.jsonl
//
// Exit codes: 0 success, 1 usage or configuration error, 2 run failure
// (including failed items beyond the failure budget).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfreflect/config_file.hpp"
#include "selfreflect/selfreflect.hpp"

namespace sr = selfreflect;
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string dataset;
  std::vector<std::string> methods;
  std::vector<std::string> metrics;
  std::string judge, target, embed;
  std::optional<int> n, m, jobs;
  std::optional<double> tau;
  std::optional<std::int64_t> seed;
  std::optional<std::size_t> limit;
  std::string run_dir;
  std::string kind;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Config file (key = value, [section] headers)");
  cmd->add_option("--set", f.sets, "Override a config key: key=value (repeatable)");
  cmd->add_option("--dataset", f.dataset, "Newline-delimited JSON questions");
  cmd->add_option("--method", f.methods,
                  "Summary method, or for score also a metric name (repeatable)");
  cmd->add_option("--metric", f.metrics, "Metric to compute (repeatable)");
  cmd->add_option("--backend-judge", f.judge, "Judge backend: oracle | toy:<table> | http:<url>[,model=..]");
  cmd->add_option("--backend-target", f.target, "Target backend, same forms as the judge");
  cmd->add_option("--backend-embed", f.embed, "Embedding backend, same forms as the judge");
  cmd->add_option("--n", f.n, "Conditioning answers per question");
  cmd->add_option("--m", f.m, "Held-out answers per question");
  cmd->add_option("--tau", f.tau, "Flattening temperature");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--jobs", f.jobs, "Worker threads");
  cmd->add_option("--run-dir", f.run_dir, "Output directory");
  cmd->add_option("--limit", f.limit, "Number of questions");
}

bool is_metric(const std::string& name) {
  for (const auto& m : sr::kMetrics)
    if (name == m.name) return true;
  return false;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + x;
  return out;
}

// Flags become config keys so that the persisted settings replay the run.
sr::ConfigMap build_config_map(const Flags& f, const std::string& command) {
  sr::ConfigMap map;
  if (!f.config.empty()) map = sr::load_config_file(f.config);
  if (!f.dataset.empty()) map["study.dataset"] = f.dataset;
  if (!f.judge.empty()) map["backend.judge"] = f.judge;
  if (!f.target.empty()) map["backend.target"] = f.target;
  if (!f.embed.empty()) map["backend.embed"] = f.embed;
  if (f.n) map["n_conditioning"] = std::to_string(*f.n);
  if (f.m) map["m_heldout"] = std::to_string(*f.m);
  if (f.tau) map["tau"] = sr::json(*f.tau).dump();
  if (f.seed) map["seed"] = std::to_string(*f.seed);
  if (f.jobs) map["jobs"] = std::to_string(*f.jobs);
  if (f.limit) map["study.limit"] = std::to_string(*f.limit);
  if (!f.run_dir.empty()) map["run_dir"] = f.run_dir;
  if (!f.kind.empty()) map["study.kind"] = f.kind;
  if (command == "score") map["study.kind"] = "dataset_score";
  if (command == "convergence") map["study.kind"] = "convergence";
  std::vector<std::string> methods, metrics = f.metrics;
  for (const auto& m : f.methods) (command == "score" && is_metric(m) ? metrics : methods).push_back(m);
  if (!methods.empty()) map["study.methods"] = join(methods);
  if (!metrics.empty()) map["study.metrics"] = join(metrics);
  for (const auto& s : f.sets) sr::apply_override(map, s);
  for (const char* k : {"n", "m"})
    if (auto it = map.find(k); it != map.end()) {
      map[std::string(k) == "n" ? "n_conditioning" : "m_heldout"] = it->second;
      map.erase(it);
    }
  return map;
}

struct Session {
  sr::ResolvedConfig resolved;
  sr::StudyEnv env;
  sr::json metadata;
};

// Resolves stopwords and templates, stamps their hashes, builds backends and
// persists the resolved configuration.
Session open_session(const sr::ConfigMap& map, const std::string& command) {
  Session s;
  s.resolved = sr::resolve_config(map);
  auto& cfg = s.resolved.run;
  s.env.stopwords = sr::StopwordList::load(cfg.stopword_list_id);
  s.env.templates = sr::TemplateSet::load(cfg.prompt_set_id);
  cfg.stopword_hash = s.env.stopwords.hash();
  cfg.template_hash = s.env.templates.hash();
  s.env.cfg = cfg;
  s.env.run_dir = s.resolved.run_dir;
  fs::create_directories(s.env.run_dir);

  std::shared_ptr<const sr::ResponseCache> cache;
  if (s.resolved.cache)
    cache = std::make_shared<sr::ResponseCache>(s.resolved.cache_dir.value_or(s.env.run_dir / "cache"));
  if (cfg.judge_endpoint) s.env.judge = sr::make_language_model(*cfg.judge_endpoint, cache);
  if (cfg.target_endpoint) s.env.target = sr::make_language_model(*cfg.target_endpoint, cache);
  if (cfg.embed_endpoint) s.env.embedder = sr::make_embedder(*cfg.embed_endpoint, cache);

  sr::json settings = map;
  const sr::json config{{"command", command},
                        {"settings", settings},
                        {"run", cfg},
                        {"study", sr::to_json_value(s.resolved.study)}};
  std::ofstream(s.env.run_dir / "config.json", std::ios::binary | std::ios::trunc) << config.dump(2) << "\n";
  s.metadata = {{"command", command}, {"started_at", utc_now()}};
  return s;
}

void close_session(Session& s, int exit_code) {
  s.metadata["finished_at"] = utc_now();
  s.metadata["exit_code"] = exit_code;
  std::ofstream(s.env.run_dir / "metadata.json", std::ios::binary | std::ios::trunc) << s.metadata.dump(2) << "\n";
}

std::vector<sr::DatasetRecord> load_records(const Session& s) {
  const auto& spec = s.resolved.study;
  if (spec.dataset.empty()) throw sr::ConfigError("--dataset is required");
  const auto limit = spec.limit ? *spec.limit : static_cast<std::size_t>(s.env.cfg.num_queries.value());
  return sr::load_dataset_records(spec.dataset, limit, s.env.cfg.seed);
}

int finish_items(sr::RunStore& store, int items, int failed, const sr::RunConfig& cfg) {
  store.write_failures();
  std::cout << items - failed << " of " << items << " items done, " << failed << " failed\n";
  if (items && static_cast<double>(failed) / items > cfg.failure_budget) {
    std::cerr << "error: failed items exceed the budget; see " << (store.dir() / "failures.jsonl").string() << "\n";
    return 2;
  }
  return 0;
}

int cmd_sample(Session& s) {
  const auto records = load_records(s);
  sr::RunStore store(s.env.run_dir);
  sr::StudyRunner runner(s.env, store);
  int failed = 0;
  for (const auto& rec : records) {
    try {
      runner.ensure_answers(rec);
    } catch (const sr::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      ++failed;
      runner.fail(rec.query.id, "answers", "", "", e.what());
    }
  }
  return finish_items(store, static_cast<int>(records.size()), failed, s.env.cfg);
}

int cmd_summarize(Session& s, const std::vector<std::string>& labels) {
  if (labels.empty()) throw sr::ConfigError("--method is required");
  for (const auto& l : labels) sr::validate_summary_label(l);
  const auto records = load_records(s);
  sr::RunStore store(s.env.run_dir);
  sr::StudyRunner runner(s.env, store);
  int items = 0, failed = 0;
  for (const auto& rec : records) {
    for (const auto& label : labels) {
      ++items;
      try {
        const auto method = sr::parse_summary_method(sr::detail::split_label(label).first);
        sr::AnswerSet none;
        const auto& answers = sr::detail::is_intervention(method) ? runner.ensure_answers(rec) : none;
        runner.ensure_summary(rec, label, answers);
      } catch (const sr::ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        ++failed;
        runner.fail(rec.query.id, "summary", label, "", e.what());
      }
    }
  }
  return finish_items(store, items, failed, s.env.cfg);
}

int run_and_print(Session& s, const sr::StudySpec& spec) {
  try {
    const auto report = sr::run_study(spec, s.env);
    std::cout << report.text;
    return 0;
  } catch (const sr::StudyFailedError& e) {
    std::ifstream in(s.env.run_dir / "report.txt");
    std::cout << in.rdbuf();
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// Without summary methods, score every summary label the records carry
// (or greedy summaries when they carry none).
int cmd_study(Session& s) {
  auto spec = s.resolved.study;
  if (spec.dataset.empty()) throw sr::ConfigError("--dataset is required");
  if (spec.kind == sr::StudyKind::dataset_score && spec.summary_methods.empty()) {
    for (const auto& rec : load_records(s))
      for (const auto& sum : rec.summaries) {
        const auto label = sr::summary_label(sum);
        if (std::find(spec.summary_methods.begin(), spec.summary_methods.end(), label) == spec.summary_methods.end())
          spec.summary_methods.push_back(label);
      }
    if (spec.summary_methods.empty()) spec.summary_methods.push_back("greedy");
  }
  return run_and_print(s, spec);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SelfReflect: score how well a summary reflects a model's answer distribution"};
  app.require_subcommand(1);
  Flags f;
  auto* sample = app.add_subcommand("sample", "Sample conditioning and held-out answers");
  auto* summarize = app.add_subcommand("summarize", "Produce summaries for --method labels");
  auto* score = app.add_subcommand("score", "Score summaries with the given metrics");
  auto* study = app.add_subcommand("study", "Run a study (config study.kind or --kind)");
  auto* report = app.add_subcommand("report", "Rebuild the report of an existing run directory");
  auto* convergence = app.add_subcommand("convergence", "Running mean of scores over questions");
  for (auto* c : {sample, summarize, score, study, report, convergence}) add_common(c, f);
  study->add_option("--kind", f.kind,
                    "dataset_score | discrimination | closed_form | convergence | coverage | certainty_confusion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  std::optional<Session> session;
  int code = 0;
  try {
    auto map = build_config_map(f, name);
    if (name == "report") {
      // Settings of the earlier run; flags given now take precedence.
      const fs::path dir = map.count("run_dir") ? fs::path(map["run_dir"]) : fs::path("run");
      std::ifstream in(dir / "config.json");
      if (!in) throw sr::ConfigError("--run-dir: no config.json in " + dir.string());
      auto stored = sr::json::parse(in).at("settings").get<sr::ConfigMap>();
      for (const auto& [k, v] : map) stored[k] = v;
      map = std::move(stored);
    }
    session = open_session(map, name);
    if (name == "sample") code = cmd_sample(*session);
    else if (name == "summarize") code = cmd_summarize(*session, session->resolved.study.summary_methods);
    else code = cmd_study(*session);
  } catch (const sr::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    code = 1;
  } catch (const sr::TemplateError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    code = 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 2;
  }
  if (session) close_session(*session, code);
  return code;
}
