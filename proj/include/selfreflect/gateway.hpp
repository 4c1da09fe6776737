#pragma once

// Uniform access to language-model backends: text generation, next-token
// distributions under a forced context, tokenization. Includes the
// table-driven toy model and the content-addressed response cache.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/hashing.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

struct GenerateRequest {
  std::string prompt;
  SamplingParams params = SamplingParams::greedy();
  std::int64_t seed = 0;
  // Generation stops before the first occurrence of any of these.
  std::vector<std::string> stop;
  // Return the partial text instead of raising TruncationError.
  bool allow_truncation = false;
};

struct DistributionRequest {
  std::string context;
  std::vector<std::string> forced_prefix;
};

// All implementations must be safe for concurrent callers.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::string model_name() const = 0;
  virtual std::string generate(const GenerateRequest& req) const = 0;
  virtual TokenDistribution next_token_distribution(const DistributionRequest& req) const = 0;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string model_name() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += t;
  return s;
}

// ---------------------------------------------------------------------------
// Cache keys: SHA-256 over a canonical JSON rendering. The endpoint URL is
// deliberately not part of the key; model_name is.

inline std::string cache_key(const BackendRef& backend, const GenerateRequest& req) {
  const json j{{"op", "generate"},
               {"model", backend.model_name},
               {"prompt", req.prompt},
               {"params", req.params},
               {"seed", req.seed},
               {"stop", req.stop},
               {"allow_truncation", req.allow_truncation}};
  return sha256_hex(j.dump());
}

inline std::string cache_key(const BackendRef& backend, const DistributionRequest& req) {
  const json j{{"op", "next_token_distribution"},
               {"model", backend.model_name},
               {"context", req.context},
               {"forced_prefix", req.forced_prefix},
               {"top_k", backend.top_k_logprobs},
               {"argmax_only", backend.argmax_only}};
  return sha256_hex(j.dump());
}

inline std::string cache_key_tokenize(const BackendRef& backend, std::string_view text) {
  const json j{{"op", "tokenize"}, {"model", backend.model_name}, {"text", text}};
  return sha256_hex(j.dump());
}

inline std::string cache_key_embed(const BackendRef& backend, std::string_view text) {
  const json j{{"op", "embed"}, {"model", backend.model_name}, {"text", text}};
  return sha256_hex(j.dump());
}

// One file per key under a directory; the filename is the hex key. Writes go
// through a temp file and rename, so concurrent writers of the same key are
// harmless and the stored bytes depend only on the value.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::optional<json> get(const std::string& key) const {
    std::ifstream in(dir_ / key, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      return json::parse(ss.str());
    } catch (const json::exception&) {
      return std::nullopt;
    }
  }

  void put(const std::string& key, const json& value) const {
    const std::string bytes = value.dump() + "\n";
    static std::atomic<std::uint64_t> counter{0};
    const auto tmp = dir_ / (key + ".tmp" + std::to_string(counter++) + "." +
                             std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write cache file " + tmp.string());
      out << bytes;
    }
    std::filesystem::rename(tmp, dir_ / key);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

class CachingModel final : public LanguageModel {
 public:
  CachingModel(std::shared_ptr<const LanguageModel> inner, BackendRef ref,
               std::shared_ptr<const ResponseCache> cache)
      : inner_(std::move(inner)), ref_(std::move(ref)), cache_(std::move(cache)) {}

  std::string model_name() const override { return inner_->model_name(); }

  std::string generate(const GenerateRequest& req) const override {
    const auto key = cache_key(ref_, req);
    if (auto hit = cache_->get(key)) return hit->at("text").get<std::string>();
    auto text = inner_->generate(req);
    cache_->put(key, json{{"text", text}});
    return text;
  }

  TokenDistribution next_token_distribution(const DistributionRequest& req) const override {
    const auto key = cache_key(ref_, req);
    if (auto hit = cache_->get(key)) return hit->get<TokenDistribution>();
    auto d = inner_->next_token_distribution(req);
    cache_->put(key, json(d));
    return d;
  }

  std::vector<std::string> tokenize(std::string_view text) const override {
    const auto key = cache_key_tokenize(ref_, text);
    if (auto hit = cache_->get(key)) return hit->at("tokens").get<std::vector<std::string>>();
    auto tokens = inner_->tokenize(text);
    cache_->put(key, json{{"tokens", tokens}});
    return tokens;
  }

 private:
  std::shared_ptr<const LanguageModel> inner_;
  BackendRef ref_;
  std::shared_ptr<const ResponseCache> cache_;
};

class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::shared_ptr<const Embedder> inner, BackendRef ref,
                  std::shared_ptr<const ResponseCache> cache)
      : inner_(std::move(inner)), ref_(std::move(ref)), cache_(std::move(cache)) {}

  std::string model_name() const override { return inner_->model_name(); }

  std::vector<double> embed(std::string_view text) const override {
    const auto key = cache_key_embed(ref_, text);
    if (auto hit = cache_->get(key)) return hit->at("embedding").get<std::vector<double>>();
    auto v = inner_->embed(text);
    cache_->put(key, json{{"embedding", v}});
    return v;
  }

 private:
  std::shared_ptr<const Embedder> inner_;
  BackendRef ref_;
  std::shared_ptr<const ResponseCache> cache_;
};

// Collapses every next-token distribution to a one-hot on its argmax.
class ArgmaxOnlyModel final : public LanguageModel {
 public:
  explicit ArgmaxOnlyModel(std::shared_ptr<const LanguageModel> inner) : inner_(std::move(inner)) {}
  std::string model_name() const override { return inner_->model_name(); }
  std::string generate(const GenerateRequest& req) const override { return inner_->generate(req); }
  TokenDistribution next_token_distribution(const DistributionRequest& req) const override {
    const auto d = inner_->next_token_distribution(req);
    const auto top = d.argmax();
    if (!top) throw BackendError("argmax-only backend returned no token");
    return TokenDistribution::one_hot(*top);
  }
  std::vector<std::string> tokenize(std::string_view text) const override {
    return inner_->tokenize(text);
  }

 private:
  std::shared_ptr<const LanguageModel> inner_;
};

// ---------------------------------------------------------------------------
// Sampling helpers shared by the offline backends.

namespace detail {

// Uniform double in [0,1) from a 64-bit engine; portable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index drawn from weights tempered by 1/temperature with nucleus cut top_p.
// Temperature 0 picks the first maximum.
inline std::size_t sample_index(const std::vector<double>& weights, double temperature,
                                double top_p, std::mt19937_64& rng) {
  if (weights.empty()) throw BackendError("nothing to sample from");
  if (temperature <= 0.0) {
    return static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
  }
  std::vector<double> w(weights.size());
  double mx = 0.0;
  for (double x : weights) mx = std::max(mx, x);
  if (mx <= 0.0) throw BackendError("all sampling weights are zero");
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = weights[i] > 0.0 ? std::pow(weights[i] / mx, 1.0 / temperature) : 0.0;
  double total = 0.0;
  for (double x : w) total += x;
  if (top_p < 1.0) {
    std::vector<std::size_t> order(w.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] > w[b]; });
    double acc = 0.0;
    std::vector<double> kept(w.size(), 0.0);
    for (auto i : order) {
      kept[i] = w[i];
      acc += w[i];
      if (acc >= top_p * total) break;
    }
    w = std::move(kept);
    total = acc;
  }
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    if (u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return 0;
}

inline std::mt19937_64 seeded_rng(std::int64_t seed, std::string_view salt) {
  // Mix the prompt into the seed so distinct prompts sampled with one seed differ.
  const auto h = sha256_hex(salt);
  std::uint64_t mix = std::stoull(h.substr(0, 16), nullptr, 16);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(static_cast<std::uint64_t>(seed) >> 32),
                    static_cast<std::uint32_t>(mix), static_cast<std::uint32_t>(mix >> 32)};
  return std::mt19937_64(seq);
}

// Cuts `text` before the first stop sequence; returns true if one was found.
inline bool apply_stop(std::string& text, const std::vector<std::string>& stop) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  text.resize(cut);
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Toy table model

// Each word is one token carrying its leading whitespace.
inline std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = 1;
    const char32_t c = utf8::decode(text, i, len);
    const bool sp = utf8::is_space(c);
    if (!sp) {
      in_word = true;
    } else if (in_word) {
      out.push_back(cur);
      cur.clear();
      in_word = false;
    }
    cur.append(text.substr(i, len));
    i += len;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct ContextMatcher {
  std::vector<std::string> contains;
  std::vector<std::string> excludes;
  std::optional<std::string> ends_with;
  std::optional<std::string> regex;

  bool matches(std::string_view s) const {
    for (const auto& c : contains)
      if (s.find(c) == std::string_view::npos) return false;
    for (const auto& c : excludes)
      if (s.find(c) != std::string_view::npos) return false;
    if (ends_with && (s.size() < ends_with->size() ||
                      s.substr(s.size() - ends_with->size()) != *ends_with))
      return false;
    if (regex) {
      const std::regex re(*regex);
      const std::string str(s);
      if (!std::regex_search(str, re)) return false;
    }
    return true;
  }
};

inline void from_json(const json& j, ContextMatcher& m) {
  m.contains = j.value("contains", std::vector<std::string>{});
  m.excludes = j.value("excludes", std::vector<std::string>{});
  detail::get_opt(j, "ends_with", m.ends_with);
  detail::get_opt(j, "regex", m.regex);
}
inline void to_json(json& j, const ContextMatcher& m) {
  j = json{{"contains", m.contains}, {"excludes", m.excludes}};
  detail::put_opt(j, "ends_with", m.ends_with);
  detail::put_opt(j, "regex", m.regex);
}

struct Completion {
  std::string text;
  double weight = 1.0;
};

struct ToyTable {
  enum class Tokenizer { vocabulary, whitespace };
  enum class Failure { none, backend, logprob_unsupported };

  struct Rule {
    ContextMatcher match;
    TokenDistribution distribution;
    Failure failure = Failure::none;
  };
  struct GenerationRule {
    ContextMatcher match;
    std::vector<Completion> completions;
    Failure failure = Failure::none;
  };

  std::string model_name = "toy";
  std::vector<std::string> vocabulary;
  Tokenizer tokenizer = Tokenizer::vocabulary;
  std::vector<Rule> rules;  // first match wins
  TokenDistribution default_distribution;
  std::vector<GenerationRule> generations;  // first match wins
  std::string eos_token = "<eos>";
  bool argmax_only = false;

  static ToyTable load(const std::filesystem::path& path);
};

namespace detail {
inline ToyTable::Failure parse_failure(const json& j) {
  const auto s = j.value("error", std::string{});
  if (s.empty()) return ToyTable::Failure::none;
  if (s == "backend") return ToyTable::Failure::backend;
  if (s == "logprob_unsupported") return ToyTable::Failure::logprob_unsupported;
  throw Error("unknown toy rule error kind: " + s);
}
}  // namespace detail

inline void from_json(const json& j, ToyTable& t) {
  t.model_name = j.value("model_name", "toy");
  t.vocabulary = j.value("vocabulary", std::vector<std::string>{});
  const auto tok = j.value("tokenizer", std::string("vocabulary"));
  if (tok == "vocabulary") t.tokenizer = ToyTable::Tokenizer::vocabulary;
  else if (tok == "whitespace") t.tokenizer = ToyTable::Tokenizer::whitespace;
  else throw Error("unknown toy tokenizer: " + tok);
  t.rules.clear();
  for (const auto& r : j.value("rules", json::array())) {
    ToyTable::Rule rule;
    rule.match = r.value("match", json::object()).get<ContextMatcher>();
    rule.failure = detail::parse_failure(r);
    if (rule.failure == ToyTable::Failure::none) rule.distribution = r.at("distribution").get<TokenDistribution>();
    t.rules.push_back(std::move(rule));
  }
  if (j.contains("default_distribution"))
    t.default_distribution = j.at("default_distribution").get<TokenDistribution>();
  t.generations.clear();
  for (const auto& g : j.value("generations", json::array())) {
    ToyTable::GenerationRule rule;
    rule.match = g.value("match", json::object()).get<ContextMatcher>();
    rule.failure = detail::parse_failure(g);
    for (const auto& c : g.value("completions", json::array())) {
      if (c.is_string()) rule.completions.push_back({c.get<std::string>(), 1.0});
      else rule.completions.push_back({c.at("text").get<std::string>(), c.value("weight", 1.0)});
    }
    t.generations.push_back(std::move(rule));
  }
  t.eos_token = j.value("eos_token", std::string("<eos>"));
  t.argmax_only = j.value("argmax_only", false);
}

inline ToyTable ToyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open toy table " + path.string());
  return json::parse(in).get<ToyTable>();
}

// Pure function of its table: no state is carried between calls.
class ToyModel final : public LanguageModel {
 public:
  explicit ToyModel(ToyTable table) : table_(std::move(table)) {}

  std::string model_name() const override { return table_.model_name; }

  TokenDistribution next_token_distribution(const DistributionRequest& req) const override {
    const std::string full = req.context + join_tokens(req.forced_prefix);
    for (const auto& rule : table_.rules) {
      if (!rule.match.matches(full)) continue;
      fail_if(rule.failure);
      return finish(rule.distribution);
    }
    return finish(table_.default_distribution);
  }

  std::string generate(const GenerateRequest& req) const override {
    if (req.prompt.empty()) throw BackendError("empty prompt");
    for (const auto& rule : table_.generations) {
      if (!rule.match.matches(req.prompt)) continue;
      fail_if(rule.failure);
      if (rule.completions.empty()) return {};
      std::vector<double> w;
      for (const auto& c : rule.completions) w.push_back(c.weight);
      auto rng = detail::seeded_rng(req.seed, req.prompt);
      std::string text = rule.completions[detail::sample_index(
          w, req.params.temperature, req.params.top_p, rng)].text;
      if (detail::apply_stop(text, req.stop)) return text;
      const auto tokens = tokenize(text);
      if (static_cast<int>(tokens.size()) > req.params.max_tokens) {
        if (!req.allow_truncation) throw TruncationError("toy completion exceeds max_tokens");
        return join_tokens({tokens.begin(), tokens.begin() + req.params.max_tokens});
      }
      return text;
    }
    return generate_autoregressive(req);
  }

  std::vector<std::string> tokenize(std::string_view text) const override {
    std::vector<std::string> out;
    if (table_.tokenizer == ToyTable::Tokenizer::whitespace) return whitespace_tokens(text);
    for (std::size_t i = 0; i < text.size();) {
      std::size_t best = 0;
      for (const auto& v : table_.vocabulary)
        if (v.size() > best && text.substr(i, v.size()) == v) best = v.size();
      if (best == 0) utf8::decode(text, i, best);
      out.emplace_back(text.substr(i, best));
      i += best;
    }
    return out;
  }

  const ToyTable& table() const { return table_; }

 private:
  static void fail_if(ToyTable::Failure f) {
    if (f == ToyTable::Failure::backend) throw BackendError("toy backend: injected failure");
    if (f == ToyTable::Failure::logprob_unsupported)
      throw LogprobUnsupportedError("toy backend: logprobs unsupported");
  }

  TokenDistribution finish(const TokenDistribution& d) const {
    if (!table_.argmax_only) return d;
    const auto top = d.argmax();
    if (!top) return TokenDistribution::one_hot(table_.eos_token);
    return TokenDistribution::one_hot(*top);
  }

  std::string generate_autoregressive(const GenerateRequest& req) const {
    auto rng = detail::seeded_rng(req.seed, req.prompt);
    DistributionRequest dreq{req.prompt, {}};
    std::string text;
    for (int step = 0; step < req.params.max_tokens; ++step) {
      const auto d = next_token_distribution(dreq);
      if (d.entries().empty()) return text;
      std::vector<double> w;
      for (const auto& e : d.entries()) w.push_back(e.second);
      const auto& tok = d.entries()[detail::sample_index(w, req.params.temperature, req.params.top_p, rng)].first;
      if (tok == table_.eos_token) return text;
      text += tok;
      if (detail::apply_stop(text, req.stop)) return text;
      dreq.forced_prefix.push_back(tok);
    }
    if (!req.allow_truncation) throw TruncationError("toy generation hit max_tokens");
    return text;
  }

  ToyTable table_;
};

}  // namespace selfreflect
