#pragma once

// Completion-style HTTP backends (OpenAI-compatible /completions with
// logprobs, vLLM-style /tokenize and /detokenize, /embeddings).

#include <chrono>
#include <cstdlib>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "selfreflect/gateway.hpp"

namespace selfreflect {

struct HttpOptions {
  int attempts = 3;
  std::chrono::milliseconds backoff{250};
  std::chrono::milliseconds backoff_cap{4000};
  std::chrono::seconds timeout{300};
};

namespace detail {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

inline Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("endpoint");
  Url u{m[1].str(), m[2].matched ? m[2].str() : ""};
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  return u;
}

// POSTs JSON with retries on transport errors, 429 and 5xx.
class JsonClient {
 public:
  JsonClient(const std::string& endpoint, HttpOptions opts) : url_(split_url(endpoint)), opts_(opts) {
    if (const char* key = std::getenv("SELFREFLECT_API_KEY"); key && *key) api_key_ = key;
  }

  const Url& url() const { return url_; }

  json post(const std::string& path, const json& body) const {
    std::string last_error;
    for (int attempt = 0; attempt < opts_.attempts; ++attempt) {
      if (attempt > 0) {
        auto wait = opts_.backoff * (1 << (attempt - 1));
        std::this_thread::sleep_for(std::min(wait, opts_.backoff_cap));
      }
      httplib::Client client(url_.origin);
      client.set_connection_timeout(opts_.timeout);
      client.set_read_timeout(opts_.timeout);
      client.set_write_timeout(opts_.timeout);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = client.Post(path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw BackendError(path + ": HTTP " + std::to_string(res->status) + ": " + res->body);
      auto j = json::parse(res->body, nullptr, false);
      if (j.is_discarded()) throw BackendError(path + ": response is not JSON");
      return j;
    }
    throw BackendError(path + ": giving up after " + std::to_string(opts_.attempts) + " attempts (" + last_error + ")");
  }

 private:
  Url url_;
  HttpOptions opts_;
  std::string api_key_;
};

}  // namespace detail

class HttpCompletionModel final : public LanguageModel {
 public:
  explicit HttpCompletionModel(BackendRef ref, HttpOptions opts = {})
      : ref_(std::move(ref)), client_(ref_.endpoint.value_or(""), opts) {}

  std::string model_name() const override { return ref_.model_name; }

  std::string generate(const GenerateRequest& req) const override {
    if (req.prompt.empty()) throw BackendError("empty prompt");
    json body{{"model", ref_.model_name},
              {"prompt", req.prompt},
              {"max_tokens", req.params.max_tokens},
              {"temperature", req.params.temperature},
              {"top_p", req.params.top_p},
              {"seed", req.seed}};
    if (!req.stop.empty()) body["stop"] = req.stop;
    const auto choice = first_choice(client_.post(client_.url().path + "/completions", body));
    if (!choice.contains("text") || !choice["text"].is_string()) throw BackendError("completion without text");
    auto text = choice["text"].get<std::string>();
    if (choice.value("finish_reason", json()).is_string() && choice["finish_reason"] == "length" &&
        !req.allow_truncation)
      throw TruncationError("completion hit max_tokens");
    detail::apply_stop(text, req.stop);
    return text;
  }

  TokenDistribution next_token_distribution(const DistributionRequest& req) const override {
    const json body{{"model", ref_.model_name},
                    {"prompt", req.context + join_tokens(req.forced_prefix)},
                    {"max_tokens", 1},
                    {"temperature", 0.0},
                    {"seed", 0},
                    {"logprobs", ref_.top_k_logprobs}};
    const auto choice = first_choice(client_.post(client_.url().path + "/completions", body));
    const auto lp = choice.value("logprobs", json());
    if (!lp.is_object() || !lp.contains("top_logprobs") || !lp["top_logprobs"].is_array() ||
        lp["top_logprobs"].empty() || !lp["top_logprobs"][0].is_object()) {
      if (ref_.argmax_only && choice.contains("text") && choice["text"].is_string())
        return TokenDistribution::one_hot(choice["text"].get<std::string>());
      throw LogprobUnsupportedError("endpoint returned no logprobs");
    }
    std::vector<TokenDistribution::Entry> entries;
    for (const auto& [tok, v] : lp["top_logprobs"][0].items()) {
      if (!v.is_number()) throw BackendError("non-numeric logprob");
      entries.emplace_back(tok, v.get<double>());
    }
    auto d = TokenDistribution::from_logprobs(entries);
    if (ref_.argmax_only) {
      const auto top = d.argmax();
      if (!top) throw BackendError("empty logprob map");
      return TokenDistribution::one_hot(*top);
    }
    return d;
  }

  // Token strings found by detokenizing growing id prefixes, so that tokens
  // splitting a multi-byte character are merged.
  std::vector<std::string> tokenize(std::string_view text) const override {
    const auto base = server_root();
    const auto tok = client_.post(base + "/tokenize",
                                  {{"model", ref_.model_name}, {"prompt", text}, {"add_special_tokens", false}});
    if (!tok.contains("tokens") || !tok["tokens"].is_array()) throw BackendError("tokenize: no tokens field");
    const auto ids = tok["tokens"].get<std::vector<long long>>();
    std::vector<std::string> out;
    std::string done;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::vector<long long> head(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i + 1));
      const auto det = client_.post(base + "/detokenize", {{"model", ref_.model_name}, {"tokens", head}});
      if (!det.contains("prompt") || !det["prompt"].is_string()) throw BackendError("detokenize: no prompt field");
      const auto s = det["prompt"].get<std::string>();
      const bool clean = s.size() > done.size() && std::string_view(text).substr(0, s.size()) == s;
      if (!clean && i + 1 < ids.size()) continue;
      out.push_back(std::string(text.substr(done.size(), (clean ? s.size() : text.size()) - done.size())));
      done = std::string(text.substr(0, done.size() + out.back().size()));
    }
    return out;
  }

 private:
  static json first_choice(const json& response) {
    if (!response.contains("choices") || !response["choices"].is_array() || response["choices"].empty())
      throw BackendError("response has no choices");
    return response["choices"][0];
  }

  // Tokenizer routes live beside /v1, not under it.
  std::string server_root() const {
    auto p = client_.url().path;
    if (p.size() >= 3 && p.substr(p.size() - 3) == "/v1") p.resize(p.size() - 3);
    return p;
  }

  BackendRef ref_;
  detail::JsonClient client_;
};

class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(BackendRef ref, HttpOptions opts = {})
      : ref_(std::move(ref)), client_(ref_.endpoint.value_or(""), opts) {}

  std::string model_name() const override { return ref_.model_name; }

  std::vector<double> embed(std::string_view text) const override {
    const auto r = client_.post(client_.url().path + "/embeddings", {{"model", ref_.model_name}, {"input", text}});
    if (!r.contains("data") || !r["data"].is_array() || r["data"].empty() || !r["data"][0].contains("embedding"))
      throw BackendError("embeddings: malformed response");
    return r["data"][0]["embedding"].get<std::vector<double>>();
  }

 private:
  BackendRef ref_;
  detail::JsonClient client_;
};

}  // namespace selfreflect
