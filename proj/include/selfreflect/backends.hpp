#pragma once

// Building models and embedders from BackendRef, with optional caching, and
// the compact backend spec strings used on the command line:
//   toy:<table.json>[,argmax_only]
//   http:<url>[,model=<name>][,top_k=<k>][,argmax_only]
//   oracle[,argmax_only]

#include <filesystem>
#include <memory>
#include <string>

#include "selfreflect/gateway.hpp"
#include "selfreflect/http_backend.hpp"
#include "selfreflect/oracle_judge.hpp"

namespace selfreflect {

inline BackendRef parse_backend_spec(std::string spec, const std::string& field) {
  BackendRef ref;
  constexpr std::string_view kArgmax = ",argmax_only";
  if (spec.rfind("http:", 0) != 0 && spec.size() > kArgmax.size() &&
      std::string_view(spec).substr(spec.size() - kArgmax.size()) == kArgmax) {
    ref.argmax_only = true;
    spec.resize(spec.size() - kArgmax.size());
  }
  if (spec == "oracle") {
    ref.kind = BackendKind::literal_oracle;
    ref.model_name = "literal-oracle";
    return ref;
  }
  if (spec.rfind("toy:", 0) == 0) {
    ref.kind = BackendKind::toy_table;
    ref.table_path = spec.substr(4);
    validate(ref, field);
    return ref;
  }
  if (spec.rfind("http:", 0) == 0) {
    ref.kind = BackendKind::http_completion;
    std::string rest = spec.substr(5);
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      const auto comma = rest.find(',', pos);
      parts.push_back(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    ref.endpoint = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const auto& p = parts[i];
      if (p.rfind("model=", 0) == 0) {
        ref.model_name = p.substr(6);
      } else if (p.rfind("top_k=", 0) == 0) {
        try {
          ref.top_k_logprobs = std::stoi(p.substr(6));
        } catch (const std::exception&) {
          throw ConfigError(field + ".top_k_logprobs");
        }
      } else if (p == "argmax_only") {
        ref.argmax_only = true;
      } else {
        throw ConfigError(field);
      }
    }
    validate(ref, field);
    detail::split_url(*ref.endpoint);
    return ref;
  }
  throw ConfigError(field);
}

inline std::shared_ptr<const LanguageModel> make_language_model(
    BackendRef ref, const std::shared_ptr<const ResponseCache>& cache = nullptr) {
  std::shared_ptr<const LanguageModel> model;
  switch (ref.kind) {
    case BackendKind::toy_table: {
      auto table = ToyTable::load(ref.table_path.value());
      if (ref.argmax_only) table.argmax_only = true;
      model = std::make_shared<ToyModel>(std::move(table));
      break;
    }
    case BackendKind::http_completion:
      model = std::make_shared<HttpCompletionModel>(ref);
      break;
    case BackendKind::literal_oracle:
      model = std::make_shared<LiteralOracleJudge>(ref.model_name.empty() ? "literal-oracle" : ref.model_name);
      break;
  }
  if (ref.model_name.empty()) ref.model_name = model->model_name();
  if (ref.argmax_only && ref.kind == BackendKind::literal_oracle) model = std::make_shared<ArgmaxOnlyModel>(model);
  if (cache) model = std::make_shared<CachingModel>(model, ref, cache);
  return model;
}

// Deterministic bag-of-words vectors: each lowercased word adds 1 to a
// hash-selected coordinate. Entries listed in an optional table override.
class ToyEmbedder final : public Embedder {
 public:
  explicit ToyEmbedder(std::size_t dim = 64, std::map<std::string, std::vector<double>> fixed = {},
                       std::string name = "toy-embed")
      : dim_(dim), fixed_(std::move(fixed)), name_(std::move(name)) {}

  static ToyEmbedder load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open embedding table " + path.string());
    const auto j = json::parse(in);
    return ToyEmbedder(j.value("dim", std::size_t{64}),
                       j.value("embeddings", std::map<std::string, std::vector<double>>{}),
                       j.value("model_name", std::string("toy-embed")));
  }

  std::string model_name() const override { return name_; }

  std::vector<double> embed(std::string_view text) const override {
    if (auto it = fixed_.find(std::string(text)); it != fixed_.end()) return it->second;
    std::vector<double> v(dim_, 0.0);
    for (const auto& w : whitespace_tokens(text)) {
      const auto key = utf8::lower(utf8::trim(w));
      if (key.empty()) continue;
      v[std::stoull(sha256_hex(key).substr(0, 12), nullptr, 16) % dim_] += 1.0;
    }
    return v;
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> fixed_;
  std::string name_;
};

inline std::shared_ptr<const Embedder> make_embedder(BackendRef ref,
                                                     const std::shared_ptr<const ResponseCache>& cache = nullptr) {
  std::shared_ptr<const Embedder> e;
  switch (ref.kind) {
    case BackendKind::http_completion:
      e = std::make_shared<HttpEmbedder>(ref);
      break;
    case BackendKind::toy_table:
      e = std::make_shared<ToyEmbedder>(ToyEmbedder::load(ref.table_path.value()));
      break;
    case BackendKind::literal_oracle:
      e = std::make_shared<ToyEmbedder>();
      break;
  }
  if (ref.model_name.empty()) ref.model_name = e->model_name();
  if (cache) e = std::make_shared<CachingEmbedder>(e, ref, cache);
  return e;
}

}  // namespace selfreflect
