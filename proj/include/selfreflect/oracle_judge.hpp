#pragma once

// A judge that takes its conditioning block literally. From the samples
// block it reads the empirical answer distribution; from a summary it reads
// "<answer> (<p>% sure)" segments (or the whole text as one certain answer).
// Masked-word prompts are answered with the distribution of words that fit
// the mask among the described answers. Only the built-in prompt layout is
// understood.

#include <map>
#include <regex>
#include <string>
#include <vector>

#include "selfreflect/gateway.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

struct WeightedAnswer {
  std::string text;
  double weight = 0.0;
};

namespace oracle_detail {

inline constexpr std::string_view kBackground = "Background information:\n";
inline constexpr std::string_view kAfterBackground = "\n\nHere is one more answer to the question";
inline constexpr std::string_view kSamplesHeader = "We received many answers to this question. Here they are:\n";
inline constexpr std::string_view kMaskIntro = "with one word masked out as ";
inline constexpr std::string_view kCandidate = "Candidate word: ";

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && utf8::lower(s.substr(0, prefix.size())) == prefix;
}

// Removes connective phrases around one answer mention.
inline std::string clean_mention(std::string_view raw) {
  static const char* const kPrefixes[] = {"it is most likely that", "the answer is most likely",
                                          "but it could also be", "it could also be", "the answer is",
                                          "either", "or", "but"};
  std::string s = utf8::trim(raw);
  bool changed = true;
  while (changed) {
    changed = false;
    while (!s.empty() && (s.front() == ',' || s.front() == ';' || s.front() == '.')) {
      s.erase(s.begin());
      s = utf8::trim(s);
      changed = true;
    }
    for (const char* p : kPrefixes) {
      const std::string_view pv(p);
      if (starts_with_ci(s, pv) && (s.size() == pv.size() || s[pv.size()] == ' ')) {
        s = utf8::trim(std::string_view(s).substr(pv.size()));
        changed = true;
        break;
      }
    }
  }
  while (!s.empty() && (s.back() == ',' || s.back() == '.' || s.back() == ';')) s.pop_back();
  return utf8::trim(s);
}

inline std::vector<WeightedAnswer> parse_summary(const std::string& text) {
  static const std::regex re(R"(\(\s*(\d+(?:\.\d+)?)\s*%\s*sure\s*\))");
  std::vector<WeightedAnswer> out;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const auto pos = static_cast<std::size_t>(m.position(0));
    out.push_back({clean_mention(std::string_view(text).substr(last, pos - last)), std::stod(m[1].str()) / 100.0});
    last = pos + static_cast<std::size_t>(m.length(0));
  }
  if (out.empty()) out.push_back({clean_mention(text), 1.0});
  return out;
}

inline std::vector<WeightedAnswer> parse_samples(std::string_view block) {
  std::vector<WeightedAnswer> out;
  std::size_t pos = 0;
  while (pos < block.size()) {
    auto end = block.find('\n', pos);
    if (end == std::string_view::npos) end = block.size();
    const auto line = block.substr(pos, end - pos);
    const auto eq = line.find(" = '");
    if (line.substr(0, 2) == "x_" && eq != std::string_view::npos && line.size() >= eq + 5 && line.back() == '\'')
      out.push_back({std::string(line.substr(eq + 4, line.size() - eq - 5)), 1.0});
    pos = end + 1;
  }
  return out;
}

}  // namespace oracle_detail

class LiteralOracleJudge final : public LanguageModel {
 public:
  explicit LiteralOracleJudge(std::string name = "literal-oracle", std::string eos = "<eos>")
      : name_(std::move(name)), eos_(std::move(eos)) {}

  std::string model_name() const override { return name_; }

  std::vector<std::string> tokenize(std::string_view text) const override { return whitespace_tokens(text); }

  // The answers described by the prompt's conditioning block; empty when the
  // prompt has none.
  static std::vector<WeightedAnswer> conditioning(const std::string& prompt) {
    using namespace oracle_detail;
    const auto b = prompt.find(kBackground);
    if (b == std::string::npos) return {};
    const auto start = b + kBackground.size();
    const auto end = prompt.find(kAfterBackground, start);
    if (end == std::string::npos) return {};
    const std::string_view block = std::string_view(prompt).substr(start, end - start);
    if (block.substr(0, kSamplesHeader.size()) == kSamplesHeader)
      return parse_samples(block.substr(kSamplesHeader.size()));
    return parse_summary(std::string(block));
  }

  TokenDistribution next_token_distribution(const DistributionRequest& req) const override {
    const auto& ctx = req.context;
    const auto answers = conditioning(ctx);
    if (ends_with(ctx, "Masked word:\n")) {
      const auto words = mask_fillers(ctx, answers);
      return continuation(words, req.forced_prefix);
    }
    if (ends_with(ctx, "Reply:\n") && ctx.find(oracle_detail::kCandidate) != std::string::npos) {
      const auto words = mask_fillers(ctx, answers);
      const auto cand_at = ctx.rfind(oracle_detail::kCandidate) + oracle_detail::kCandidate.size();
      const auto candidate = ctx.substr(cand_at, ctx.find('\n', cand_at) - cand_at);
      double total = 0.0, hit = 0.0;
      for (const auto& [w, p] : words) {
        total += p;
        if (w == candidate) hit += p;
      }
      const double t = total > 0.0 ? hit / total : 0.0;
      return TokenDistribution::from_probs({{"True", t}, {"False", 1.0 - t}});
    }
    if (ends_with(ctx, "Here is one more answer to the question:\n")) {
      std::vector<std::pair<std::vector<std::string>, double>> tokenized;
      for (const auto& a : answers) tokenized.emplace_back(tokenize(a.text), a.weight);
      return sequence_continuation(tokenized, req.forced_prefix);
    }
    throw BackendError("literal oracle: unrecognized prompt");
  }

  std::string generate(const GenerateRequest& req) const override {
    if (!ends_with(req.prompt, "Masked word:\n"))
      throw BackendError("literal oracle only generates masked-word fills");
    const auto d = next_token_distribution({req.prompt, {}});
    if (d.entries().empty()) throw BackendError("literal oracle: nothing fits the mask");
    std::vector<double> w;
    for (const auto& e : d.entries()) w.push_back(e.second);
    auto rng = detail::seeded_rng(req.seed, req.prompt);
    return d.entries()[detail::sample_index(w, req.params.temperature, req.params.top_p, rng)].first;
  }

 private:
  static bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && std::string_view(s).substr(s.size() - suffix.size()) == suffix;
  }

  // Weighted words that complete the masked answer into one of `answers`.
  static std::map<std::string, double> mask_fillers(const std::string& ctx,
                                                    const std::vector<WeightedAnswer>& answers) {
    using namespace oracle_detail;
    std::map<std::string, double> out;
    const auto intro = ctx.rfind(kMaskIntro);
    if (intro == std::string::npos) return out;
    const auto ph_start = intro + kMaskIntro.size();
    const auto colon = ctx.find(":\n", ph_start);
    if (colon == std::string::npos) return out;
    const auto placeholder = ctx.substr(ph_start, colon - ph_start);
    const auto line_start = colon + 2;
    const auto line_end = ctx.find("\n\n", line_start);
    const auto masked = ctx.substr(line_start, line_end - line_start);
    const auto at = masked.find(placeholder);
    if (placeholder.empty() || at == std::string::npos) return out;
    const auto left = masked.substr(0, at), right = masked.substr(at + placeholder.size());
    for (const auto& a : answers) {
      if (a.weight <= 0.0 || a.text.size() <= left.size() + right.size()) continue;
      if (a.text.compare(0, left.size(), left) != 0) continue;
      if (a.text.compare(a.text.size() - right.size(), right.size(), right) != 0) continue;
      const auto middle = a.text.substr(left.size(), a.text.size() - left.size() - right.size());
      bool has_space = false;
      for (char32_t c : utf8::code_points(middle)) has_space = has_space || utf8::is_space(c);
      if (!has_space) out[middle] += a.weight;
    }
    return out;
  }

  // Next token after `prefix` when each filler word is a single token.
  TokenDistribution continuation(const std::map<std::string, double>& words,
                                 const std::vector<std::string>& prefix) const {
    std::vector<std::pair<std::vector<std::string>, double>> seqs;
    for (const auto& [w, p] : words) seqs.push_back({{w}, p});
    return sequence_continuation(seqs, prefix);
  }

  TokenDistribution sequence_continuation(const std::vector<std::pair<std::vector<std::string>, double>>& seqs,
                                          const std::vector<std::string>& prefix) const {
    std::map<std::string, double> next;
    double total = 0.0;
    for (const auto& [tokens, w] : seqs) {
      if (w <= 0.0 || tokens.size() < prefix.size()) continue;
      if (!std::equal(prefix.begin(), prefix.end(), tokens.begin())) continue;
      next[tokens.size() == prefix.size() ? eos_ : tokens[prefix.size()]] += w;
      total += w;
    }
    if (total <= 0.0) return TokenDistribution();  // all mass unexplained
    std::vector<TokenDistribution::Entry> e;
    for (const auto& [k, w] : next) e.emplace_back(k, w / total);
    double s = 0.0;
    for (const auto& x : e) s += x.second;
    e.back().second += 1.0 - s;
    return TokenDistribution::from_probs(std::move(e));
  }

  std::string name_;
  std::string eos_;
};

}  // namespace selfreflect
