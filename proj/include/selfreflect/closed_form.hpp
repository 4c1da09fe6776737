#pragma once

// Closed-form (multiple-choice) study pieces: summaries whose described
// choice distribution is known exactly, and the reference distance between
// that description and the held-out answer frequencies.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "selfreflect/summarizers.hpp"
#include "selfreflect/wasserstein.hpp"

namespace selfreflect {

enum class ClosedFormVariant { matched, majority_only, overconfident, random_percent };

inline constexpr std::pair<ClosedFormVariant, const char*> kClosedFormVariantNames[] = {
    {ClosedFormVariant::matched, "matched"},
    {ClosedFormVariant::majority_only, "majority_only"},
    {ClosedFormVariant::overconfident, "overconfident"},
    {ClosedFormVariant::random_percent, "random_percent"}};

inline std::string to_string(ClosedFormVariant v) { return detail::enum_name(v, kClosedFormVariantNames); }

struct ClosedFormSummarySpec {
  ClosedFormVariant variant = ClosedFormVariant::matched;
  std::map<std::string, double> choice_probs;  // the distribution the summary text states
};

inline std::vector<std::string> choice_letters(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(1, static_cast<char>('A' + i));
  return out;
}

// The single choice letter an answer names: a standalone capital letter from
// `letters`; answers naming none or several distinct letters map to nothing.
inline std::optional<std::string> extract_choice_letter(const std::string& answer,
                                                        const std::vector<std::string>& letters) {
  static const std::regex re(R"((^|[^A-Za-z0-9])([A-Z])(?=$|[^A-Za-z0-9]))");
  std::optional<std::string> found;
  for (auto it = std::sregex_iterator(answer.begin(), answer.end(), re); it != std::sregex_iterator(); ++it) {
    const auto l = (*it)[2].str();
    if (std::find(letters.begin(), letters.end(), l) == letters.end()) continue;
    if (found && *found != l) return std::nullopt;
    found = l;
  }
  return found;
}

struct ChoiceFrequencies {
  std::map<std::string, double> probs;  // over every letter, zeros included
  int n_mapped = 0;
  int n_unmapped = 0;
};

inline ChoiceFrequencies choice_frequencies(const std::vector<Answer>& answers,
                                            const std::vector<std::string>& letters) {
  ChoiceFrequencies f;
  for (const auto& l : letters) f.probs[l] = 0.0;
  for (const auto& a : answers) {
    if (auto l = extract_choice_letter(a.text, letters)) {
      f.probs[*l] += 1.0;
      ++f.n_mapped;
    } else {
      ++f.n_unmapped;
    }
  }
  if (f.n_mapped == 0) throw DegenerateError("no answer maps to a choice");
  for (auto& [l, p] : f.probs) p /= f.n_mapped;
  return f;
}

namespace detail {
// Rounds to whole percentages so the summary text states exactly these values.
inline std::map<std::string, double> to_percent_grid(const std::map<std::string, double>& probs) {
  std::vector<double> w;
  for (const auto& [l, p] : probs) w.push_back(p);
  const auto pct = integer_percentages(w);
  std::map<std::string, double> out;
  std::size_t i = 0;
  for (const auto& [l, p] : probs) out[l] = pct[i++] / 100.0;
  return out;
}
}  // namespace detail

// Builds a variant from the conditioning frequencies. matched states them;
// majority_only names the most frequent choice (earliest letter on ties);
// overconfident squares and renormalizes; random_percent draws Dirichlet(1).
inline ClosedFormSummarySpec make_closed_form_spec(ClosedFormVariant variant,
                                                   const std::map<std::string, double>& conditioning,
                                                   std::int64_t seed) {
  ClosedFormSummarySpec s;
  s.variant = variant;
  switch (variant) {
    case ClosedFormVariant::matched:
      s.choice_probs = detail::to_percent_grid(conditioning);
      break;
    case ClosedFormVariant::majority_only: {
      std::string best;
      double bp = -1.0;
      for (const auto& [l, p] : conditioning)
        if (p > bp) {
          bp = p;
          best = l;
        }
      for (const auto& [l, p] : conditioning) s.choice_probs[l] = l == best ? 1.0 : 0.0;
      break;
    }
    case ClosedFormVariant::overconfident: {
      std::map<std::string, double> sq;
      for (const auto& [l, p] : conditioning) sq[l] = p * p;
      s.choice_probs = detail::to_percent_grid(sq);
      break;
    }
    case ClosedFormVariant::random_percent: {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
      std::map<std::string, double> draw;
      for (const auto& [l, p] : conditioning) draw[l] = -std::log(1.0 - detail::uniform01(rng));
      s.choice_probs = detail::to_percent_grid(draw);
      break;
    }
  }
  return s;
}

// "It is most likely that C (54% sure), but it could also be B (32% sure) or
// A (14% sure)." over the nonzero choices; majority_only says "The answer is C."
inline std::string render_closed_form_summary(const ClosedFormSummarySpec& spec) {
  std::vector<std::pair<std::string, double>> items;
  for (const auto& [l, p] : spec.choice_probs)
    if (p > 0.0) items.emplace_back(l, p);
  if (items.empty()) throw ProbabilityMassError("closed-form summary states no choice");
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (spec.variant == ClosedFormVariant::majority_only) return "The answer is " + items.front().first + ".";
  auto pct = [](double p) { return std::to_string(static_cast<int>(std::lround(p * 100.0))); };
  std::string out = "It is most likely that " + items[0].first + " (" + pct(items[0].second) + "% sure)";
  for (std::size_t i = 1; i < items.size(); ++i) {
    out += i == 1 ? ", but it could also be " : " or ";
    out += items[i].first + " (" + pct(items[i].second) + "% sure)";
  }
  return out + ".";
}

// Same distance as the metric's distributions use, on the stated choice
// distribution against empirical frequencies.
inline double reference_wasserstein(const ClosedFormSummarySpec& spec, const std::map<std::string, double>& empirical) {
  auto described = spec.choice_probs;
  for (const auto& [l, p] : empirical) described.try_emplace(l, 0.0);
  auto emp = empirical;
  for (const auto& [l, p] : described) emp.try_emplace(l, 0.0);
  return wasserstein_categorical(described, emp);
}

}  // namespace selfreflect
