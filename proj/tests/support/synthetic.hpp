#pragma once

// Seeded synthetic question families for the literal oracle judge.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "selfreflect/closed_form.hpp"
#include "selfreflect/core.hpp"
#include "selfreflect/dataset.hpp"

namespace synth {

using selfreflect::Answer;
using selfreflect::AnswerSet;
using selfreflect::DatasetRecord;
using selfreflect::Query;
using selfreflect::Summary;

inline double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> dirichlet(std::mt19937_64& rng, std::size_t k) {
  std::vector<double> w(k);
  double s = 0.0;
  for (auto& x : w) s += x = -std::log(1.0 - u01(rng));
  for (auto& x : w) x /= s;
  return w;
}

inline std::size_t draw(std::mt19937_64& rng, const std::vector<double>& p) {
  double u = u01(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  return p.size() - 1;
}

// One-word answers: masking an answer then hides all of it, so the filler
// distribution is the whole answer distribution. With multi-word answers the
// context around a masked word often pins down the answer, and reweighting
// two such answers leaves every cloze conditional unchanged.
inline const std::vector<std::string>& answer_pool() {
  static const std::vector<std::string> pool = {"Paris",    "Lyon",       "Marseille", "Nice",   "Bordeaux",
                                                "Toulouse", "Lille",      "Strasbourg", "Nantes", "Rennes",
                                                "Grenoble", "Montpellier", "Dijon",     "Reims",  "Avignon"};
  return pool;
}

// Mixed one- and multi-word answers, for the masking paths.
inline const std::vector<std::string>& phrase_pool() {
  static const std::vector<std::string> pool = {"Paris", "Lyon", "the city of Nice", "Mont Blanc", "Normandy coast",
                                                "a small village", "Corsica", "the Rhone valley"};
  return pool;
}

// Answers with their percentages, most likely first (stable on ties).
inline std::string percent_summary(std::vector<std::pair<std::string, int>> items) {
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  items.erase(std::remove_if(items.begin(), items.end(), [](const auto& x) { return x.second <= 0; }), items.end());
  std::string out = "It is most likely that " + items[0].first + " (" + std::to_string(items[0].second) + "% sure)";
  for (std::size_t i = 1; i < items.size(); ++i)
    out += (i == 1 ? ", but it could also be " : " or ") + items[i].first + " (" + std::to_string(items[i].second) +
           "% sure)";
  return out + ".";
}

struct LiteralCase {
  Query query;
  AnswerSet answers;
  Summary exact;      // states the conditioning frequencies
  Summary perturbed;  // moves eps of mass from the most to the second most frequent answer
};

// n must divide 100 so that frequencies are whole percentages.
inline LiteralCase literal_case(std::uint64_t seed, int n, int m, double eps, bool phrases = false) {
  std::mt19937_64 rng(seed);
  const auto& pool = phrases ? phrase_pool() : answer_pool();
  std::vector<std::string> picks = pool;
  std::shuffle(picks.begin(), picks.end(), rng);
  const std::size_t k = 3 + rng() % 3;
  picks.resize(k);
  const auto truth = dirichlet(rng, k);

  LiteralCase c;
  c.query = {"lit-" + std::to_string(seed), "Where should one travel in France?", std::nullopt, std::nullopt};
  c.answers.query_id = c.query.id;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto a = draw(rng, truth);
    ++counts[a];
    c.answers.conditioning_samples.push_back({picks[a], i});
  }
  for (int i = 0; i < m; ++i) c.answers.heldout_samples.push_back({picks[draw(rng, truth)], n + i});

  std::vector<std::pair<std::string, int>> pct;
  for (std::size_t i = 0; i < k; ++i) pct.emplace_back(picks[i], counts[i] * 100 / n);
  c.exact = {c.query.id, selfreflect::SummaryMethod::external, percent_summary(pct), "", "exact"};

  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return counts[a] > counts[b]; });
  const int shift = static_cast<int>(std::lround(eps * 100));
  pct[order[0]].second -= shift;
  pct[order[1]].second += shift;
  c.perturbed = {c.query.id, selfreflect::SummaryMethod::external, percent_summary(pct), "", "perturbed"};
  return c;
}

// A multiple-choice question whose sampled answers are choice letters.
inline DatasetRecord closed_form_record(std::uint64_t seed, int n, int m) {
  std::mt19937_64 rng(seed);
  DatasetRecord r;
  r.query = {"cf-" + std::to_string(seed), "Which option is correct?", std::nullopt,
             std::vector<std::string>{"first", "second", "third", "fourth"}};
  const auto truth = dirichlet(rng, 4);
  const char* letters[] = {"A", "B", "C", "D"};
  r.conditioning_samples.emplace();
  r.heldout_samples.emplace();
  for (int i = 0; i < n; ++i) r.conditioning_samples->push_back(letters[draw(rng, truth)]);
  for (int i = 0; i < m; ++i) r.heldout_samples->push_back(letters[draw(rng, truth)]);
  return r;
}

inline selfreflect::json record_json(const DatasetRecord& r) {
  selfreflect::json j{{"id", r.query.id}, {"text", r.query.text}};
  if (r.query.choices) j["choices"] = *r.query.choices;
  if (r.query.gold_answers) j["gold_answers"] = *r.query.gold_answers;
  if (r.conditioning_samples) j["conditioning_samples"] = *r.conditioning_samples;
  if (r.heldout_samples) j["heldout_samples"] = *r.heldout_samples;
  if (!r.summaries.empty()) {
    j["summaries"] = selfreflect::json::array();
    for (const auto& s : r.summaries)
      j["summaries"].push_back({{"method", selfreflect::to_string(s.method)}, {"text", s.text}, {"variant", s.variant}});
  }
  return j;
}

}  // namespace synth
