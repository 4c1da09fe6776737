#pragma once

// Report statistics: bootstrap intervals, discrimination rates, rank
// correlation, running means and answer coverage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "selfreflect/core.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

inline void to_json(json& j, const Interval& i) { j = json::array({i.lo, i.hi}); }
inline void from_json(const json& j, Interval& i) {
  i.lo = j.at(0).get<double>();
  i.hi = j.at(1).get<double>();
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

namespace detail {

// Unbiased index in [0, n) from a 64-bit engine.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

// Linear-interpolated quantile of sorted values.
inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.size() == 1) return s.front();
  const double h = (static_cast<double>(s.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

// Seeded Fisher-Yates shuffle, identical on every platform.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::int64_t seed) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = detail::uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

// Percentile interval of resampled means at `level` (e.g. 0.95).
inline Interval bootstrap_ci(const std::vector<double>& values, int resamples, double level,
                             std::int64_t seed = 0) {
  if (values.empty()) throw Error("bootstrap_ci: no values");
  if (resamples < 1) throw Error("bootstrap_ci: resamples must be >= 1");
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[detail::uniform_index(rng, values.size())];
    means.push_back(s / static_cast<double>(values.size()));
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  return {detail::quantile_sorted(means, alpha), detail::quantile_sorted(means, 1.0 - alpha)};
}

enum class Orientation { lower_is_better, higher_is_better };

struct RateWithCi {
  double rate = 0.0;
  Interval ci;
};

// Per pair: 1 if `better` strictly beats `worse` under the orientation, 0.5
// on an exact tie, 0 otherwise. The interval resamples query pairs.
inline RateWithCi discrimination_rate(const std::vector<double>& scores_better,
                                      const std::vector<double>& scores_worse,
                                      Orientation orientation, int resamples = 100,
                                      double level = 0.95, std::int64_t seed = 0) {
  if (scores_better.size() != scores_worse.size())
    throw LengthMismatchError("discrimination_rate: paired lists differ in length");
  if (scores_better.empty()) throw LengthMismatchError("discrimination_rate: no pairs");
  std::vector<double> credit;
  credit.reserve(scores_better.size());
  for (std::size_t i = 0; i < scores_better.size(); ++i) {
    const double b = scores_better[i], w = scores_worse[i];
    if (b == w) credit.push_back(0.5);
    else if (orientation == Orientation::lower_is_better) credit.push_back(b < w ? 1.0 : 0.0);
    else credit.push_back(b > w ? 1.0 : 0.0);
  }
  return {mean(credit), bootstrap_ci(credit, resamples, level, seed)};
}

// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Spearman's rho as the Pearson correlation of average ranks.
inline double spearman_rank(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw LengthMismatchError("spearman_rank: lengths differ");
  if (xs.size() < 2) throw LengthMismatchError("spearman_rank: need at least 2 points");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("spearman_rank: constant input");
  return sxy / std::sqrt(sxx * syy);
}

// Running mean at each checkpoint k (1-based count); checkpoints beyond the
// stream are dropped.
inline std::vector<std::pair<std::size_t, double>> convergence_curve(
    const std::vector<double>& scores, const std::vector<std::size_t>& checkpoints) {
  std::vector<double> prefix(scores.size() + 1, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) prefix[i + 1] = prefix[i] + scores[i];
  std::vector<std::pair<std::size_t, double>> out;
  for (auto k : checkpoints) {
    if (k == 0 || k > scores.size()) continue;
    out.emplace_back(k, prefix[k] / static_cast<double>(k));
  }
  return out;
}

inline std::vector<std::size_t> every_k_checkpoints(std::size_t n, std::size_t step) {
  std::vector<std::size_t> out;
  for (std::size_t k = step; k <= n; k += step) out.push_back(k);
  if (out.empty() || out.back() != n) out.push_back(n);
  return out;
}

namespace detail {
// Lowercase, whitespace runs collapsed to one space, trimmed; as code points.
inline std::vector<char32_t> normalize_for_coverage(std::string_view s) {
  std::vector<char32_t> out;
  bool pending_space = false;
  for (char32_t c : utf8::code_points(s)) {
    if (utf8::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(utf8::to_lower(c));
  }
  return out;
}
}  // namespace detail

// Length of the longest contiguous piece of `gold` found in `summary`, as a
// fraction of gold's length (in code points, after normalization).
inline double answer_coverage(std::string_view summary, std::string_view gold) {
  const auto g = detail::normalize_for_coverage(gold);
  const auto s = detail::normalize_for_coverage(summary);
  if (g.empty()) throw Error("answer_coverage: gold answer is empty");
  std::vector<std::size_t> prev(s.size() + 1, 0), cur(s.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= g.size(); ++i) {
    for (std::size_t j = 1; j <= s.size(); ++j) {
      cur[j] = g[i - 1] == s[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(best) / static_cast<double>(g.size());
}

}  // namespace selfreflect
