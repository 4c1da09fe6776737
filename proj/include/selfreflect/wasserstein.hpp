#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "selfreflect/core.hpp"

namespace selfreflect {

// softmax(logits / tau), computed with the max subtracted first.
inline std::vector<double> flatten_logits(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw DegenerateDistributionError("tau must be positive");
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l);
  if (!std::isfinite(mx)) throw DegenerateDistributionError("no finite logit");
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::isfinite(logits[i]) ? std::exp((logits[i] - mx) / tau) : 0.0;
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

// Temperature flattening of a token distribution. Log-probabilities play the
// role of logits (they differ from the true logits by a constant, which the
// softmax ignores). other_mass is one support point with its own log mass;
// zero-probability points stay at zero.
inline TokenDistribution flatten(const TokenDistribution& dist, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DegenerateDistributionError("tau must be positive and finite");
  const auto& entries = dist.entries();
  std::vector<double> logs;
  logs.reserve(entries.size() + 1);
  for (const auto& e : entries) logs.push_back(e.second > 0.0 ? std::log(e.second) : -INFINITY);
  logs.push_back(dist.other_mass() > 0.0 ? std::log(dist.other_mass()) : -INFINITY);
  const auto flat = flatten_logits(logs, tau);
  std::vector<TokenDistribution::Entry> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out.emplace_back(entries[i].first, flat[i]);
  for (double p : flat)
    if (std::isnan(p)) throw DegenerateDistributionError("flattening produced NaN");
  return TokenDistribution::from_probs(std::move(out), flat.back());
}

// Categorical 1-Wasserstein distance under the 0/1 ground metric, i.e.
// 0.5 * L1 over the union of token keys. The two other_mass buckets are the
// same support point.
inline double wasserstein_categorical(const TokenDistribution& p, const TokenDistribution& q) {
  std::map<std::string, std::pair<double, double>> support;
  for (const auto& [k, v] : p.entries()) support[k].first += v;
  for (const auto& [k, v] : q.entries()) support[k].second += v;
  double l1 = std::abs(p.other_mass() - q.other_mass());
  for (const auto& [k, pq] : support) l1 += std::abs(pq.first - pq.second);
  return std::clamp(0.5 * l1, 0.0, 1.0);
}

// Same distance for distributions given as maps over a shared finite label set.
inline double wasserstein_categorical(const std::map<std::string, double>& p,
                                      const std::map<std::string, double>& q) {
  auto to_dist = [](const std::map<std::string, double>& m) {
    std::vector<TokenDistribution::Entry> e(m.begin(), m.end());
    return TokenDistribution::from_probs(std::move(e), 0.0);
  };
  return wasserstein_categorical(to_dist(p), to_dist(q));
}

}  // namespace selfreflect
