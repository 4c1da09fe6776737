#include <gtest/gtest.h>

#include <random>

#include "selfreflect/stats.hpp"

using namespace selfreflect;

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman_rank({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rank({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman_rank({1, 2, 3}, {1, 3, 2}), 0.5);
}

TEST(Spearman, AverageRanksOnTies) {
  EXPECT_EQ(average_ranks({5, 1, 5, 3}), (std::vector<double>{3.5, 1, 3.5, 2}));
  // Ranks (1, 2.5, 2.5) vs (1, 2, 3): Pearson of those by hand = sqrt(3)/2.
  EXPECT_NEAR(spearman_rank({1, 2, 2}, {1, 2, 3}), std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman_rank({1, 2}, {1, 2, 3}), LengthMismatchError);
  EXPECT_THROW(spearman_rank({1}, {1}), LengthMismatchError);
  EXPECT_THROW(spearman_rank({2, 2, 2}, {1, 2, 3}), DegenerateError);
}

TEST(Spearman, MatchesClassicFormulaWithoutTies) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    std::vector<double> x(n), y(n);
    std::iota(x.begin(), x.end(), 0.0);
    std::iota(y.begin(), y.end(), 0.0);
    std::shuffle(x.begin(), x.end(), rng);
    std::shuffle(y.begin(), y.end(), rng);
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(spearman_rank(x, y), 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0)), 1e-12);
  }
}

TEST(Bootstrap, Examples) {
  const auto c = bootstrap_ci({0.3, 0.3, 0.3}, 100, 0.95, 1);
  EXPECT_EQ(c.lo, 0.3);
  EXPECT_EQ(c.hi, 0.3);
  const auto single = bootstrap_ci({0.7}, 50, 0.95, 9);
  EXPECT_EQ(single.lo, 0.7);
  EXPECT_EQ(single.hi, 0.7);
  const auto a = bootstrap_ci({0.1, 0.9, 0.4}, 100, 0.95, 17), b = bootstrap_ci({0.1, 0.9, 0.4}, 100, 0.95, 17);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  const auto w = bootstrap_ci({0.0, 1.0}, 20000, 0.95, 3);
  EXPECT_GE(w.lo, 0.0);
  EXPECT_LE(w.hi, 1.0);
  EXPECT_LE(w.lo, 0.5);
  EXPECT_GE(w.hi, 0.5);
}

TEST(Bootstrap, IntervalBracketsResampledMeans) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> v(1 + rng() % 20);
    for (auto& x : v) x = u(rng);
    const auto ci = bootstrap_ci(v, 200, 0.9, static_cast<std::int64_t>(trial));
    EXPECT_LE(ci.lo, ci.hi);
    EXPECT_GE(ci.lo, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(ci.hi, *std::max_element(v.begin(), v.end()));
  }
  EXPECT_THROW(bootstrap_ci({}, 10, 0.95), Error);
}

TEST(Discrimination, Examples) {
  EXPECT_EQ(discrimination_rate({0.1, 0.2}, {0.3, 0.4}, Orientation::lower_is_better).rate, 1.0);
  EXPECT_EQ(discrimination_rate({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, Orientation::lower_is_better).rate, 0.5);
  EXPECT_EQ(discrimination_rate({0.1, 0.2, 0.5}, {0.2, 0.2, 0.4}, Orientation::lower_is_better).rate, 0.5);
  EXPECT_EQ(discrimination_rate({0.3, 0.4}, {0.1, 0.2}, Orientation::higher_is_better).rate, 1.0);
  EXPECT_THROW(discrimination_rate({1}, {1, 2}, Orientation::lower_is_better), LengthMismatchError);
}

TEST(Discrimination, AntisymmetricUnderRoleSwap) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(1 + rng() % 15), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<double>(rng() % 4);
      b[i] = static_cast<double>(rng() % 4);
    }
    for (auto o : {Orientation::lower_is_better, Orientation::higher_is_better})
      EXPECT_DOUBLE_EQ(discrimination_rate(a, b, o).rate + discrimination_rate(b, a, o).rate, 1.0);
  }
}

TEST(Coverage, Examples) {
  EXPECT_EQ(answer_coverage("It is Paris France, surely.", "Paris France"), 1.0);
  EXPECT_EQ(answer_coverage("xyz", "abc"), 0.0);
  EXPECT_DOUBLE_EQ(answer_coverage("The answer is Paris.", "Paris France"), 5.0 / 12.0);
}

TEST(Coverage, CaseAndWhitespaceNormalized) {
  EXPECT_EQ(answer_coverage("PARIS   france", "Paris France"), 1.0);
  EXPECT_EQ(answer_coverage("Ünited\tStates", "ünited states"), 1.0);
  EXPECT_THROW(answer_coverage("x", "   "), Error);
}

TEST(Convergence, Examples) {
  using C = std::vector<std::pair<std::size_t, double>>;
  EXPECT_EQ(convergence_curve({0.1, 0.3}, {1, 2}), (C{{1, 0.1}, {2, 0.2}}));
  EXPECT_TRUE(convergence_curve({}, {1, 2}).empty());
  for (const auto& [k, m] : convergence_curve({0.4, 0.4, 0.4, 0.4}, {1, 2, 3, 4})) EXPECT_DOUBLE_EQ(m, 0.4);
  EXPECT_EQ(every_k_checkpoints(7, 3), (std::vector<std::size_t>{3, 6, 7}));
}

TEST(SeededShuffle, DeterministicPermutation) {
  std::vector<int> a(50), b;
  std::iota(a.begin(), a.end(), 0);
  b = a;
  seeded_shuffle(a, 12);
  seeded_shuffle(b, 12);
  EXPECT_EQ(a, b);
  auto c = a;
  std::sort(c.begin(), c.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(c[static_cast<std::size_t>(i)], i);
}
