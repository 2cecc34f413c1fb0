#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fstx/errors.hpp"
#include "fstx/shapley.hpp"

using namespace fstx;

namespace {

TableGame additive_game(const std::vector<double>& w) {
  return TableGame::from_function(w.size(), [&w](std::uint64_t s) {
    double v = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (s >> i & 1) v += w[i];
    }
    return v;
  });
}

TableGame unanimity_game(std::size_t n, std::uint64_t carrier) {
  return TableGame::from_function(n, [carrier](std::uint64_t s) { return (s & carrier) == carrier ? 1.0 : 0.0; });
}

// Direct weighted-sum formula over subsets excluding i, with factorials.
std::vector<double> brute_force_shapley(const TableGame& g) {
  const std::size_t n = g.player_count();
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t s = 0; s < (1ULL << n); ++s) {
      if (s >> i & 1) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcountll(s));
      phi[i] += fact[size] * fact[n - 1 - size] / fact[n] * (g.value(s | (1ULL << i)) - g.value(s));
    }
  }
  return phi;
}

}  // namespace

TEST(ExactShapley, AdditiveGame) {
  const auto phi = exact_shapley(additive_game({1, 2, 3, 4})).phi;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(phi[i], i + 1.0, 1e-12);
}

TEST(ExactShapley, UnanimityGame) {
  const auto phi = exact_shapley(unanimity_game(4, 0b0011)).phi;
  EXPECT_NEAR(phi[0], 0.5, 1e-12);
  EXPECT_NEAR(phi[1], 0.5, 1e-12);
  EXPECT_NEAR(phi[2], 0.0, 1e-12);
  EXPECT_NEAR(phi[3], 0.0, 1e-12);
}

TEST(ExactShapley, SquaredSizeGame) {
  const auto g = TableGame::from_function(2, [](std::uint64_t s) {
    const double k = __builtin_popcountll(s);
    return k * k;
  });
  const auto phi = exact_shapley(g).phi;
  EXPECT_NEAR(phi[0], 2.0, 1e-12);
  EXPECT_NEAR(phi[1], 2.0, 1e-12);
}

TEST(ExactShapley, MatchesFactorialFormulaOnRandomGames) {
  SeededRng rng(21);
  for (std::size_t n = 1; n <= 9; ++n) {
    const auto g = random_table_game(n, rng);
    const auto exact = exact_shapley(g);
    const auto oracle = brute_force_shapley(g);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(exact.phi[i], oracle[i], 1e-10);
    EXPECT_LE(std::abs(exact.efficiency_residual()), 1e-9);
  }
}

TEST(ExactShapley, CapacityCap) {
  const FunctionGame g(17, [](const CoalitionMask&) { return 0.0; });
  EXPECT_THROW(exact_shapley(g), CapacityError);
}

TEST(SampledShapley, AdditiveGameIsExactForAnyT) {
  const auto g = additive_game({1, -2, 3, 0.5, 7});
  for (std::size_t t : {1, 3, 50}) {
    const auto phi = sampled_shapley(g, {t, 99, 1}).phi;
    const std::vector<double> w{1, -2, 3, 0.5, 7};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(phi[i], w[i], 1e-12);
  }
}

TEST(SampledShapley, UnanimityConvergesToExact) {
  const auto phi = sampled_shapley(unanimity_game(4, 0b0011), {2000, 4, 1}).phi;
  EXPECT_NEAR(phi[0], 0.5, 0.05);
  EXPECT_NEAR(phi[1], 0.5, 0.05);
  EXPECT_NEAR(phi[2], 0.0, 0.05);
  EXPECT_NEAR(phi[3], 0.0, 0.05);
}

TEST(SampledShapley, SinglePermutationIsEfficient) {
  SeededRng rng(2);
  const auto g = random_table_game(8, rng);
  const auto m = sampled_shapley(g, {1, 17, 1});
  EXPECT_EQ(m.samples, 1u);
  EXPECT_NEAR(m.efficiency_residual(), 0.0, 1e-12);
  // One permutation's marginals: every entry is a difference of two table values.
  for (double x : m.phi) EXPECT_TRUE(std::isfinite(x));
}

TEST(SampledShapley, EfficiencyHoldsForEveryT) {
  SeededRng rng(8);
  const auto g = random_structured_game(10, rng);
  for (std::size_t t : {1, 2, 7, 33, 100}) {
    EXPECT_NEAR(sampled_shapley(g, {t, t, 1}).efficiency_residual(), 0.0, 1e-10);
  }
}

TEST(SampledShapley, DeterministicAndWorkerIndependent) {
  SeededRng rng(5);
  const auto g = random_structured_game(12, rng);
  const auto a = sampled_shapley(g, {200, 77, 1});
  const auto b = sampled_shapley(g, {200, 77, 1});
  const auto c = sampled_shapley(g, {200, 77, 4});
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.phi, c.phi);
  const auto d = sampled_shapley(g, {200, 78, 1});
  EXPECT_NE(a.phi, d.phi);
}

TEST(SampledShapley, ScalingTheGameScalesPhi) {
  SeededRng rng(6);
  const auto g = random_structured_game(8, rng);
  std::vector<double> scaled(g.values().begin(), g.values().end());
  for (auto& v : scaled) v *= 3.0;
  const TableGame h(8, scaled);
  const auto a = sampled_shapley(g, {64, 1, 1}).phi;
  const auto b = sampled_shapley(h, {64, 1, 1}).phi;
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(b[i], 3.0 * a[i], 1e-12);
}

TEST(Instability, Examples) {
  const auto r = instability(RealVector{1, 0}, RealVector{0, 1});
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  const auto z = instability(RealVector{1, -1}, RealVector{-1, 1});
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.value, std::numeric_limits<double>::infinity());
  EXPECT_EQ(instability(additive_game({1, 2, 3}), 10, 1, 2).value, 0.0);
  EXPECT_THROW(instability(additive_game({1, 2}), 10, 3, 3), ParameterError);
}

TEST(Instability, DecreasesWithSamplesOnSixteenPlayers) {
  const auto g = FunctionGame(16, [](const CoalitionMask& m) {
    return m.contains(0) && m.contains(5) && m.contains(10) ? 1.0 : 0.0;
  });
  double at10 = 0, at100 = 0;
  for (std::uint64_t pair = 0; pair < 20; ++pair) {
    at10 += instability(g, 10, 2 * pair + 1, 2 * pair + 2).value;
    at100 += instability(g, 100, 2 * pair + 1, 2 * pair + 2).value;
  }
  EXPECT_LT(at100, at10);
}

TEST(Axioms, LinearityDummySymmetry) {
  SeededRng rng(12);
  const auto u = random_table_game(5, rng);
  const auto w = random_table_game(5, rng);
  std::vector<double> sum(32);
  for (std::size_t s = 0; s < 32; ++s) sum[s] = u.value(s) + w.value(s);
  const auto pu = exact_shapley(u).phi, pw = exact_shapley(w).phi, ps = exact_shapley(TableGame(5, sum)).phi;
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(ps[i], pu[i] + pw[i], 1e-9);

  // Player 4 never changes the value.
  const auto dummy = TableGame::from_function(5, [&u](std::uint64_t s) { return u.value(s & 0b01111); });
  EXPECT_NEAR(exact_shapley(dummy).phi[4], 0.0, 1e-12);

  // Swapping players 2 and 3 leaves the value unchanged.
  const auto sym = TableGame::from_function(5, [](std::uint64_t s) {
    return static_cast<double>(__builtin_popcountll(s & 0b01100)) * 2.0 + (s & 1 ? 1.5 : 0.0) + (s == 31 ? 4 : 0);
  });
  const auto p = exact_shapley(sym).phi;
  EXPECT_NEAR(p[2], p[3], 1e-9);
}

TEST(Axioms, VerifierSuitePasses) {
  const auto report = verify_axioms(20, 10, 1);
  EXPECT_EQ(report.games, 20u);
  EXPECT_TRUE(report.passed(1e-6)) << report.worst();
}
