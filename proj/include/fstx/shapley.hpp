#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fstx/game.hpp"
#include "fstx/numerics.hpp"

namespace fstx {

enum class AttributionMethod { Exact, Sampled };

/// Per-player contributions for one game.
struct AttributionMap {
  std::optional<GridPartition> partition;
  RealVector phi;
  AttributionMethod method = AttributionMethod::Exact;
  std::size_t samples = 0;  // permutations, sampled maps only
  std::uint64_t seed = 0;
  double v_empty = 0.0;
  double v_full = 0.0;

  std::size_t size() const noexcept { return phi.size(); }
  /// sum(phi) - (v(N) - v(empty)).
  double efficiency_residual() const;
};

inline constexpr std::size_t kExactPlayerCap = 16;
inline constexpr std::size_t kDefaultSamples = 100;
/// Permutations per reduction chunk; fixed so results do not depend on the
/// worker count.
inline constexpr std::size_t kPermutationChunk = 32;

AttributionMap exact_shapley(const Game& game);

struct SamplingOptions {
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Monte Carlo Shapley over uniformly random join orders. Permutation t draws
/// from SeededRng(seed, t).
AttributionMap sampled_shapley(const Game& game, const SamplingOptions& options);

struct InstabilityResult {
  double value = 0.0;
  bool degenerate = false;  // |phi1 + phi2| == 0; value is +inf
};

/// |phi1 - phi2| / |phi1 + phi2|.
InstabilityResult instability(std::span<const double> phi1, std::span<const double> phi2);
InstabilityResult instability(const Game& game, std::size_t samples, std::uint64_t seed_a,
                              std::uint64_t seed_b, std::size_t workers = 1);

struct AxiomReport {
  std::size_t games = 0;
  double linearity = 0.0;
  double dummy = 0.0;
  double symmetry = 0.0;
  double efficiency = 0.0;

  double worst() const;
  bool passed(double tolerance = 1e-6) const { return worst() <= tolerance; }
};

/// Builds `game_count` random games with 3..max_players players and checks the
/// four Shapley axioms on exact attributions.
AxiomReport verify_axioms(std::size_t game_count, std::size_t max_players, std::uint64_t seed);

/// Arbitrary game: i.i.d. uniform(-1, 1) value per coalition.
TableGame random_table_game(std::size_t n, SeededRng& rng);

/// Structured game: additive weights plus random pairwise and triple
/// unanimity terms.
TableGame random_structured_game(std::size_t n, SeededRng& rng);

}  // namespace fstx
