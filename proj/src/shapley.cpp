#include "fstx/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <thread>

#include "fstx/errors.hpp"

namespace fstx {

double AttributionMap::efficiency_residual() const {
  double s = 0.0;
  for (double x : phi) s += x;
  return s - (v_full - v_empty);
}

AttributionMap exact_shapley(const Game& game) {
  const std::size_t n = game.player_count();
  if (n == 0) throw ParameterError("exact_shapley: game has no players");
  if (n > kExactPlayerCap) {
    throw CapacityError("exact_shapley: " + std::to_string(n) + " players exceeds the cap of " +
                        std::to_string(kExactPlayerCap) + "; use sampled_shapley");
  }
  const std::size_t total = std::size_t{1} << n;
  std::vector<double> v(total);
  {
    constexpr std::size_t kBatch = 256;
    std::vector<CoalitionMask> masks;
    masks.reserve(kBatch);
    for (std::size_t start = 0; start < total; start += kBatch) {
      const std::size_t end = std::min(total, start + kBatch);
      masks.clear();
      for (std::size_t w = start; w < end; ++w) masks.push_back(CoalitionMask::from_word(w, n));
      game.evaluate_batch(masks, std::span<double>(v.data() + start, end - start));
    }
  }

  // weight[s] = s! (n-1-s)! / n!
  std::vector<double> weight(n);
  weight[0] = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s + 1 < n; ++s) {
    weight[s + 1] = weight[s] * static_cast<double>(s + 1) / static_cast<double>(n - 1 - s);
  }

  AttributionMap map;
  map.partition = game.partition();
  map.method = AttributionMethod::Exact;
  map.phi.assign(n, 0.0);
  map.v_empty = v[0];
  map.v_full = v[total - 1];
  for (std::size_t w = 0; w < total; ++w) {
    const double w_s = weight[std::min<std::size_t>(std::popcount(w), n - 1)];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      if (w & bit) continue;
      map.phi[i] += w_s * (v[w | bit] - v[w]);
    }
  }
  return map;
}

namespace {

struct ChunkResult {
  std::vector<double> sum;
  double v_empty = 0.0;
  double v_full = 0.0;
};

void run_chunk(const Game& game, std::uint64_t seed, std::size_t first, std::size_t last,
               ChunkResult& out) {
  const std::size_t n = game.player_count();
  out.sum.assign(n, 0.0);
  std::vector<CoalitionMask> prefixes(n + 1);
  std::vector<double> values(n + 1);
  for (std::size_t t = first; t < last; ++t) {
    SeededRng rng(seed, t);
    const auto order = rng.permutation(n);
    CoalitionMask m = CoalitionMask::empty(n);
    prefixes[0] = m;
    for (std::size_t k = 0; k < n; ++k) {
      m.set(order[k], true);
      prefixes[k + 1] = m;
    }
    game.evaluate_batch(prefixes, values);
    for (std::size_t k = 0; k < n; ++k) out.sum[order[k]] += values[k + 1] - values[k];
    out.v_empty = values[0];
    out.v_full = values[n];
  }
}

}  // namespace

AttributionMap sampled_shapley(const Game& game, const SamplingOptions& options) {
  const std::size_t n = game.player_count();
  if (n == 0) throw ParameterError("sampled_shapley: game has no players");
  if (options.samples == 0) throw ParameterError("sampled_shapley: need at least one permutation");

  const std::size_t chunks = (options.samples + kPermutationChunk - 1) / kPermutationChunk;
  std::vector<ChunkResult> results(chunks);
  auto chunk_range = [&](std::size_t c) {
    const std::size_t first = c * kPermutationChunk;
    return std::pair{first, std::min(options.samples, first + kPermutationChunk)};
  };

  std::size_t workers = game.concurrent_safe() ? std::max<std::size_t>(1, options.workers) : 1;
  workers = std::min(workers, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [first, last] = chunk_range(c);
      run_chunk(game, options.seed, first, last, results[c]);
    }
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < chunks; c += workers) {
            auto [first, last] = chunk_range(c);
            run_chunk(game, options.seed, first, last, results[c]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  AttributionMap map;
  map.partition = game.partition();
  map.method = AttributionMethod::Sampled;
  map.samples = options.samples;
  map.seed = options.seed;
  map.phi.assign(n, 0.0);
  for (const auto& r : results) {
    for (std::size_t i = 0; i < n; ++i) map.phi[i] += r.sum[i];
  }
  for (double& x : map.phi) x /= static_cast<double>(options.samples);
  map.v_empty = results.front().v_empty;
  map.v_full = results.front().v_full;
  return map;
}

InstabilityResult instability(std::span<const double> phi1, std::span<const double> phi2) {
  if (phi1.size() != phi2.size()) throw DimensionError("instability: map length mismatch");
  double diff = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < phi1.size(); ++i) {
    diff += (phi1[i] - phi2[i]) * (phi1[i] - phi2[i]);
    sum += (phi1[i] + phi2[i]) * (phi1[i] + phi2[i]);
  }
  if (sum == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {std::sqrt(diff) / std::sqrt(sum), false};
}

InstabilityResult instability(const Game& game, std::size_t samples, std::uint64_t seed_a,
                              std::uint64_t seed_b, std::size_t workers) {
  if (seed_a == seed_b) throw ParameterError("instability: seeds must differ");
  const auto a = sampled_shapley(game, {samples, seed_a, workers});
  const auto b = sampled_shapley(game, {samples, seed_b, workers});
  return instability(a.phi, b.phi);
}

double AxiomReport::worst() const { return std::max({linearity, dummy, symmetry, efficiency}); }

TableGame random_table_game(std::size_t n, SeededRng& rng) {
  return TableGame::from_function(n, [&](std::uint64_t) { return 2.0 * rng.uniform() - 1.0; });
}

TableGame random_structured_game(std::size_t n, SeededRng& rng) {
  struct Term {
    std::uint64_t members;
    double coef;
  };
  std::vector<Term> terms;
  for (std::size_t i = 0; i < n; ++i) terms.push_back({std::uint64_t{1} << i, 2.0 * rng.uniform() - 1.0});
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = rng.uniform_index(n);
    auto b = rng.uniform_index(n);
    while (b == a) b = rng.uniform_index(n);
    terms.push_back({(std::uint64_t{1} << a) | (std::uint64_t{1} << b), rng.uniform() - 0.5});
  }
  for (std::size_t k = 0; k < n / 3; ++k) {
    const auto p = rng.permutation(n);
    terms.push_back({(std::uint64_t{1} << p[0]) | (std::uint64_t{1} << p[1]) | (std::uint64_t{1} << p[2]),
                     rng.uniform() - 0.5});
  }
  return TableGame::from_function(n, [&](std::uint64_t w) {
    double v = 0.0;
    for (const auto& t : terms) {
      if ((w & t.members) == t.members) v += t.coef;
    }
    return v;
  });
}

AxiomReport verify_axioms(std::size_t game_count, std::size_t max_players, std::uint64_t seed) {
  if (max_players < 3 || max_players > kExactPlayerCap) {
    throw ParameterError("verify_axioms: max_players must be in [3, 16]");
  }
  AxiomReport report;
  auto track_efficiency = [&](const AttributionMap& m) {
    report.efficiency = std::max(report.efficiency, std::abs(m.efficiency_residual()));
  };

  for (std::size_t g = 0; g < game_count; ++g) {
    SeededRng rng(seed, g);
    const std::size_t n = 3 + g % (max_players - 2);
    const TableGame u = random_table_game(n, rng);
    const TableGame w = random_table_game(n, rng);
    const TableGame sum = TableGame::from_function(n, [&](std::uint64_t s) { return u.value(s) + w.value(s); });

    const auto phi_u = exact_shapley(u);
    const auto phi_w = exact_shapley(w);
    const auto phi_sum = exact_shapley(sum);
    for (const auto* m : {&phi_u, &phi_w, &phi_sum}) track_efficiency(*m);
    for (std::size_t i = 0; i < n; ++i) {
      report.linearity = std::max(report.linearity, std::abs(phi_sum.phi[i] - phi_u.phi[i] - phi_w.phi[i]));
    }

    // Player d contributes a constant c to every coalition it joins.
    const auto d = static_cast<std::size_t>(rng.uniform_index(n));
    const double c = 2.0 * rng.uniform() - 1.0;
    const std::uint64_t d_bit = std::uint64_t{1} << d;
    const TableGame dummy = TableGame::from_function(
        n, [&](std::uint64_t s) { return u.value(s & ~d_bit) + ((s & d_bit) ? c : 0.0); });
    const auto phi_dummy = exact_shapley(dummy);
    track_efficiency(phi_dummy);
    report.dummy = std::max(report.dummy, std::abs(phi_dummy.phi[d] - (dummy.value(d_bit) - dummy.value(0))));

    // Symmetrize u over a swap of players i and j.
    const auto i = static_cast<std::size_t>(rng.uniform_index(n));
    auto j = static_cast<std::size_t>(rng.uniform_index(n));
    while (j == i) j = static_cast<std::size_t>(rng.uniform_index(n));
    auto swap_ij = [&](std::uint64_t s) {
      const std::uint64_t bi = (s >> i) & 1U;
      const std::uint64_t bj = (s >> j) & 1U;
      s &= ~((std::uint64_t{1} << i) | (std::uint64_t{1} << j));
      return s | (bi << j) | (bj << i);
    };
    const TableGame sym = TableGame::from_function(
        n, [&](std::uint64_t s) { return 0.5 * (u.value(s) + u.value(swap_ij(s))); });
    const auto phi_sym = exact_shapley(sym);
    track_efficiency(phi_sym);
    report.symmetry = std::max(report.symmetry, std::abs(phi_sym.phi[i] - phi_sym.phi[j]));
    ++report.games;
  }
  return report;
}

}  // namespace fstx
