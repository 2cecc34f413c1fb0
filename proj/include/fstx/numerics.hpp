#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fstx {

using RealVector = std::vector<double>;

/// Counter-based random stream. Draw i of stream (seed, stream_id) is a pure
/// function of (seed, stream_id, i), so streams can be created per work item
/// and the results do not depend on how work is scheduled.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  double normal() noexcept;
  /// Standard normal truncated to [-limit, limit] by resampling.
  double truncated_normal(double limit) noexcept;
  /// -1 or +1 with equal probability.
  double sign() noexcept;

  /// Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had zero norm
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// a.b / (|a| |b|). Zero-norm inputs yield {0, degenerate=true}.
CosineResult cosine_similarity(std::span<const double> a, std::span<const double> b);

RealVector normalize_unit(std::span<const double> v);

/// Mann-Whitney AUC: fraction of (pos, neg) pairs ordered correctly, ties 0.5.
double rank_auc(std::span<const double> pos, std::span<const double> neg);

bool all_finite(std::span<const double> v) noexcept;

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace fstx
