#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fstx/shapley.hpp"

namespace fstx {

/// Grids kept as the most source/target-relevant (or top contributors).
/// Always 0 < kept < size.
class RelevanceMask {
 public:
  explicit RelevanceMask(std::vector<std::uint8_t> bits);

  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t kept() const noexcept { return kept_; }
  bool contains(std::size_t i) const { return bits_[i] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const RelevanceMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t kept_ = 0;
};

/// Indices of the k largest entries; equal values resolved toward the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

/// Keeps the k grids with the largest max(phi_s, phi_t).
RelevanceMask relevance_mask(std::span<const double> phi_s, std::span<const double> phi_t, std::size_t k);

/// Mean phi_d off the mask minus mean phi_d on the mask.
double q_metric(std::span<const double> phi_d, const RelevanceMask& mask);

/// Kept-count percentages of the threshold schedule.
inline constexpr int kQSchedulePercent[] = {60, 65, 70, 75, 80, 85, 90, 95};

/// round(percent / 100 * n) in exact integer arithmetic.
std::size_t schedule_count(int percent, std::size_t n);

struct QMeanResult {
  double mean = 0.0;
  std::vector<std::size_t> kept_counts;  // counts actually evaluated, in schedule order
  std::vector<double> values;            // q per kept count
  std::vector<std::string> warnings;     // duplicate or degenerate counts that were skipped
};

/// Averages q_metric over the kept-count schedule.
QMeanResult q_mean(std::span<const double> phi_d, std::span<const double> phi_s,
                   std::span<const double> phi_t);

enum class CompressionLevel { Raw, C23, C40 };

std::string to_string(CompressionLevel level);
CompressionLevel compression_from_string(const std::string& s);

struct StabilityInput {
  RealVector phi_raw;
  std::map<CompressionLevel, RealVector> phi_by_level;
};

struct DeltaResult {
  double value = 0.0;
  std::size_t degenerate_terms = 0;
  std::map<CompressionLevel, double> per_level;
};

/// Mean cosine similarity of each compressed map to the raw map.
DeltaResult delta_stability(const StabilityInput& input);

/// Keeps round(fraction * n) grids with the largest phi.
RelevanceMask top_fraction_mask(std::span<const double> phi, double fraction);

/// |mask and region| / |mask|.
double region_overlap(const RelevanceMask& mask, std::span<const std::size_t> region);

}  // namespace fstx
