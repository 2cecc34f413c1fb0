#include "fstx/fstmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fstx/errors.hpp"

namespace fstx {

RelevanceMask::RelevanceMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
  kept_ = static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  if (kept_ == 0 || kept_ == bits_.size()) {
    throw ParameterError("relevance mask must keep between 1 and n-1 grids, kept " +
                         std::to_string(kept_) + " of " + std::to_string(bits_.size()));
  }
}

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

namespace {

RelevanceMask mask_from_top(std::span<const double> score, std::size_t k) {
  if (k == 0 || k >= score.size()) {
    throw ParameterError("kept count " + std::to_string(k) + " out of range (0, " +
                         std::to_string(score.size()) + ")");
  }
  std::vector<std::uint8_t> bits(score.size(), 0);
  for (auto i : top_k_indices(score, k)) bits[i] = 1;
  return RelevanceMask(std::move(bits));
}

}  // namespace

RelevanceMask relevance_mask(std::span<const double> phi_s, std::span<const double> phi_t, std::size_t k) {
  if (phi_s.size() != phi_t.size()) throw DimensionError("relevance_mask: map length mismatch");
  std::vector<double> best(phi_s.size());
  for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(phi_s[i], phi_t[i]);
  return mask_from_top(best, k);
}

double q_metric(std::span<const double> phi_d, const RelevanceMask& mask) {
  if (phi_d.size() != mask.size()) throw DimensionError("q_metric: map and mask length differ");
  double on = 0.0;
  double off = 0.0;
  for (std::size_t i = 0; i < phi_d.size(); ++i) (mask.contains(i) ? on : off) += phi_d[i];
  const auto k = static_cast<double>(mask.kept());
  const auto rest = static_cast<double>(mask.size() - mask.kept());
  return off / rest - on / k;
}

std::size_t schedule_count(int percent, std::size_t n) {
  return (static_cast<std::size_t>(percent) * n + 50) / 100;
}

QMeanResult q_mean(std::span<const double> phi_d, std::span<const double> phi_s,
                   std::span<const double> phi_t) {
  if (phi_d.size() != phi_s.size() || phi_d.size() != phi_t.size()) {
    throw DimensionError("q_mean: map lengths differ");
  }
  const std::size_t n = phi_d.size();
  QMeanResult out;
  for (int percent : kQSchedulePercent) {
    const std::size_t k = schedule_count(percent, n);
    if (k == 0 || k >= n) {
      out.warnings.push_back("skipped " + std::to_string(percent) + "%: kept count " +
                             std::to_string(k) + " is degenerate for " + std::to_string(n) + " grids");
      continue;
    }
    if (std::find(out.kept_counts.begin(), out.kept_counts.end(), k) != out.kept_counts.end()) {
      out.warnings.push_back("skipped " + std::to_string(percent) + "%: kept count " +
                             std::to_string(k) + " already evaluated");
      continue;
    }
    out.kept_counts.push_back(k);
    out.values.push_back(q_metric(phi_d, relevance_mask(phi_s, phi_t, k)));
  }
  if (out.values.empty()) throw ParameterError("q_mean: no usable kept count for " + std::to_string(n) + " grids");
  out.mean = mean(out.values);
  return out;
}

std::string to_string(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::Raw:
      return "raw";
    case CompressionLevel::C23:
      return "c23";
    case CompressionLevel::C40:
      return "c40";
  }
  return "raw";
}

CompressionLevel compression_from_string(const std::string& s) {
  if (s == "raw") return CompressionLevel::Raw;
  if (s == "c23") return CompressionLevel::C23;
  if (s == "c40") return CompressionLevel::C40;
  throw ParameterError("unknown compression level '" + s + "'");
}

DeltaResult delta_stability(const StabilityInput& input) {
  if (input.phi_by_level.empty()) throw ParameterError("delta_stability: no compressed maps");
  DeltaResult out;
  double total = 0.0;
  for (const auto& [level, phi] : input.phi_by_level) {
    if (level == CompressionLevel::Raw) throw ParameterError("delta_stability: raw is not a compression level");
    const auto c = cosine_similarity(phi, input.phi_raw);
    if (c.degenerate) ++out.degenerate_terms;
    out.per_level[level] = c.value;
    total += c.value;
  }
  out.value = total / static_cast<double>(input.phi_by_level.size());
  return out;
}

RelevanceMask top_fraction_mask(std::span<const double> phi, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("top_fraction_mask: fraction must be in (0, 1)");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(phi.size())));
  return mask_from_top(phi, k);
}

double region_overlap(const RelevanceMask& mask, std::span<const std::size_t> region) {
  std::size_t hit = 0;
  for (auto i : region) {
    if (i < mask.size() && mask.contains(i)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(mask.kept());
}

}  // namespace fstx
