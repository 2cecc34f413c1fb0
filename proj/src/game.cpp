#include "fstx/game.hpp"

#include <algorithm>
#include <exception>

#include "fstx/errors.hpp"

namespace fstx {

GridPartition::GridPartition(std::size_t side) : side_(side) {
  if (side < 2) throw PartitionError("grid side must be at least 2, got " + std::to_string(side));
}

CoalitionMask::CoalitionMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
}

CoalitionMask CoalitionMask::empty(std::size_t n) { return CoalitionMask(std::vector<std::uint8_t>(n, 0)); }

CoalitionMask CoalitionMask::full(std::size_t n) { return CoalitionMask(std::vector<std::uint8_t>(n, 1)); }

CoalitionMask CoalitionMask::from_word(std::uint64_t word, std::size_t n) {
  if (n > 64) throw CapacityError("from_word supports at most 64 players");
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (word >> i) & 1U;
  return CoalitionMask(std::move(bits));
}

std::size_t CoalitionMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string CoalitionMask::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

std::uint64_t mask_word(const CoalitionMask& mask) {
  if (mask.size() > 64) throw CapacityError("mask_word supports at most 64 players");
  std::uint64_t w = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.contains(i)) w |= std::uint64_t{1} << i;
  }
  return w;
}

GridImage::GridImage(std::size_t side, std::size_t depth)
    : side_(side), depth_(depth), values_(side * side * depth, 0.0) {}

GridImage::GridImage(std::size_t side, std::size_t depth, std::vector<double> values)
    : side_(side), depth_(depth), values_(std::move(values)) {
  if (values_.size() != side * side * depth) {
    throw DimensionError("GridImage: expected " + std::to_string(side * side * depth) +
                         " values, got " + std::to_string(values_.size()));
  }
}

void Game::evaluate_batch(std::span<const CoalitionMask> masks, std::span<double> out) const {
  if (masks.size() != out.size()) throw DimensionError("evaluate_batch: output size mismatch");
  for (std::size_t i = 0; i < masks.size(); ++i) out[i] = evaluate(masks[i]);
}

CoalitionGame::CoalitionGame(GridImage image, ImageScorer scorer, std::size_t side,
                             bool scorer_concurrent_safe)
    : partition_(side),
      image_(std::move(image)),
      scorer_(std::move(scorer)),
      concurrent_safe_(scorer_concurrent_safe),
      block_(0) {
  if (image_.side() == 0 || image_.side() % side != 0) {
    throw PartitionError("image side " + std::to_string(image_.side()) +
                         " does not split evenly into " + std::to_string(side) + "x" +
                         std::to_string(side) + " grids");
  }
  if (!scorer_) throw ParameterError("make_grid_game: scorer is empty");
  block_ = image_.side() / side;
  baseline_ = evaluate(CoalitionMask::empty(partition_.player_count()));
}

GridImage CoalitionGame::masked_image(const CoalitionMask& mask) const {
  if (mask.size() != partition_.player_count()) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(partition_.player_count()) + " players");
  }
  GridImage out = image_;
  const std::size_t img_side = image_.side();
  for (std::size_t r = 0; r < img_side; ++r) {
    for (std::size_t c = 0; c < img_side; ++c) {
      const std::size_t player = partition_.index(r / block_, c / block_);
      if (!mask.contains(player)) {
        auto cell = out.cell(r * img_side + c);
        std::fill(cell.begin(), cell.end(), 0.0);
      }
    }
  }
  return out;
}

double CoalitionGame::evaluate(const CoalitionMask& mask) const {
  GridImage masked = masked_image(mask);
  try {
    return scorer_(masked);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("scorer failed: ") + e.what(), mask.to_string());
  }
}

CoalitionGame make_grid_game(GridImage image, ImageScorer scorer, std::size_t side,
                             bool scorer_concurrent_safe) {
  return CoalitionGame(std::move(image), std::move(scorer), side, scorer_concurrent_safe);
}

TableGame::TableGame(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
  if (n > 24) throw CapacityError("TableGame supports at most 24 players");
  if (values_.size() != (std::size_t{1} << n)) {
    throw DimensionError("TableGame: need 2^n values");
  }
}

TableGame TableGame::from_function(std::size_t n, const std::function<double(std::uint64_t)>& v) {
  if (n > 24) throw CapacityError("TableGame supports at most 24 players");
  std::vector<double> values(std::size_t{1} << n);
  for (std::uint64_t w = 0; w < values.size(); ++w) values[w] = v(w);
  return TableGame(n, std::move(values));
}

double TableGame::evaluate(const CoalitionMask& mask) const {
  if (mask.size() != n_) throw DimensionError("TableGame: mask length mismatch");
  return values_[mask_word(mask)];
}

FunctionGame::FunctionGame(std::size_t n, std::function<double(const CoalitionMask&)> fn,
                           bool concurrent_safe)
    : n_(n), fn_(std::move(fn)), concurrent_safe_(concurrent_safe) {}

}  // namespace fstx
