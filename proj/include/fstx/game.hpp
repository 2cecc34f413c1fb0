#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fstx {

/// L x L grid of players, indexed row-major.
class GridPartition {
 public:
  explicit GridPartition(std::size_t side);

  std::size_t side() const noexcept { return side_; }
  std::size_t player_count() const noexcept { return side_ * side_; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * side_ + col; }

  bool operator==(const GridPartition&) const = default;

 private:
  std::size_t side_;
};

/// Present/absent flag per player.
class CoalitionMask {
 public:
  CoalitionMask() = default;
  explicit CoalitionMask(std::vector<std::uint8_t> bits);

  static CoalitionMask empty(std::size_t n);
  static CoalitionMask full(std::size_t n);
  /// Bit i of `word` becomes player i. n <= 64.
  static CoalitionMask from_word(std::uint64_t word, std::size_t n);

  std::size_t size() const noexcept { return bits_.size(); }
  bool contains(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool present) { bits_[i] = present ? 1 : 0; }
  std::size_t count() const noexcept;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::string to_string() const;

  bool operator==(const CoalitionMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Side x side cells with `depth` features each; cell-major storage.
class GridImage {
 public:
  GridImage() = default;
  GridImage(std::size_t side, std::size_t depth);
  GridImage(std::size_t side, std::size_t depth, std::vector<double> values);

  std::size_t side() const noexcept { return side_; }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t cell_count() const noexcept { return side_ * side_; }

  std::span<double> cell(std::size_t index) { return {values_.data() + index * depth_, depth_}; }
  std::span<const double> cell(std::size_t index) const {
    return {values_.data() + index * depth_, depth_};
  }
  std::span<const double> flat() const noexcept { return values_; }
  std::span<double> flat() noexcept { return values_; }

  bool operator==(const GridImage&) const = default;

 private:
  std::size_t side_ = 0;
  std::size_t depth_ = 0;
  std::vector<double> values_;
};

/// Characteristic function v(S) over n players.
class Game {
 public:
  virtual ~Game() = default;

  virtual std::size_t player_count() const = 0;
  virtual double evaluate(const CoalitionMask& mask) const = 0;
  /// Evaluates several coalitions at once. Remote scorers override this to
  /// pipeline requests.
  virtual void evaluate_batch(std::span<const CoalitionMask> masks, std::span<double> out) const;
  /// Whether evaluate() may be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
  virtual std::optional<GridPartition> partition() const { return std::nullopt; }
};

/// Score of a (possibly masked) image, e.g. a ground-truth logit.
using ImageScorer = std::function<double(const GridImage&)>;

/// Image + scorer as a game over L x L grid players. Absent grids are zeroed.
/// Each player covers a (image.side / L)^2 block of cells.
class CoalitionGame final : public Game {
 public:
  CoalitionGame(GridImage image, ImageScorer scorer, std::size_t side, bool scorer_concurrent_safe);

  std::size_t player_count() const override { return partition_.player_count(); }
  double evaluate(const CoalitionMask& mask) const override;
  bool concurrent_safe() const override { return concurrent_safe_; }
  std::optional<GridPartition> partition() const override { return partition_; }

  double baseline_score() const noexcept { return baseline_; }
  const GridImage& base_image() const noexcept { return image_; }
  GridImage masked_image(const CoalitionMask& mask) const;

 private:
  GridPartition partition_;
  GridImage image_;
  ImageScorer scorer_;
  bool concurrent_safe_;
  std::size_t block_;
  double baseline_ = 0.0;
};

CoalitionGame make_grid_game(GridImage image, ImageScorer scorer, std::size_t side,
                             bool scorer_concurrent_safe = true);

/// Explicit table of 2^n values indexed by coalition bit word.
class TableGame final : public Game {
 public:
  TableGame(std::size_t n, std::vector<double> values);

  static TableGame from_function(std::size_t n, const std::function<double(std::uint64_t)>& v);

  std::size_t player_count() const override { return n_; }
  double evaluate(const CoalitionMask& mask) const override;
  double value(std::uint64_t word) const { return values_[word]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t n_;
  std::vector<double> values_;
};

/// Wraps an arbitrary callable over masks.
class FunctionGame final : public Game {
 public:
  FunctionGame(std::size_t n, std::function<double(const CoalitionMask&)> fn,
               bool concurrent_safe = true);

  std::size_t player_count() const override { return n_; }
  double evaluate(const CoalitionMask& mask) const override { return fn_(mask); }
  bool concurrent_safe() const override { return concurrent_safe_; }

 private:
  std::size_t n_;
  std::function<double(const CoalitionMask&)> fn_;
  bool concurrent_safe_;
};

std::uint64_t mask_word(const CoalitionMask& mask);

}  // namespace fstx
