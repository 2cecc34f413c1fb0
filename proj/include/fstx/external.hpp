#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fstx/game.hpp"

namespace fstx {

struct ExternalOptions {
  std::chrono::milliseconds timeout{30000};
  /// Only reported through ExternalGame::concurrent_safe(); requests on one
  /// connection are always serialized.
  bool concurrent_safe = false;
  /// Requests in flight during a batch.
  std::size_t window = 64;
};

/// Newline-delimited JSON scorer living in a child process (stdio) or behind
/// a TCP socket.
///   register: {"op":"register","image_id":..,"grids":[[..]..]}   (no reply)
///   score:    {"id":n,"op":"score","image_id":..,"mask":[0|1..],"label":k}
///   reply:    {"id":n,"score":x} or {"id":n,"error":".."}
/// Masks carry one entry per registered grid cell.
class ExternalScorer {
 public:
  /// argv[0] is looked up on PATH.
  static std::unique_ptr<ExternalScorer> spawn(std::vector<std::string> argv, ExternalOptions options = {});
  static std::unique_ptr<ExternalScorer> connect(const std::string& host, std::uint16_t port,
                                                 ExternalOptions options = {});
  ~ExternalScorer();

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  void register_image(const std::string& image_id, const GridImage& image);
  double score(const std::string& image_id, const std::vector<std::uint8_t>& cell_mask, int label);
  /// Pipelined: keeps up to options.window requests outstanding and matches
  /// replies by id, in whatever order they arrive.
  std::vector<double> score_batch(const std::string& image_id, const std::vector<std::vector<std::uint8_t>>& masks,
                                  int label);

  const std::string& endpoint() const noexcept { return endpoint_; }
  const ExternalOptions& options() const noexcept { return options_; }

 private:
  ExternalScorer(int fd, int child, std::string endpoint, ExternalOptions options);

  void send_line(const std::string& line);
  std::string read_line();
  [[noreturn]] void fail_transport(const std::string& what) const;

  int fd_ = -1;
  int child_ = -1;
  std::string endpoint_;
  ExternalOptions options_;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  std::mutex mutex_;
};

/// Coalition game scored remotely. Players are `side` x `side` blocks of the
/// image's cells, expanded to a cell mask per request.
class ExternalGame final : public Game {
 public:
  ExternalGame(ExternalScorer& scorer, std::string image_id, const GridImage& image, int label, std::size_t side);

  std::size_t player_count() const override { return partition_.player_count(); }
  double evaluate(const CoalitionMask& mask) const override;
  void evaluate_batch(std::span<const CoalitionMask> masks, std::span<double> out) const override;
  bool concurrent_safe() const override { return scorer_.options().concurrent_safe; }
  std::optional<GridPartition> partition() const override { return partition_; }

  std::vector<std::uint8_t> cell_mask(const CoalitionMask& mask) const;

 private:
  ExternalScorer& scorer_;
  std::string image_id_;
  int label_;
  GridPartition partition_;
  std::size_t image_side_;
  std::size_t block_;
};

}  // namespace fstx
