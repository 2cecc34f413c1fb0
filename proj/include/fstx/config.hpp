#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "fstx/errors.hpp"
#include "fstx/fstnet.hpp"
#include "fstx/nets.hpp"
#include "fstx/synthworld.hpp"
#include "json.hpp"

namespace fstx {

/// Attribution settings shared by all pipelines.
struct ShapleyConfig {
  std::size_t grid = 8;  // players per side
  std::size_t samples = 100;
  std::size_t workers = 1;
};

struct ExperimentConfig {
  WorldConfig world;
  TrainConfig detector{1e-3, 60, 16, 0, OptimizerKind::Adam};
  TrainConfig encoders{1e-3, 60, 16, 0, OptimizerKind::Adam};
  TrainConfig fst{1e-3, 60, 16, 0, OptimizerKind::Adam};
  std::size_t encoder_hidden = 64;
  FstArchitecture fst_arch{0, 0, 64, 32, 32, 32};
  LossWeights loss_weights;
  bool interaction_fakes_only = false;
  ShapleyConfig shapley;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Test fakes attributed per seed (0 = all).
  std::size_t test_images = 16;
  double real_to_fake_ratio = 1.0;
  std::size_t n_pair_identities = 4;
  double top_fraction = 0.3;
  bool include_fst = true;
  std::size_t workers = 1;
};

/// Reads a JSON object key by key and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context);

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  void finish();

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const FstArchitecture& c);
void from_json(const nlohmann::json& j, FstArchitecture& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const ShapleyConfig& c);
void from_json(const nlohmann::json& j, ShapleyConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);
/// Pretty-printed defaults with a trailing newline.
std::string default_config_text();
/// Stable FNV-1a hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Per-purpose seed derived from an experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose);

}  // namespace fstx
