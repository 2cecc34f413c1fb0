#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fstx/config.hpp"
#include "fstx/fstmetrics.hpp"
#include "fstx/fstnet.hpp"
#include "fstx/nets.hpp"
#include "fstx/report.hpp"
#include "fstx/shapley.hpp"
#include "fstx/synthworld.hpp"

namespace fstx {

// Seed purposes for derive_seed.
enum SeedPurpose : std::uint64_t {
  kWorldSeed = 1,
  kDetectorSeed = 2,
  kSourceSeed = 3,
  kTargetSeed = 4,
  kFstSeed = 5,
  kShapleySeed = 6,
  kUnpairedSeed = 7,
};

enum class IdentityRole { Source, Target };

LabeledSet detection_set(const World& world, std::span<const std::size_t> indices);
/// Identity labels remapped so fakes carry their source (or target) identity.
LabeledSet identity_set(const World& world, std::span<const std::size_t> indices, IdentityRole role);
FstDataset fst_set(const World& world, std::span<const std::size_t> indices);

DenseStack train_detector(const World& world, std::span<const std::size_t> indices, const ExperimentConfig& cfg,
                          std::uint64_t seed);
DenseStack train_identity_encoder(const World& world, std::span<const std::size_t> indices, IdentityRole role,
                                  const ExperimentConfig& cfg, std::uint64_t seed);
FstModel train_fst_model(const World& world, std::span<const std::size_t> indices, const ExperimentConfig& cfg,
                         std::uint64_t seed);

/// World settings used for one experiment seed.
WorldConfig world_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Train samples whose identities all take part in fakes.
std::vector<std::size_t> detector_train_indices(const World& world);

/// Detector, source and target encoders trained on a world's train split.
struct EncoderSet {
  DenseStack detector;
  DenseStack source;
  DenseStack target;
};

EncoderSet train_encoder_set(const World& world, const ExperimentConfig& cfg, std::uint64_t seed);

ImageScorer logit_scorer(const DenseStack& model, int label);
ImageScorer fst_scorer(const FstModel& model, int label);

AttributionMap attribute(const GridImage& image, const ImageScorer& scorer, const ShapleyConfig& shapley,
                         std::uint64_t seed);

/// fake logit minus real logit.
double detection_score(const DenseStack& model, const GridImage& image);
double detection_score(const FstModel& model, const GridImage& image);

struct DetectionMetrics {
  double accuracy = 0.0;
  double frame_auc = 0.0;
  double video_auc = 0.0;
};

/// AUC over per-video-group mean scores.
double video_auc(const World& world, std::span<const std::size_t> indices, std::span<const double> scores);

DetectionMetrics evaluate_detection(const World& world, std::span<const std::size_t> indices,
                                    const std::function<double(const GridImage&)>& score);

/// Test fakes to attribute, spread evenly over the test split.
std::vector<std::size_t> pick_test_fakes(const World& world, std::size_t count);

/// Players of a `grid`-side partition whose cells lie mostly inside `cells`.
std::vector<std::size_t> region_players(const WorldConfig& world, std::span<const std::size_t> cells,
                                        std::size_t grid);

/// Q-bar of one image on unit-normalized maps; degenerate maps give nullopt.
std::optional<QMeanResult> normalized_q(std::span<const double> phi_d, std::span<const double> phi_s,
                                        std::span<const double> phi_t);

ExperimentReport run_hypothesis1(const ExperimentConfig& cfg);
ExperimentReport run_hypothesis2(const ExperimentConfig& cfg);
ExperimentReport run_hypothesis3(const ExperimentConfig& cfg);

struct InstabilityCurve {
  std::vector<std::size_t> samples;
  std::vector<double> mean_instability;
  std::size_t images = 0;
};

/// Mean instability of detection attributions over test images for each T.
InstabilityCurve instability_curve(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t images,
                                   std::span<const std::size_t> sample_counts);

}  // namespace fstx
