#pragma once

#include <span>
#include <string>
#include <vector>

#include "fstx/nets.hpp"

namespace fstx {

struct FstArchitecture {
  std::size_t input_dim = 0;
  std::size_t n_identities = 0;
  std::size_t encoder_hidden = 64;
  std::size_t channels_source = 32;
  std::size_t channels_target = 32;
  std::size_t detect_hidden = 32;
};

/// Source/target feature encoders, channel attention, identity verification
/// heads and the real/fake head over the concatenated irrelevant features.
struct FstModel {
  DenseStack source_encoder;
  DenseStack target_encoder;
  DenseStack attn_source;
  DenseStack attn_target;
  DenseStack head_source_id;
  DenseStack head_target_id;
  DenseStack head_detect;

  static FstModel create(const FstArchitecture& arch, SeededRng& rng);

  /// Checks that all sub-network dims are consistent; throws DimensionError.
  void validate() const;

  std::size_t input_dim() const { return source_encoder.input_dim(); }
  std::size_t channels_source() const { return source_encoder.output_dim(); }
  std::size_t channels_target() const { return target_encoder.output_dim(); }

  static const std::vector<std::string>& section_names();
  std::vector<DenseStack*> sections();
  std::vector<const DenseStack*> sections() const;

  bool operator==(const FstModel& other) const;
};

struct Disentangled {
  RealVector attention;   // in (0, 1)
  RealVector relevant;    // a * f
  RealVector irrelevant;  // (1 - a) * f
};

/// Splits f with a = sigmoid(attn(f)).
Disentangled disentangle(std::span<const double> feature, const DenseStack& attn);
/// Same split with an injected attention vector.
Disentangled disentangle_with(std::span<const double> feature, std::span<const double> attention);

struct DisentangledFeatures {
  Disentangled source;
  Disentangled target;
};

struct FstOutputs {
  RealVector source_logits;
  RealVector target_logits;
  RealVector detect_logits;
  DisentangledFeatures features;
};

FstOutputs forward_fst(const FstModel& model, std::span<const double> input);

struct LossWeights {
  double lambda_source = 0.5;
  double lambda_target = 0.5;
  double lambda_inter = 0.1;

  void validate() const;
};

struct FstLabels {
  int source = 0;
  int target = 0;
  int detect = 0;  // 0 real, 1 fake
};

/// Index of the fake class in detection logits.
inline constexpr std::size_t kFakeClass = 1;

/// Weighted sum of the three per-head cross-entropies, averaged over the batch.
double classification_loss(std::span<const FstOutputs> preds, std::span<const FstLabels> labels,
                           const LossWeights& weights);

/// Negated second difference of the fake-class logit of h over zeroing each
/// irrelevant feature, averaged over the given items.
double interaction_loss(const DenseStack& head, std::span<const RealVector> source_irrelevant,
                        std::span<const RealVector> target_irrelevant);

struct FstLossOptions {
  /// Average the interaction term over fakes only.
  bool interaction_fakes_only = false;
};

struct FstLossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double detect = 0.0;
  double source = 0.0;
  double target = 0.0;
  double interaction = 0.0;
};

double total_loss(const FstModel& model, std::span<const RealVector> inputs, std::span<const FstLabels> labels,
                  const LossWeights& weights, const FstLossOptions& options = {});

struct FstGradients {
  std::vector<StackGradients> sections;  // in section_names() order

  std::vector<std::span<double>> blocks();
};

struct FstLossAndGrad {
  FstLossBreakdown loss;
  FstGradients grads;
};

FstLossAndGrad fst_loss_and_grad(const FstModel& model, std::span<const RealVector> inputs,
                                 std::span<const FstLabels> labels, const LossWeights& weights,
                                 const FstLossOptions& options = {});

std::vector<std::span<double>> parameter_blocks(FstModel& model);

double grad_check(FstModel& model, std::span<const RealVector> inputs, std::span<const FstLabels> labels,
                  const LossWeights& weights, const FstLossOptions& options = {}, double eps = 1e-5,
                  double fraction = 0.05, std::uint64_t seed = 0);

struct FstEpochStats {
  FstLossBreakdown loss;
  double detect_accuracy = 0.0;
  double source_accuracy = 0.0;
  double target_accuracy = 0.0;
};

struct FstTrainResult {
  FstModel model;
  std::vector<FstEpochStats> history;
};

struct FstDataset {
  std::vector<RealVector> inputs;
  std::vector<FstLabels> labels;

  std::size_t size() const noexcept { return inputs.size(); }
};

FstTrainResult train_fst(FstModel model, const FstDataset& data, const TrainConfig& config,
                         const LossWeights& weights, const FstLossOptions& options = {});

double fst_truth_logit(const FstModel& model, std::span<const double> input, int label);

struct FstAccuracy {
  double detect = 0.0;
  double source = 0.0;
  double target = 0.0;
};

FstAccuracy fst_accuracy(const FstModel& model, const FstDataset& data);

}  // namespace fstx
