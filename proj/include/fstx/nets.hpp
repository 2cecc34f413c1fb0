#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fstx/numerics.hpp"

namespace fstx {

enum class Activation { Relu, Sigmoid, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double sigmoid(double x);

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::Identity;
  RealVector weights;  // out_dim x in_dim, row-major
  RealVector bias;     // out_dim
};

/// Gradient buffers shaped like a DenseStack.
struct StackGradients {
  std::vector<RealVector> weights;
  std::vector<RealVector> bias;

  void zero();
  void scale(double factor);
  void add(const StackGradients& other);
};

/// Per-layer activations recorded by a forward pass for backprop.
struct StackTape {
  std::vector<RealVector> inputs;
  std::vector<RealVector> outputs;
};

/// Chain of dense layers, each followed by its activation.
class DenseStack {
 public:
  DenseStack() = default;
  explicit DenseStack(std::vector<DenseLayer> layers);

  /// dims = {input, hidden..., output}; one activation per layer.
  /// He init for relu layers, Xavier otherwise. Relu biases start at 0.01,
  /// the rest at zero.
  static DenseStack create(std::span<const std::size_t> dims, std::span<const Activation> activations,
                           SeededRng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  RealVector forward(std::span<const double> input) const;
  RealVector forward(std::span<const double> input, StackTape& tape) const;
  /// Accumulates parameter gradients into `grads` and returns d loss / d input.
  RealVector backward(const StackTape& tape, std::span<const double> grad_output, StackGradients& grads) const;

  StackGradients zero_gradients() const;
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

  bool operator==(const DenseStack& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

std::vector<std::span<double>> gradient_blocks(StackGradients& grads);

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

/// First-order optimizer over a fixed list of parameter blocks.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<RealVector> m_;
  std::vector<RealVector> v_;
};

struct LabeledSet {
  std::vector<RealVector> inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return inputs.size(); }
};

/// Numerically stable softmax.
RealVector softmax(std::span<const double> logits);
/// -log softmax(logits)[label]; also writes d loss / d logits.
double cross_entropy(std::span<const double> logits, int label, std::span<double> grad_logits);

struct LossAndGrad {
  double loss = 0.0;
  StackGradients grads;
};

/// Mean softmax cross-entropy over the batch with analytic gradients.
LossAndGrad loss_and_grad(const DenseStack& model, std::span<const RealVector> inputs, std::span<const int> labels);

/// Central-difference check on a random `fraction` of the parameters (at least
/// one). Returns max |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
double grad_check(const std::function<double()>& loss, std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic, double eps = 1e-5, double fraction = 0.05,
                  std::uint64_t seed = 0);

// Extended precision pieces for the finite-difference side of grad_check.
using WideVector = std::vector<long double>;
using ReluPattern = std::vector<bool>;

/// Same forward pass in long double. Appends each relu unit's on/off state to
/// `pattern` when given.
WideVector forward_wide(const DenseStack& model, std::span<const long double> input, ReluPattern* pattern = nullptr);
long double cross_entropy_wide(std::span<const long double> logits, int label);

/// Loss for probing; fills the relu pattern when asked so that probes which
/// cross a kink can be skipped and another parameter drawn instead.
using ProbeLoss = std::function<long double(ReluPattern*)>;
double grad_check(const ProbeLoss& loss, std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic, double eps = 1e-5, double fraction = 0.05,
                  std::uint64_t seed = 0);

/// Uses forward_wide for the probes.
double grad_check(DenseStack& model, std::span<const RealVector> inputs, std::span<const int> labels,
                  double eps = 1e-5, double fraction = 0.05, std::uint64_t seed = 0);

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  DenseStack model;
  std::vector<EpochStats> history;
};

/// Minibatch training with a per-epoch shuffle drawn from SeededRng(seed, epoch).
TrainResult train(DenseStack model, const LabeledSet& data, const TrainConfig& config);

double truth_logit(const DenseStack& model, std::span<const double> input, int label);

std::size_t argmax(std::span<const double> v);

double accuracy(const DenseStack& model, const LabeledSet& data);

/// Default encoder: input -> dense(hidden, relu) -> dense(classes).
DenseStack make_encoder(std::size_t input_dim, std::size_t n_classes, SeededRng& rng, std::size_t hidden = 64);

}  // namespace fstx
