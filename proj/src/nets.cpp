#include "fstx/nets.hpp"

#include <algorithm>
#include <cmath>

#include "fstx/errors.hpp"

namespace fstx {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw ParameterError("unknown activation '" + s + "'");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Identity:
      return x;
  }
  return x;
}

// Derivative expressed through the activation output.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::Relu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid:
      return y * (1.0 - y);
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

void apply_layer(const DenseLayer& layer, std::span<const double> x, RealVector& y) {
  y.resize(layer.out_dim);
  const double* w = layer.weights.data();
  for (std::size_t o = 0; o < layer.out_dim; ++o) {
    double s = layer.bias[o];
    const double* row = w + o * layer.in_dim;
    for (std::size_t i = 0; i < layer.in_dim; ++i) s += row[i] * x[i];
    y[o] = activate(layer.activation, s);
  }
}

}  // namespace

void StackGradients::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void StackGradients::scale(double factor) {
  for (auto& w : weights) {
    for (double& x : w) x *= factor;
  }
  for (auto& b : bias) {
    for (double& x : b) x *= factor;
  }
}

void StackGradients::add(const StackGradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t k = 0; k < weights[l].size(); ++k) weights[l][k] += other.weights[l][k];
    for (std::size_t k = 0; k < bias[l].size(); ++k) bias[l][k] += other.bias[l][k];
  }
}

DenseStack::DenseStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.size() != layer.in_dim * layer.out_dim || layer.bias.size() != layer.out_dim) {
      throw DimensionError("layer " + std::to_string(l) + " parameter shapes do not match its dims");
    }
    if (l > 0 && layers_[l - 1].out_dim != layer.in_dim) {
      throw DimensionError("layer " + std::to_string(l) + " input " + std::to_string(layer.in_dim) +
                           " does not chain with previous output " + std::to_string(layers_[l - 1].out_dim));
    }
  }
}

// Keeps zero inputs off the relu kink.
constexpr double kReluBiasInit = 0.01;

DenseStack DenseStack::create(std::span<const std::size_t> dims, std::span<const Activation> activations,
                              SeededRng& rng) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw DimensionError("DenseStack::create: need one activation per layer");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = dims[l];
    layer.out_dim = dims[l + 1];
    layer.activation = activations[l];
    const double fan_in = static_cast<double>(layer.in_dim);
    const double fan_out = static_cast<double>(layer.out_dim);
    const double scale = layer.activation == Activation::Relu ? std::sqrt(2.0 / fan_in) : std::sqrt(2.0 / (fan_in + fan_out));
    layer.weights.resize(layer.in_dim * layer.out_dim);
    for (double& w : layer.weights) w = scale * rng.normal();
    layer.bias.assign(layer.out_dim, layer.activation == Activation::Relu ? kReluBiasInit : 0.0);
    layers.push_back(std::move(layer));
  }
  return DenseStack(std::move(layers));
}

std::size_t DenseStack::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
std::size_t DenseStack::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }

std::size_t DenseStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

RealVector DenseStack::forward(std::span<const double> input) const {
  if (input.size() != input_dim()) {
    throw DimensionError("forward: input length " + std::to_string(input.size()) + " != " + std::to_string(input_dim()));
  }
  RealVector cur(input.begin(), input.end());
  RealVector next;
  for (const auto& layer : layers_) {
    apply_layer(layer, cur, next);
    std::swap(cur, next);
  }
  return cur;
}

RealVector DenseStack::forward(std::span<const double> input, StackTape& tape) const {
  if (input.size() != input_dim()) {
    throw DimensionError("forward: input length " + std::to_string(input.size()) + " != " + std::to_string(input_dim()));
  }
  tape.inputs.resize(layers_.size());
  tape.outputs.resize(layers_.size());
  std::span<const double> cur = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.inputs[l].assign(cur.begin(), cur.end());
    apply_layer(layers_[l], tape.inputs[l], tape.outputs[l]);
    cur = tape.outputs[l];
  }
  return tape.outputs.back();
}

RealVector DenseStack::backward(const StackTape& tape, std::span<const double> grad_output, StackGradients& grads) const {
  if (grad_output.size() != output_dim()) throw DimensionError("backward: gradient length mismatch");
  RealVector upstream(grad_output.begin(), grad_output.end());
  RealVector pre;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const auto& x = tape.inputs[l];
    const auto& y = tape.outputs[l];
    pre.resize(layer.out_dim);
    for (std::size_t o = 0; o < layer.out_dim; ++o) pre[o] = upstream[o] * activation_slope(layer.activation, y[o]);
    auto& gw = grads.weights[l];
    auto& gb = grads.bias[l];
    RealVector down(layer.in_dim, 0.0);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double g = pre[o];
      if (g == 0.0) continue;
      gb[o] += g;
      const double* row = layer.weights.data() + o * layer.in_dim;
      double* grow = gw.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        grow[i] += g * x[i];
        down[i] += g * row[i];
      }
    }
    upstream = std::move(down);
  }
  return upstream;
}

StackGradients DenseStack::zero_gradients() const {
  StackGradients g;
  for (const auto& l : layers_) {
    g.weights.emplace_back(l.weights.size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

std::vector<std::span<double>> DenseStack::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> DenseStack::parameter_blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

bool DenseStack::operator==(const DenseStack& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.in_dim != b.in_dim || a.out_dim != b.out_dim || a.activation != b.activation || a.weights != b.weights ||
        a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

std::vector<std::span<double>> gradient_blocks(StackGradients& grads) {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    out.emplace_back(grads.weights[l]);
    out.emplace_back(grads.bias[l]);
  }
  return out;
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads) {
  if (params.size() != grads.size()) throw DimensionError("optimizer: parameter/gradient block count mismatch");
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t k = 0; k < params[b].size(); ++k) params[b][k] -= lr_ * grads[b][k];
    }
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t k = 0; k < params[b].size(); ++k) {
      const double g = grads[b][k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      params[b][k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

RealVector softmax(std::span<const double> logits) {
  RealVector p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

double cross_entropy(std::span<const double> logits, int label, std::span<double> grad_logits) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                         " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double log_z = mx + std::log(z);
  if (!grad_logits.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) grad_logits[k] = std::exp(logits[k] - log_z);
    grad_logits[static_cast<std::size_t>(label)] -= 1.0;
  }
  return log_z - logits[static_cast<std::size_t>(label)];
}

LossAndGrad loss_and_grad(const DenseStack& model, std::span<const RealVector> inputs, std::span<const int> labels) {
  if (inputs.empty()) throw ParameterError("loss_and_grad: empty batch");
  if (inputs.size() != labels.size()) throw DimensionError("loss_and_grad: inputs/labels size mismatch");
  LossAndGrad out;
  out.grads = model.zero_gradients();
  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  StackTape tape;
  RealVector g(model.output_dim());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const auto logits = model.forward(inputs[b], tape);
    out.loss += cross_entropy(logits, labels[b], g) * inv_b;
    for (double& x : g) x *= inv_b;
    model.backward(tape, g, out.grads);
  }
  return out;
}

WideVector forward_wide(const DenseStack& model, std::span<const long double> input, ReluPattern* pattern) {
  if (input.size() != model.input_dim()) {
    throw DimensionError("forward_wide: input length " + std::to_string(input.size()) + " != " +
                         std::to_string(model.input_dim()));
  }
  WideVector cur(input.begin(), input.end());
  WideVector next;
  for (const auto& layer : model.layers()) {
    next.assign(layer.out_dim, 0.0L);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      long double s = layer.bias[o];
      const double* row = layer.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) s += static_cast<long double>(row[i]) * cur[i];
      switch (layer.activation) {
        case Activation::Relu:
          if (pattern) pattern->push_back(s > 0.0L);
          s = s > 0.0L ? s : 0.0L;
          break;
        case Activation::Sigmoid:
          s = 1.0L / (1.0L + std::exp(-s));
          break;
        case Activation::Identity:
          break;
      }
      next[o] = s;
    }
    std::swap(cur, next);
  }
  return cur;
}

long double cross_entropy_wide(std::span<const long double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                         " classes");
  }
  const long double mx = *std::max_element(logits.begin(), logits.end());
  long double z = 0.0L;
  for (long double x : logits) z += std::exp(x - mx);
  return mx + std::log(z) - logits[static_cast<std::size_t>(label)];
}

double grad_check(const ProbeLoss& loss, std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic, double eps, double fraction, std::uint64_t seed) {
  if (params.size() != analytic.size()) throw DimensionError("grad_check: block count mismatch");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (total == 0) return 0.0;
  const auto picks = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total))));
  // Kink-crossing probes are redrawn, but only up to a budget.
  std::size_t redraws = 10 * picks;
  SeededRng rng(seed, 0x67726164);
  ReluPattern at, up_pattern, down_pattern;
  loss(&at);
  double worst = 0.0;
  for (std::size_t n = 0; n < picks;) {
    std::size_t flat = static_cast<std::size_t>(rng.uniform_index(total));
    std::size_t b = 0;
    while (flat >= params[b].size()) {
      flat -= params[b].size();
      ++b;
    }
    double& theta = params[b][flat];
    const double saved = theta;
    up_pattern.clear();
    down_pattern.clear();
    theta = saved + eps;
    const long double up = loss(&up_pattern);
    theta = saved - eps;
    const long double down = loss(&down_pattern);
    theta = saved;
    if ((up_pattern != at || down_pattern != at) && redraws > 0) {
      --redraws;
      continue;
    }
    ++n;
    const double fd = static_cast<double>((up - down) / (2.0L * static_cast<long double>(eps)));
    const double an = analytic[b][flat];
    worst = std::max(worst, std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd)));
  }
  return worst;
}

double grad_check(const std::function<double()>& loss, std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic, double eps, double fraction, std::uint64_t seed) {
  return grad_check(ProbeLoss([&](ReluPattern*) { return static_cast<long double>(loss()); }), params, analytic, eps,
                    fraction, seed);
}

double grad_check(DenseStack& model, std::span<const RealVector> inputs, std::span<const int> labels, double eps,
                  double fraction, std::uint64_t seed) {
  auto lg = loss_and_grad(model, inputs, labels);
  std::vector<std::span<const double>> analytic;
  for (auto s : gradient_blocks(lg.grads)) analytic.emplace_back(s);
  auto params = model.parameter_blocks();
  const ProbeLoss probe = [&](ReluPattern* pattern) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const WideVector x(inputs[i].begin(), inputs[i].end());
      acc += cross_entropy_wide(forward_wide(model, x, pattern), labels[i]);
    }
    return acc / static_cast<long double>(inputs.size());
  };
  return grad_check(probe, params, analytic, eps, fraction, seed);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double accuracy(const DenseStack& model, const LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(argmax(model.forward(data.inputs[i]))) == data.labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

TrainResult train(DenseStack model, const LabeledSet& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw TrainingError("train: empty dataset");
  if (data.inputs.size() != data.labels.size()) throw DimensionError("train: inputs/labels size mismatch");
  TrainResult result;
  Optimizer opt(config.optimizer, config.learning_rate);
  auto grads = model.zero_gradients();
  StackTape tape;
  RealVector g(model.output_dim());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SeededRng rng(config.seed, epoch);
    const auto order = rng.permutation(data.size());
    double epoch_loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto logits = model.forward(data.inputs[i], tape);
        if (static_cast<int>(argmax(logits)) == data.labels[i]) ++hits;
        const double l = cross_entropy(logits, data.labels[i], g);
        epoch_loss += l;
        for (double& x : g) x *= inv_b;
        model.backward(tape, g, grads);
      }
      auto params = model.parameter_blocks();
      auto gblocks = gradient_blocks(grads);
      opt.step(params, gblocks);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    result.history.push_back({epoch_loss, static_cast<double>(hits) / static_cast<double>(data.size())});
  }
  result.model = std::move(model);
  return result;
}

double truth_logit(const DenseStack& model, std::span<const double> input, int label) {
  const auto logits = model.forward(input);
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("truth_logit: label " + std::to_string(label) + " out of range");
  }
  return logits[static_cast<std::size_t>(label)];
}

DenseStack make_encoder(std::size_t input_dim, std::size_t n_classes, SeededRng& rng, std::size_t hidden) {
  const std::size_t dims[] = {input_dim, hidden, n_classes};
  const Activation acts[] = {Activation::Relu, Activation::Identity};
  return DenseStack::create(dims, acts, rng);
}

}  // namespace fstx
