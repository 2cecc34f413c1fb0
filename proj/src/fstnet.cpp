#include "fstx/fstnet.hpp"

#include <algorithm>
#include <cmath>

#include "fstx/errors.hpp"

namespace fstx {

namespace {

constexpr double kDisentangleTolerance = 1e-12;

struct SampleTape {
  StackTape enc_s, enc_t, att_s, att_t, head_s, head_t, det;
  RealVector f_s, f_t;
  Disentangled ds, dt;
  RealVector z;
  RealVector ys, yt, yd;
};

Disentangled split(std::span<const double> f, RealVector attention) {
  Disentangled d;
  d.attention = std::move(attention);
  d.relevant.resize(f.size());
  d.irrelevant.resize(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    d.relevant[k] = d.attention[k] * f[k];
    d.irrelevant[k] = (1.0 - d.attention[k]) * f[k];
  }
  return d;
}

Disentangled disentangle_taped(std::span<const double> f, const DenseStack& attn, StackTape& tape) {
  RealVector pre = attn.forward(f, tape);
  for (double& x : pre) x = sigmoid(x);
  return split(f, std::move(pre));
}

RealVector concat(std::span<const double> a, std::span<const double> b) {
  RealVector z(a.begin(), a.end());
  z.insert(z.end(), b.begin(), b.end());
  return z;
}

void run_forward(const FstModel& m, std::span<const double> x, SampleTape& t) {
  t.f_s = m.source_encoder.forward(x, t.enc_s);
  t.f_t = m.target_encoder.forward(x, t.enc_t);
  t.ds = disentangle_taped(t.f_s, m.attn_source, t.att_s);
  t.dt = disentangle_taped(t.f_t, m.attn_target, t.att_t);
  t.ys = m.head_source_id.forward(t.ds.relevant, t.head_s);
  t.yt = m.head_target_id.forward(t.dt.relevant, t.head_t);
  t.z = concat(t.ds.irrelevant, t.dt.irrelevant);
  t.yd = m.head_detect.forward(t.z, t.det);
}

double second_difference(const DenseStack& head, std::span<const double> s, std::span<const double> t) {
  const RealVector zs(s.size(), 0.0);
  const RealVector zt(t.size(), 0.0);
  const double full = head.forward(concat(s, t))[kFakeClass];
  const double only_t = head.forward(concat(zs, t))[kFakeClass];
  const double only_s = head.forward(concat(s, zt))[kFakeClass];
  const double none = head.forward(concat(zs, zt))[kFakeClass];
  return full - only_t - only_s + none;
}

// Back through f_r = a * f, f_ir = (1 - a) * f, a = sigmoid(attn(f)); returns d/df.
RealVector disentangle_backward(const DenseStack& attn, const StackTape& tape, std::span<const double> f,
                                const Disentangled& d, std::span<const double> g_rel, std::span<const double> g_irr,
                                StackGradients& attn_grads) {
  RealVector df(f.size());
  RealVector dpre(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double a = d.attention[k];
    df[k] = a * g_rel[k] + (1.0 - a) * g_irr[k];
    dpre[k] = f[k] * (g_rel[k] - g_irr[k]) * a * (1.0 - a);
  }
  const RealVector via_attn = attn.backward(tape, dpre, attn_grads);
  for (std::size_t k = 0; k < f.size(); ++k) df[k] += via_attn[k];
  return df;
}

void check_disentangle(const Disentangled& d, std::span<const double> f) {
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (std::abs(d.relevant[k] + d.irrelevant[k] - f[k]) > kDisentangleTolerance * std::max(1.0, std::abs(f[k]))) {
      throw TrainingError("disentanglement identity violated at channel " + std::to_string(k));
    }
  }
}

}  // namespace

FstModel FstModel::create(const FstArchitecture& arch, SeededRng& rng) {
  if (arch.input_dim == 0 || arch.n_identities < 2) throw DimensionError("FstModel: bad architecture");
  const Activation relu = Activation::Relu;
  const Activation id = Activation::Identity;
  FstModel m;
  {
    const std::size_t dims[] = {arch.input_dim, arch.encoder_hidden, arch.channels_source};
    const Activation acts[] = {relu, relu};
    m.source_encoder = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.input_dim, arch.encoder_hidden, arch.channels_target};
    const Activation acts[] = {relu, relu};
    m.target_encoder = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.channels_source, arch.channels_source, arch.channels_source};
    const Activation acts[] = {relu, id};
    m.attn_source = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.channels_target, arch.channels_target, arch.channels_target};
    const Activation acts[] = {relu, id};
    m.attn_target = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.channels_source, arch.n_identities};
    const Activation acts[] = {id};
    m.head_source_id = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.channels_target, arch.n_identities};
    const Activation acts[] = {id};
    m.head_target_id = DenseStack::create(dims, acts, rng);
  }
  {
    const std::size_t dims[] = {arch.channels_source + arch.channels_target, arch.detect_hidden, 2};
    const Activation acts[] = {relu, id};
    m.head_detect = DenseStack::create(dims, acts, rng);
  }
  return m;
}

void FstModel::validate() const {
  const std::size_t cs = source_encoder.output_dim();
  const std::size_t ct = target_encoder.output_dim();
  if (source_encoder.input_dim() != target_encoder.input_dim()) throw DimensionError("encoders disagree on input dim");
  if (attn_source.input_dim() != cs || attn_source.output_dim() != cs) throw DimensionError("attn_source dims must equal C_s");
  if (attn_target.input_dim() != ct || attn_target.output_dim() != ct) throw DimensionError("attn_target dims must equal C_t");
  if (head_source_id.input_dim() != cs) throw DimensionError("head_source_id input must equal C_s");
  if (head_target_id.input_dim() != ct) throw DimensionError("head_target_id input must equal C_t");
  if (head_detect.input_dim() != cs + ct) throw DimensionError("head_detect input must equal C_s + C_t");
  if (head_detect.output_dim() != 2) throw DimensionError("head_detect must produce 2 logits");
}

const std::vector<std::string>& FstModel::section_names() {
  static const std::vector<std::string> names = {"source_encoder", "target_encoder", "attn_source", "attn_target",
                                                 "head_source_id", "head_target_id", "head_detect"};
  return names;
}

std::vector<DenseStack*> FstModel::sections() {
  return {&source_encoder, &target_encoder, &attn_source, &attn_target, &head_source_id, &head_target_id, &head_detect};
}

std::vector<const DenseStack*> FstModel::sections() const {
  return {&source_encoder, &target_encoder, &attn_source, &attn_target, &head_source_id, &head_target_id, &head_detect};
}

bool FstModel::operator==(const FstModel& other) const {
  const auto a = sections();
  const auto b = other.sections();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return true;
}

Disentangled disentangle(std::span<const double> feature, const DenseStack& attn) {
  if (attn.input_dim() != feature.size() || attn.output_dim() != feature.size()) {
    throw DimensionError("disentangle: attention dims do not match feature length " + std::to_string(feature.size()));
  }
  RealVector pre = attn.forward(feature);
  for (double& x : pre) x = sigmoid(x);
  return split(feature, std::move(pre));
}

Disentangled disentangle_with(std::span<const double> feature, std::span<const double> attention) {
  if (attention.size() != feature.size()) throw DimensionError("disentangle_with: attention length mismatch");
  return split(feature, RealVector(attention.begin(), attention.end()));
}

FstOutputs forward_fst(const FstModel& model, std::span<const double> input) {
  if (input.size() != model.input_dim()) {
    throw DimensionError("forward_fst: input length " + std::to_string(input.size()) + " != " +
                         std::to_string(model.input_dim()));
  }
  FstOutputs out;
  const RealVector f_s = model.source_encoder.forward(input);
  const RealVector f_t = model.target_encoder.forward(input);
  out.features.source = disentangle(f_s, model.attn_source);
  out.features.target = disentangle(f_t, model.attn_target);
  out.source_logits = model.head_source_id.forward(out.features.source.relevant);
  out.target_logits = model.head_target_id.forward(out.features.target.relevant);
  out.detect_logits = model.head_detect.forward(concat(out.features.source.irrelevant, out.features.target.irrelevant));
  return out;
}

void LossWeights::validate() const {
  for (double w : {lambda_source, lambda_target, lambda_inter}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

double classification_loss(std::span<const FstOutputs> preds, std::span<const FstLabels> labels,
                           const LossWeights& weights) {
  if (preds.empty()) throw ParameterError("classification_loss: empty batch");
  if (preds.size() != labels.size()) throw DimensionError("classification_loss: preds/labels size mismatch");
  double det = 0.0, src = 0.0, tgt = 0.0;
  for (std::size_t b = 0; b < preds.size(); ++b) {
    det += cross_entropy(preds[b].detect_logits, labels[b].detect, {});
    src += cross_entropy(preds[b].source_logits, labels[b].source, {});
    tgt += cross_entropy(preds[b].target_logits, labels[b].target, {});
  }
  const double n = static_cast<double>(preds.size());
  return det / n + weights.lambda_source * src / n + weights.lambda_target * tgt / n;
}

double interaction_loss(const DenseStack& head, std::span<const RealVector> source_irrelevant,
                        std::span<const RealVector> target_irrelevant) {
  if (source_irrelevant.size() != target_irrelevant.size()) throw DimensionError("interaction_loss: batch mismatch");
  if (source_irrelevant.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t b = 0; b < source_irrelevant.size(); ++b) {
    if (source_irrelevant[b].size() + target_irrelevant[b].size() != head.input_dim()) {
      throw DimensionError("interaction_loss: feature dims do not match the head input");
    }
    acc += second_difference(head, source_irrelevant[b], target_irrelevant[b]);
  }
  return -acc / static_cast<double>(source_irrelevant.size());
}

std::vector<std::span<double>> FstGradients::blocks() {
  std::vector<std::span<double>> out;
  for (auto& s : sections) {
    for (auto b : gradient_blocks(s)) out.push_back(b);
  }
  return out;
}

std::vector<std::span<double>> parameter_blocks(FstModel& model) {
  std::vector<std::span<double>> out;
  for (auto* s : model.sections()) {
    for (auto b : s->parameter_blocks()) out.push_back(b);
  }
  return out;
}

FstLossAndGrad fst_loss_and_grad(const FstModel& model, std::span<const RealVector> inputs,
                                 std::span<const FstLabels> labels, const LossWeights& weights,
                                 const FstLossOptions& options) {
  if (inputs.empty()) throw ParameterError("fst_loss_and_grad: empty batch");
  if (inputs.size() != labels.size()) throw DimensionError("fst_loss_and_grad: inputs/labels size mismatch");
  model.validate();

  FstLossAndGrad out;
  for (const auto* s : model.sections()) out.grads.sections.push_back(s->zero_gradients());
  auto& g_enc_s = out.grads.sections[0];
  auto& g_enc_t = out.grads.sections[1];
  auto& g_att_s = out.grads.sections[2];
  auto& g_att_t = out.grads.sections[3];
  auto& g_head_s = out.grads.sections[4];
  auto& g_head_t = out.grads.sections[5];
  auto& g_det = out.grads.sections[6];

  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  std::size_t inter_count = inputs.size();
  if (options.interaction_fakes_only) {
    inter_count = static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](const FstLabels& l) { return l.detect == 1; }));
  }
  const double inter_w = inter_count ? weights.lambda_inter / static_cast<double>(inter_count) : 0.0;
  const std::size_t cs = model.channels_source();
  const std::size_t ct = model.channels_target();

  SampleTape t;
  StackTape tape_0t, tape_s0, tape_00;
  RealVector g_d(2), g_s(model.head_source_id.output_dim()), g_t(model.head_target_id.output_dim());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    run_forward(model, inputs[b], t);
    const double ce_d = cross_entropy(t.yd, labels[b].detect, g_d);
    const double ce_s = cross_entropy(t.ys, labels[b].source, g_s);
    const double ce_t = cross_entropy(t.yt, labels[b].target, g_t);
    out.loss.detect += ce_d * inv_b;
    out.loss.source += ce_s * inv_b;
    out.loss.target += ce_t * inv_b;

    const bool in_inter = !options.interaction_fakes_only || labels[b].detect == 1;
    for (double& x : g_d) x *= inv_b;
    for (double& x : g_s) x *= weights.lambda_source * inv_b;
    for (double& x : g_t) x *= weights.lambda_target * inv_b;

    RealVector dz_0t(cs + ct, 0.0), dz_s0(cs + ct, 0.0);
    if (in_inter) {
      const RealVector zs(cs, 0.0);
      const RealVector zt(ct, 0.0);
      const double h_0t = model.head_detect.forward(concat(zs, t.dt.irrelevant), tape_0t)[kFakeClass];
      const double h_s0 = model.head_detect.forward(concat(t.ds.irrelevant, zt), tape_s0)[kFakeClass];
      const double h_00 = model.head_detect.forward(concat(zs, zt), tape_00)[kFakeClass];
      const double second = t.yd[kFakeClass] - h_0t - h_s0 + h_00;
      if (inter_count) out.loss.interaction -= second / static_cast<double>(inter_count);

      g_d[kFakeClass] -= inter_w;
      RealVector unit(2, 0.0);
      unit[kFakeClass] = inter_w;
      dz_0t = model.head_detect.backward(tape_0t, unit, g_det);
      dz_s0 = model.head_detect.backward(tape_s0, unit, g_det);
      unit[kFakeClass] = -inter_w;
      model.head_detect.backward(tape_00, unit, g_det);
    }
    const RealVector dz = model.head_detect.backward(t.det, g_d, g_det);

    RealVector d_irr_s(cs), d_irr_t(ct);
    for (std::size_t k = 0; k < cs; ++k) d_irr_s[k] = dz[k] + dz_s0[k];
    for (std::size_t k = 0; k < ct; ++k) d_irr_t[k] = dz[cs + k] + dz_0t[cs + k];
    const RealVector d_rel_s = model.head_source_id.backward(t.head_s, g_s, g_head_s);
    const RealVector d_rel_t = model.head_target_id.backward(t.head_t, g_t, g_head_t);

    const RealVector df_s = disentangle_backward(model.attn_source, t.att_s, t.f_s, t.ds, d_rel_s, d_irr_s, g_att_s);
    const RealVector df_t = disentangle_backward(model.attn_target, t.att_t, t.f_t, t.dt, d_rel_t, d_irr_t, g_att_t);
    model.source_encoder.backward(t.enc_s, df_s, g_enc_s);
    model.target_encoder.backward(t.enc_t, df_t, g_enc_t);
  }
  out.loss.classification =
      out.loss.detect + weights.lambda_source * out.loss.source + weights.lambda_target * out.loss.target;
  out.loss.total = out.loss.classification + weights.lambda_inter * out.loss.interaction;
  return out;
}

double total_loss(const FstModel& model, std::span<const RealVector> inputs, std::span<const FstLabels> labels,
                  const LossWeights& weights, const FstLossOptions& options) {
  if (inputs.empty()) throw ParameterError("total_loss: empty batch");
  std::vector<FstOutputs> preds;
  std::vector<RealVector> s_ir, t_ir;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    preds.push_back(forward_fst(model, inputs[b]));
    if (!options.interaction_fakes_only || labels[b].detect == 1) {
      s_ir.push_back(preds.back().features.source.irrelevant);
      t_ir.push_back(preds.back().features.target.irrelevant);
    }
  }
  const double value = classification_loss(preds, labels, weights) +
                       weights.lambda_inter * interaction_loss(model.head_detect, s_ir, t_ir);
  if (!std::isfinite(value)) throw TrainingError("total_loss is not finite");
  return value;
}

namespace {

struct WideSplit {
  WideVector relevant, irrelevant;
};

WideSplit disentangle_wide(const WideVector& f, const DenseStack& attn, ReluPattern* pattern) {
  const WideVector pre = forward_wide(attn, f, pattern);
  WideSplit d{WideVector(f.size()), WideVector(f.size())};
  for (std::size_t k = 0; k < f.size(); ++k) {
    const long double a = 1.0L / (1.0L + std::exp(-pre[k]));
    d.relevant[k] = a * f[k];
    d.irrelevant[k] = (1.0L - a) * f[k];
  }
  return d;
}

WideVector concat_wide(const WideVector& a, const WideVector& b) {
  WideVector z(a);
  z.insert(z.end(), b.begin(), b.end());
  return z;
}

// Mirrors total_loss term by term.
long double total_loss_wide(const FstModel& m, std::span<const RealVector> inputs, std::span<const FstLabels> labels,
                            const LossWeights& w, const FstLossOptions& options, ReluPattern* pattern) {
  long double det = 0.0L, src = 0.0L, tgt = 0.0L, inter = 0.0L;
  std::size_t inter_count = 0;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const WideVector x(inputs[b].begin(), inputs[b].end());
    const auto ds = disentangle_wide(forward_wide(m.source_encoder, x, pattern), m.attn_source, pattern);
    const auto dt = disentangle_wide(forward_wide(m.target_encoder, x, pattern), m.attn_target, pattern);
    src += cross_entropy_wide(forward_wide(m.head_source_id, ds.relevant, pattern), labels[b].source);
    tgt += cross_entropy_wide(forward_wide(m.head_target_id, dt.relevant, pattern), labels[b].target);
    det += cross_entropy_wide(forward_wide(m.head_detect, concat_wide(ds.irrelevant, dt.irrelevant), pattern),
                              labels[b].detect);
    if (options.interaction_fakes_only && labels[b].detect != 1) continue;
    const WideVector zs(ds.irrelevant.size(), 0.0L), zt(dt.irrelevant.size(), 0.0L);
    auto h = [&](const WideVector& s, const WideVector& t) {
      return forward_wide(m.head_detect, concat_wide(s, t), pattern)[kFakeClass];
    };
    inter += h(ds.irrelevant, dt.irrelevant) - h(zs, dt.irrelevant) - h(ds.irrelevant, zt) + h(zs, zt);
    ++inter_count;
  }
  const auto n = static_cast<long double>(inputs.size());
  long double value = det / n + w.lambda_source * src / n + w.lambda_target * tgt / n;
  if (inter_count > 0) value -= w.lambda_inter * inter / static_cast<long double>(inter_count);
  return value;
}

}  // namespace

double grad_check(FstModel& model, std::span<const RealVector> inputs, std::span<const FstLabels> labels,
                  const LossWeights& weights, const FstLossOptions& options, double eps, double fraction,
                  std::uint64_t seed) {
  auto lg = fst_loss_and_grad(model, inputs, labels, weights, options);
  std::vector<std::span<const double>> analytic;
  for (auto s : lg.grads.blocks()) analytic.emplace_back(s);
  auto params = parameter_blocks(model);
  const ProbeLoss probe = [&](ReluPattern* pattern) {
    return total_loss_wide(model, inputs, labels, weights, options, pattern);
  };
  return grad_check(probe, params, analytic, eps, fraction, seed);
}

FstTrainResult train_fst(FstModel model, const FstDataset& data, const TrainConfig& config,
                         const LossWeights& weights, const FstLossOptions& options) {
  config.validate();
  weights.validate();
  model.validate();
  if (data.size() == 0) throw TrainingError("train_fst: empty dataset");
  if (data.inputs.size() != data.labels.size()) throw DimensionError("train_fst: inputs/labels size mismatch");

  FstTrainResult result;
  Optimizer opt(config.optimizer, config.learning_rate);
  std::vector<RealVector> batch_x;
  std::vector<FstLabels> batch_y;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SeededRng rng(config.seed, epoch);
    const auto order = rng.permutation(data.size());
    FstEpochStats stats;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_x.push_back(data.inputs[order[k]]);
        batch_y.push_back(data.labels[order[k]]);
      }
      auto lg = fst_loss_and_grad(model, batch_x, batch_y, weights, options);
      const double w = static_cast<double>(end - start) / static_cast<double>(data.size());
      stats.loss.total += lg.loss.total * w;
      stats.loss.classification += lg.loss.classification * w;
      stats.loss.detect += lg.loss.detect * w;
      stats.loss.source += lg.loss.source * w;
      stats.loss.target += lg.loss.target * w;
      stats.loss.interaction += lg.loss.interaction * w;
      if (!std::isfinite(lg.loss.total)) {
        throw TrainingError("FST training diverged at epoch " + std::to_string(epoch));
      }
      auto params = parameter_blocks(model);
      auto grads = lg.grads.blocks();
      opt.step(params, grads);
    }
    // Accuracy and the disentanglement identity on the updated model.
    std::size_t hit_d = 0, hit_s = 0, hit_t = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto o = forward_fst(model, data.inputs[i]);
      check_disentangle(o.features.source, model.source_encoder.forward(data.inputs[i]));
      check_disentangle(o.features.target, model.target_encoder.forward(data.inputs[i]));
      hit_d += static_cast<int>(argmax(o.detect_logits)) == data.labels[i].detect;
      hit_s += static_cast<int>(argmax(o.source_logits)) == data.labels[i].source;
      hit_t += static_cast<int>(argmax(o.target_logits)) == data.labels[i].target;
    }
    const double n = static_cast<double>(data.size());
    stats.detect_accuracy = static_cast<double>(hit_d) / n;
    stats.source_accuracy = static_cast<double>(hit_s) / n;
    stats.target_accuracy = static_cast<double>(hit_t) / n;
    result.history.push_back(stats);
  }
  result.model = std::move(model);
  return result;
}

double fst_truth_logit(const FstModel& model, std::span<const double> input, int label) {
  const auto out = forward_fst(model, input);
  if (label < 0 || label > 1) throw ParameterError("fst_truth_logit: detection label must be 0 or 1");
  return out.detect_logits[static_cast<std::size_t>(label)];
}

FstAccuracy fst_accuracy(const FstModel& model, const FstDataset& data) {
  FstAccuracy acc;
  if (data.size() == 0) return acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto o = forward_fst(model, data.inputs[i]);
    acc.detect += static_cast<int>(argmax(o.detect_logits)) == data.labels[i].detect;
    acc.source += static_cast<int>(argmax(o.source_logits)) == data.labels[i].source;
    acc.target += static_cast<int>(argmax(o.target_logits)) == data.labels[i].target;
  }
  const double n = static_cast<double>(data.size());
  acc.detect /= n;
  acc.source /= n;
  acc.target /= n;
  return acc;
}

}  // namespace fstx
