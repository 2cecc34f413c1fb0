#include "fstx/config.hpp"

#include <cstdio>
#include <fstream>

namespace fstx {

StrictObject::StrictObject(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
  if (!j_.is_object()) throw ConfigError(context_ + ": expected an object");
}

void StrictObject::finish() {
  for (const auto& [key, _] : j_.items()) {
    if (!seen_.count(key)) throw ConfigError("unknown config key '" + context_ + "." + key + "'");
  }
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = {{"side", c.side},
       {"depth", c.depth},
       {"n_identities", c.n_identities},
       {"fake_identities", c.fake_identities},
       {"max_fake_pairs", c.max_fake_pairs},
       {"clips_per_identity", c.clips_per_identity},
       {"train_clips", c.train_clips},
       {"frames_per_clip", c.frames_per_clip},
       {"face_region", c.face_region},
       {"boundary_region", c.boundary_region},
       {"identity_amplitude", c.identity_amplitude},
       {"artifact_amplitude", c.artifact_amplitude},
       {"noise_sigma", c.noise_sigma},
       {"quant_step_c23", c.quant_step_c23},
       {"quant_step_c40", c.quant_step_c40},
       {"face_donor", to_string(c.face_donor)},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  StrictObject o(j, "world");
  o.read("side", c.side);
  o.read("depth", c.depth);
  o.read("n_identities", c.n_identities);
  o.read("fake_identities", c.fake_identities);
  o.read("max_fake_pairs", c.max_fake_pairs);
  o.read("clips_per_identity", c.clips_per_identity);
  o.read("train_clips", c.train_clips);
  o.read("frames_per_clip", c.frames_per_clip);
  o.read("face_region", c.face_region);
  o.read("boundary_region", c.boundary_region);
  o.read("identity_amplitude", c.identity_amplitude);
  o.read("artifact_amplitude", c.artifact_amplitude);
  o.read("noise_sigma", c.noise_sigma);
  o.read("quant_step_c23", c.quant_step_c23);
  o.read("quant_step_c40", c.quant_step_c40);
  std::string donor = to_string(c.face_donor);
  o.read("face_donor", donor);
  c.face_donor = face_donor_from_string(donor);
  o.read("seed", c.seed);
  o.finish();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"optimizer", to_string(c.optimizer)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  StrictObject o(j, "train");
  o.read("learning_rate", c.learning_rate);
  o.read("epochs", c.epochs);
  o.read("batch_size", c.batch_size);
  o.read("seed", c.seed);
  std::string opt = to_string(c.optimizer);
  o.read("optimizer", opt);
  c.optimizer = optimizer_from_string(opt);
  o.finish();
  c.validate();
}

void to_json(nlohmann::json& j, const FstArchitecture& c) {
  j = {{"encoder_hidden", c.encoder_hidden},
       {"channels_source", c.channels_source},
       {"channels_target", c.channels_target},
       {"detect_hidden", c.detect_hidden}};
}

void from_json(const nlohmann::json& j, FstArchitecture& c) {
  StrictObject o(j, "fst_arch");
  o.read("encoder_hidden", c.encoder_hidden);
  o.read("channels_source", c.channels_source);
  o.read("channels_target", c.channels_target);
  o.read("detect_hidden", c.detect_hidden);
  o.finish();
}

void to_json(nlohmann::json& j, const LossWeights& c) {
  j = {{"lambda_source", c.lambda_source}, {"lambda_target", c.lambda_target}, {"lambda_inter", c.lambda_inter}};
}

void from_json(const nlohmann::json& j, LossWeights& c) {
  StrictObject o(j, "loss_weights");
  o.read("lambda_source", c.lambda_source);
  o.read("lambda_target", c.lambda_target);
  o.read("lambda_inter", c.lambda_inter);
  o.finish();
  c.validate();
}

void to_json(nlohmann::json& j, const ShapleyConfig& c) {
  j = {{"grid", c.grid}, {"samples", c.samples}, {"workers", c.workers}};
}

void from_json(const nlohmann::json& j, ShapleyConfig& c) {
  StrictObject o(j, "shapley");
  o.read("grid", c.grid);
  o.read("samples", c.samples);
  o.read("workers", c.workers);
  o.finish();
  if (c.samples == 0) throw ConfigError("shapley.samples must be positive");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"world", c.world},
       {"detector", c.detector},
       {"encoders", c.encoders},
       {"fst", c.fst},
       {"encoder_hidden", c.encoder_hidden},
       {"fst_arch", c.fst_arch},
       {"loss_weights", c.loss_weights},
       {"interaction_fakes_only", c.interaction_fakes_only},
       {"shapley", c.shapley},
       {"seeds", c.seeds},
       {"test_images", c.test_images},
       {"real_to_fake_ratio", c.real_to_fake_ratio},
       {"n_pair_identities", c.n_pair_identities},
       {"top_fraction", c.top_fraction},
       {"include_fst", c.include_fst},
       {"workers", c.workers}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  StrictObject o(j, "config");
  o.read("world", c.world);
  o.read("detector", c.detector);
  o.read("encoders", c.encoders);
  o.read("fst", c.fst);
  o.read("encoder_hidden", c.encoder_hidden);
  o.read("fst_arch", c.fst_arch);
  o.read("loss_weights", c.loss_weights);
  o.read("interaction_fakes_only", c.interaction_fakes_only);
  o.read("shapley", c.shapley);
  o.read("seeds", c.seeds);
  o.read("test_images", c.test_images);
  o.read("real_to_fake_ratio", c.real_to_fake_ratio);
  o.read("n_pair_identities", c.n_pair_identities);
  o.read("top_fraction", c.top_fraction);
  o.read("include_fst", c.include_fst);
  o.read("workers", c.workers);
  o.finish();
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(c.top_fraction > 0.0 && c.top_fraction < 1.0)) throw ConfigError("top_fraction must be in (0, 1)");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

std::string default_config_text() { return nlohmann::json(ExperimentConfig{}).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  return mix64(mix64(seed) ^ (purpose * 0x9E3779B97F4A7C15ULL));
}

}  // namespace fstx
