#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "fstx/checkpoint.hpp"
#include "fstx/experiments.hpp"
#include "fstx/external.hpp"
#include "json.hpp"

using namespace fstx;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  std::string seeds;
  std::string out;
  std::size_t grid = 0;
  std::size_t samples = 0;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw ConfigError("bad seed '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--seeds needs at least one seed");
  return out;
}

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (!g.seeds.empty()) cfg.seeds = parse_seed_list(g.seeds);
  if (g.grid) cfg.shapley.grid = g.grid;
  if (g.samples) cfg.shapley.samples = g.samples;
  return cfg;
}

fs::path out_dir(const Globals& g) {
  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream os(file);
  if (!os) throw Error("cannot write " + file.string());
  os << text;
}

void write_phi(const fs::path& file, std::span<const double> phi) {
  std::string text = "grid_index,phi\n";
  for (std::size_t i = 0; i < phi.size(); ++i) text += std::to_string(i) + "," + format_number(phi[i]) + "\n";
  write_text(file, text);
}

RealVector read_phi(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw Error("cannot open " + file.string());
  std::string line;
  std::getline(is, line);
  RealVector phi;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(file.string() + ": bad row '" + line + "'");
    phi.push_back(std::stod(line.substr(comma + 1)));
  }
  return phi;
}

// ---- scorers

struct ScorerHandle {
  std::string selector;
  std::unique_ptr<ExternalScorer> external;
  DenseStack stack;
  FstModel fst;
};

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::unique_ptr<ExternalScorer> open_external(const std::string& selector) {
  if (selector.rfind("exec:", 0) == 0) return ExternalScorer::spawn(split_words(selector.substr(5)));
  const auto rest = selector.substr(4);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) throw ConfigError("tcp scorer needs tcp:HOST:PORT");
  return ExternalScorer::connect(rest.substr(0, colon), static_cast<std::uint16_t>(std::stoul(rest.substr(colon + 1))));
}

bool is_external(const std::string& selector) {
  return selector.rfind("exec:", 0) == 0 || selector.rfind("tcp:", 0) == 0;
}

// Internal scorers need the label up front; it is bound per image.
std::unique_ptr<ScorerHandle> open_scorer(const std::string& selector) {
  auto h = std::make_unique<ScorerHandle>();
  h->selector = selector;
  if (selector == "additive") return h;
  if (selector.rfind("model:", 0) == 0) {
    h->stack = load_stack(selector.substr(6));
    return h;
  }
  if (selector.rfind("fst:", 0) == 0) {
    h->fst = load_fst(selector.substr(4));
    return h;
  }
  if (is_external(selector)) {
    h->external = open_external(selector);
    return h;
  }
  throw ConfigError("unknown scorer '" + selector + "' (additive, model:PATH, fst:PATH, exec:CMD, tcp:HOST:PORT)");
}

ImageScorer bound_scorer(const ScorerHandle& h, int label) {
  if (h.selector == "additive") {
    return [](const GridImage& img) {
      double s = 0.0;
      for (double x : img.flat()) s += x;
      return s;
    };
  }
  if (h.selector.rfind("model:", 0) == 0) return logit_scorer(h.stack, label);
  return fst_scorer(h.fst, label);
}

AttributionMap attribute_one(ScorerHandle& h, const ImageSample& s, int label, const ExperimentConfig& cfg,
                             std::uint64_t seed) {
  const SamplingOptions opts{cfg.shapley.samples, seed, cfg.shapley.workers};
  if (h.external) {
    ExternalGame game(*h.external, std::to_string(s.id), s.grids, label, cfg.shapley.grid);
    return sampled_shapley(game, opts);
  }
  return attribute(s.grids, bound_scorer(h, label), cfg.shapley, seed);
}

int label_for(const ImageSample& s, const std::string& label) {
  if (label == "detect") return s.detection_label();
  if (label == "source") return static_cast<int>(s.source_id);
  if (label == "target") return static_cast<int>(s.target_id);
  return std::stoi(label);
}

World world_from(const Globals& g, const ExperimentConfig& cfg, const std::string& world_dir) {
  if (!world_dir.empty()) return import_world(world_dir);
  return gen_world(world_for_seed(cfg, g.seed));
}

std::vector<std::size_t> pick_images(const World& w, const std::string& ids, const std::string& split,
                                     const std::string& role, std::size_t limit) {
  std::vector<std::size_t> out;
  if (!ids.empty()) {
    for (auto id : parse_seed_list(ids)) {
      if (id >= w.samples.size()) throw ParameterError("image " + std::to_string(id) + " not in world");
      out.push_back(id);
    }
    return out;
  }
  const Split sp = split_from_string(split);
  out = role == "any" ? w.indices(sp) : w.indices(sp, role_from_string(role));
  if (limit && out.size() > limit) out.resize(limit);
  return out;
}

// ---- commands

int cmd_attribute(const Globals& g, const std::string& selector, const std::string& world_dir, const std::string& ids,
                  const std::string& split, const std::string& role, std::size_t limit, const std::string& label) {
  const auto cfg = load(g);
  const World w = world_from(g, cfg, world_dir);
  const auto dir = out_dir(g);
  auto handle = open_scorer(selector);
  nlohmann::json done = nlohmann::json::array();
  for (auto idx : pick_images(w, ids, split, role, limit)) {
    const auto& s = w.samples[idx];
    const std::uint64_t seed = derive_seed(g.seed, kShapleySeed) + s.id;
    AttributionMap map;
    try {
      map = attribute_one(*handle, s, label_for(s, label), cfg, seed);
    } catch (const EvaluationError& first) {
      if (!handle->external) throw;
      std::cerr << "retrying image " << s.id << " after: " << first.what() << "\n";
      try {
        handle->external = open_external(selector);
        map = attribute_one(*handle, s, label_for(s, label), cfg, seed);
      } catch (const Error& second) {
        const nlohmann::json partial = {{"completed", done},
                                        {"failed_image", s.id},
                                        {"error", second.what()},
                                        {"scorer", selector}};
        write_text(dir / "partial_manifest.json", partial.dump(2) + "\n");
        std::cerr << "giving up on image " << s.id << "; partial results in " << (dir / "partial_manifest.json")
                  << "\n";
        return 2;
      }
    }
    const std::string stem = "phi_" + std::to_string(s.id);
    write_phi(dir / (stem + ".csv"), map.phi);
    const nlohmann::json sidecar = {{"image_id", s.id},
                                    {"scorer", selector},
                                    {"label", label_for(s, label)},
                                    {"method", map.method == AttributionMethod::Exact ? "exact" : "sampled"},
                                    {"samples", map.samples},
                                    {"seed", map.seed},
                                    {"grid", cfg.shapley.grid},
                                    {"baseline_score", map.v_empty},
                                    {"v_full", map.v_full},
                                    {"efficiency_residual", map.efficiency_residual()}};
    write_text(dir / (stem + ".json"), sidecar.dump(2) + "\n");
    done.push_back(s.id);
  }
  write_text(dir / "attribution_manifest.json", nlohmann::json({{"completed", done}, {"scorer", selector}}).dump(2) + "\n");
  std::cout << "attributed " << done.size() << " images into " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& what, bool csv) {
  const auto cfg = load(g);
  const World w = gen_world(world_for_seed(cfg, g.seed));
  const auto dir = out_dir(g);
  auto save = [&](const auto& model, const std::string& name) {
    if (csv) {
      save_checkpoint_csv(model, dir / name);
    } else {
      save_checkpoint(model, dir / (name + ".ckpt"));
    }
    std::cout << "wrote " << name << "\n";
  };
  if (what == "baseline") {
    save(train_detector(w, detector_train_indices(w), cfg, derive_seed(g.seed, kDetectorSeed)), "detector");
  } else if (what == "encoders") {
    const auto set = train_encoder_set(w, cfg, g.seed);
    save(set.detector, "detector");
    save(set.source, "source");
    save(set.target, "target");
  } else {
    save(train_fst_model(w, detector_train_indices(w), cfg, derive_seed(g.seed, kFstSeed)), "fst");
  }
  const nlohmann::json manifest = {{"config_hash", config_hash(cfg)}, {"seed", g.seed}, {"trained", what},
                                   {"tool_version", kToolVersion}};
  write_text(dir / "train_manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int cmd_exp(const Globals& g, const std::string& which) {
  const auto cfg = load(g);
  const auto report = which == "hyp1" ? run_hypothesis1(cfg) : which == "hyp2" ? run_hypothesis2(cfg) : run_hypothesis3(cfg);
  const auto dir = out_dir(g) / (which + "-" + report.config_hash);
  write_report(report, dir);
  std::cout << render_report(report) << "written to " << dir.string() << "\n";
  for (const auto& [name, ok] : report.checks) {
    if (!ok) return 1;
  }
  return 0;
}

int cmd_verify_grads(const Globals& g) {
  const auto cfg = load(g);
  const World w = gen_world(world_for_seed(cfg, g.seed));
  const auto train = w.indices(Split::Train);
  std::vector<RealVector> xs;
  std::vector<int> ys;
  std::vector<FstLabels> fl;
  const auto data = fst_set(w, train);
  for (std::size_t k = 0; k < 16 && k < train.size(); ++k) {
    const std::size_t i = (k * train.size()) / 16;
    xs.push_back(data.inputs[i]);
    fl.push_back(data.labels[i]);
    ys.push_back(data.labels[i].detect);
  }
  SeededRng rng(g.seed);
  auto enc = make_encoder(w.config.input_dim(), 2, rng, cfg.encoder_hidden);
  FstArchitecture arch = cfg.fst_arch;
  arch.input_dim = w.config.input_dim();
  arch.n_identities = w.config.n_identities;
  auto fst = FstModel::create(arch, rng);
  const double e1 = grad_check(enc, xs, ys, 1e-5, 0.05, g.seed);
  const double e2 = grad_check(fst, xs, fl, cfg.loss_weights, {cfg.interaction_fakes_only}, 1e-5, 0.05, g.seed);
  std::cout << "encoder max relative error " << format_number(e1) << "\n"
            << "fst total_loss max relative error " << format_number(e2) << "\n";
  return e1 < 1e-4 && e2 < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid Shapley attribution and FST analysis toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for single-seed commands");
  app.add_option("--seeds", g.seeds, "Comma separated seed list for experiments");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--grid", g.grid, "Players per side");
  app.add_option("--samples", g.samples, "Sampled permutations T");
  for (auto* opt : app.get_options()) opt->configurable(false);
  app.fallthrough();

  int rc = 0;

  auto* config = app.add_subcommand("config", "Config helpers")->require_subcommand(1);
  config->add_subcommand("init", "Print the full default config")->callback([&] {
    if (g.out.empty()) {
      std::cout << default_config_text();
    } else {
      write_text(out_dir(g) / "config.json", default_config_text());
    }
  });

  auto* world = app.add_subcommand("world", "Synthetic world")->require_subcommand(1);
  world->add_subcommand("gen", "Generate and export a world")->callback([&] {
    const auto cfg = load(g);
    const World w = gen_world(world_for_seed(cfg, g.seed));
    export_world(w, out_dir(g) / "world");
    std::cout << w.samples.size() << " samples, " << w.triples.size() << " fakes\n";
  });

  auto* train = app.add_subcommand("train", "Train models and write checkpoints")->require_subcommand(1);
  bool csv = false;
  train->add_flag("--csv", csv, "Write CSV checkpoint directories instead of binary files");
  for (const char* what : {"baseline", "encoders", "fst"}) {
    train->add_subcommand(what)->callback([&, what] { rc = cmd_train(g, what, csv); });
  }

  auto* attr = app.add_subcommand("attribute", "Shapley maps for world images");
  std::string selector = "additive", world_dir, ids, split = "test", role = "fake", label = "detect";
  std::size_t limit = 0;
  attr->add_option("--scorer", selector, "additive | model:PATH | fst:PATH | exec:CMD | tcp:HOST:PORT");
  attr->add_option("--world", world_dir, "Exported world directory (default: generate from config)");
  attr->add_option("--images", ids, "Comma separated sample ids");
  attr->add_option("--split", split, "train | test");
  attr->add_option("--role", role, "real | fake | any");
  attr->add_option("--limit", limit, "At most this many images");
  attr->add_option("--label", label, "detect | source | target | class index");
  attr->callback([&] { rc = cmd_attribute(g, selector, world_dir, ids, split, role, limit, label); });

  auto* metrics = app.add_subcommand("metrics", "Metrics on phi CSV files")->require_subcommand(1);
  std::string fd, fs_, ft, fraw, f23, f40, image;
  auto* mq = metrics->add_subcommand("q", "Q-bar of a detection map against source/target maps");
  mq->add_option("--detect", fd)->required();
  mq->add_option("--source", fs_)->required();
  mq->add_option("--target", ft)->required();
  mq->callback([&] {
    const auto r = q_mean(read_phi(fd), read_phi(fs_), read_phi(ft));
    nlohmann::json j = {{"q_bar", r.mean}, {"kept_counts", r.kept_counts}, {"values", r.values}, {"warnings", r.warnings}};
    std::cout << j.dump(2) << "\n";
  });
  auto* md = metrics->add_subcommand("delta", "Compression stability of a raw map");
  md->add_option("--raw", fraw)->required();
  md->add_option("--c23", f23);
  md->add_option("--c40", f40);
  md->callback([&] {
    StabilityInput in{read_phi(fraw), {}};
    if (!f23.empty()) in.phi_by_level[CompressionLevel::C23] = read_phi(f23);
    if (!f40.empty()) in.phi_by_level[CompressionLevel::C40] = read_phi(f40);
    const auto r = delta_stability(in);
    std::cout << nlohmann::json({{"delta", r.value}, {"degenerate_terms", r.degenerate_terms}}).dump(2) << "\n";
  });
  auto* mi = metrics->add_subcommand("instability", "Two sampling runs on one image");
  mi->add_option("--scorer", selector);
  mi->add_option("--world", world_dir);
  mi->add_option("--image", image)->required();
  mi->callback([&] {
    auto cfg = load(g);
    const World w = world_from(g, cfg, world_dir);
    const auto& s = w.samples.at(std::stoul(image));
    auto h = open_scorer(selector);
    const auto a = attribute_one(*h, s, s.detection_label(), cfg, g.seed);
    const auto b = attribute_one(*h, s, s.detection_label(), cfg, g.seed + 1);
    const auto r = instability(a.phi, b.phi);
    std::cout << nlohmann::json({{"instability", format_number(r.value)}, {"samples", cfg.shapley.samples}}).dump(2)
              << "\n";
  });

  auto* verify = app.add_subcommand("verify", "Self checks")->require_subcommand(1);
  std::size_t games = 20, players = 10;
  auto* va = verify->add_subcommand("axioms", "Shapley axioms on random games");
  va->add_option("--games", games);
  va->add_option("--players", players);
  va->callback([&] {
    const auto r = verify_axioms(games, players, g.seed);
    std::cout << "games " << r.games << "\nlinearity " << format_number(r.linearity) << "\ndummy "
              << format_number(r.dummy) << "\nsymmetry " << format_number(r.symmetry) << "\nefficiency "
              << format_number(r.efficiency) << "\n";
    rc = r.passed(1e-6) ? 0 : 1;
  });
  verify->add_subcommand("grads", "Finite-difference check of both models")->callback([&] { rc = cmd_verify_grads(g); });

  auto* exp = app.add_subcommand("exp", "Run a hypothesis experiment")->require_subcommand(1);
  for (const char* which : {"hyp1", "hyp2", "hyp3"}) {
    exp->add_subcommand(which)->callback([&, which] { rc = cmd_exp(g, which); });
  }

  auto* report = app.add_subcommand("report", "Reports")->require_subcommand(1);
  std::string report_path;
  auto* rr = report->add_subcommand("render", "Plain-text summary of a report");
  rr->add_option("path", report_path, "report.json or its directory")->required();
  rr->callback([&] {
    fs::path p = report_path;
    if (fs::is_directory(p)) p /= "report.json";
    std::cout << render_report(read_report(p));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
