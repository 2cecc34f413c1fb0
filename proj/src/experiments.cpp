#include "fstx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

#include "fstx/errors.hpp"

namespace fstx {

namespace {

// Runs fn(i) for i in [0, n); results must be written by index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(std::max<std::size_t>(1, workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

TrainConfig with_seed(TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

ExperimentReport new_report(const char* name, const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.experiment = name;
  r.config = cfg;
  r.config_hash = config_hash(cfg);
  r.seeds = cfg.seeds;
  return r;
}

Cell num(double x) { return x; }
Cell integer(std::size_t x) { return static_cast<long long>(x); }

double mean_of(const std::vector<double>& v) { return mean(v); }

}  // namespace

LabeledSet detection_set(const World& world, std::span<const std::size_t> indices) {
  LabeledSet set;
  for (auto i : indices) {
    const auto& s = world.samples[i];
    set.inputs.emplace_back(s.grids.flat().begin(), s.grids.flat().end());
    set.labels.push_back(s.detection_label());
  }
  return set;
}

LabeledSet identity_set(const World& world, std::span<const std::size_t> indices, IdentityRole role) {
  LabeledSet set;
  for (auto i : indices) {
    const auto& s = world.samples[i];
    set.inputs.emplace_back(s.grids.flat().begin(), s.grids.flat().end());
    set.labels.push_back(static_cast<int>(role == IdentityRole::Source ? s.source_id : s.target_id));
  }
  return set;
}

FstDataset fst_set(const World& world, std::span<const std::size_t> indices) {
  FstDataset set;
  for (auto i : indices) {
    const auto& s = world.samples[i];
    set.inputs.emplace_back(s.grids.flat().begin(), s.grids.flat().end());
    set.labels.push_back({static_cast<int>(s.source_id), static_cast<int>(s.target_id), s.detection_label()});
  }
  return set;
}

DenseStack train_detector(const World& world, std::span<const std::size_t> indices, const ExperimentConfig& cfg,
                          std::uint64_t seed) {
  SeededRng init(seed, 0);
  DenseStack model = make_encoder(world.config.input_dim(), 2, init, cfg.encoder_hidden);
  const auto balanced = balance_reals(world, indices, cfg.real_to_fake_ratio);
  return train(std::move(model), detection_set(world, balanced), with_seed(cfg.detector, seed)).model;
}

DenseStack train_identity_encoder(const World& world, std::span<const std::size_t> indices, IdentityRole role,
                                  const ExperimentConfig& cfg, std::uint64_t seed) {
  SeededRng init(seed, 0);
  DenseStack model = make_encoder(world.config.input_dim(), world.config.n_identities, init, cfg.encoder_hidden);
  return train(std::move(model), identity_set(world, indices, role), with_seed(cfg.encoders, seed)).model;
}

FstModel train_fst_model(const World& world, std::span<const std::size_t> indices, const ExperimentConfig& cfg,
                         std::uint64_t seed) {
  FstArchitecture arch = cfg.fst_arch;
  arch.input_dim = world.config.input_dim();
  arch.n_identities = world.config.n_identities;
  SeededRng init(seed, 0);
  FstModel model = FstModel::create(arch, init);
  const auto balanced = balance_reals(world, indices, cfg.real_to_fake_ratio);
  FstLossOptions options;
  options.interaction_fakes_only = cfg.interaction_fakes_only;
  return train_fst(std::move(model), fst_set(world, balanced), with_seed(cfg.fst, seed), cfg.loss_weights, options)
      .model;
}

WorldConfig world_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  WorldConfig w = cfg.world;
  w.seed = derive_seed(seed, kWorldSeed);
  return w;
}

std::vector<std::size_t> detector_train_indices(const World& world) {
  std::vector<std::size_t> out;
  for (auto i : world.indices(Split::Train)) {
    const auto& s = world.samples[i];
    const auto limit = world.config.fake_identities;
    if (s.source_id < limit && s.target_id < limit && s.own_id < limit) out.push_back(i);
  }
  return out;
}

EncoderSet train_encoder_set(const World& world, const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto train_idx = world.indices(Split::Train);
  EncoderSet set;
  set.detector = train_detector(world, detector_train_indices(world), cfg, derive_seed(seed, kDetectorSeed));
  set.source = train_identity_encoder(world, train_idx, IdentityRole::Source, cfg, derive_seed(seed, kSourceSeed));
  set.target = train_identity_encoder(world, train_idx, IdentityRole::Target, cfg, derive_seed(seed, kTargetSeed));
  return set;
}

ImageScorer logit_scorer(const DenseStack& model, int label) {
  return [&model, label](const GridImage& img) { return truth_logit(model, img.flat(), label); };
}

ImageScorer fst_scorer(const FstModel& model, int label) {
  return [&model, label](const GridImage& img) { return fst_truth_logit(model, img.flat(), label); };
}

AttributionMap attribute(const GridImage& image, const ImageScorer& scorer, const ShapleyConfig& shapley,
                         std::uint64_t seed) {
  const auto game = make_grid_game(image, scorer, shapley.grid);
  return sampled_shapley(game, {shapley.samples, seed, shapley.workers});
}

double detection_score(const DenseStack& model, const GridImage& image) {
  const auto logits = model.forward(image.flat());
  return logits[kFakeClass] - logits[1 - kFakeClass];
}

double detection_score(const FstModel& model, const GridImage& image) {
  const auto logits = forward_fst(model, image.flat()).detect_logits;
  return logits[kFakeClass] - logits[1 - kFakeClass];
}

double video_auc(const World& world, std::span<const std::size_t> indices, std::span<const double> scores) {
  struct Group {
    double sum = 0.0;
    std::size_t count = 0;
    Role role = Role::Real;
  };
  std::map<std::uint32_t, Group> groups;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = world.samples[indices[k]];
    auto& g = groups[s.video_group];
    g.sum += scores[k];
    ++g.count;
    g.role = s.role;
  }
  std::vector<double> pos, neg;
  for (const auto& [_, g] : groups) {
    (g.role == Role::Fake ? pos : neg).push_back(g.sum / static_cast<double>(g.count));
  }
  return rank_auc(pos, neg);
}

DetectionMetrics evaluate_detection(const World& world, std::span<const std::size_t> indices,
                                    const std::function<double(const GridImage&)>& score) {
  DetectionMetrics m;
  std::vector<double> scores;
  std::vector<double> pos, neg;
  std::size_t hits = 0;
  for (auto i : indices) {
    const auto& s = world.samples[i];
    const double sc = score(s.grids);
    scores.push_back(sc);
    (s.role == Role::Fake ? pos : neg).push_back(sc);
    if ((sc > 0.0) == (s.role == Role::Fake)) ++hits;
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(indices.size());
  m.frame_auc = rank_auc(pos, neg);
  m.video_auc = video_auc(world, indices, scores);
  return m;
}

std::vector<std::size_t> pick_test_fakes(const World& world, std::size_t count) {
  const auto fakes = world.indices(Split::Test, Role::Fake);
  if (count == 0 || count >= fakes.size()) return fakes;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(fakes[k * fakes.size() / count]);
  return out;
}

std::vector<std::size_t> region_players(const WorldConfig& world, std::span<const std::size_t> cells,
                                        std::size_t grid) {
  if (world.side % grid != 0) throw PartitionError("grid does not divide the world side");
  const std::size_t block = world.side / grid;
  std::vector<std::size_t> hits(grid * grid, 0);
  for (auto c : cells) {
    const std::size_t r = c / world.side;
    const std::size_t col = c % world.side;
    ++hits[(r / block) * grid + col / block];
  }
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < hits.size(); ++p) {
    if (2 * hits[p] >= block * block) out.push_back(p);
  }
  return out;
}

std::optional<QMeanResult> normalized_q(std::span<const double> phi_d, std::span<const double> phi_s,
                                        std::span<const double> phi_t) {
  if (l2_norm(phi_d) == 0.0 || l2_norm(phi_s) == 0.0 || l2_norm(phi_t) == 0.0) return std::nullopt;
  return q_mean(normalize_unit(phi_d), normalize_unit(phi_s), normalize_unit(phi_t));
}

// --- hypothesis 1 ----------------------------------------------------------

ExperimentReport run_hypothesis1(const ExperimentConfig& cfg) {
  auto report = new_report("hyp1", cfg);
  Table per_image{"hyp1_images",
                  {"seed", "sample_id", "source_id", "target_id", "q_bar", "q_bar_unnormalized", "overlap_detect",
                   "overlap_source", "overlap_target"},
                  {}};
  Table masks{"hyp1_masks",
              {"seed", "sample_id", "grid_index", "phi_detect", "phi_source", "phi_target", "top_detect", "top_source",
               "top_target", "intersection"},
              {}};
  std::size_t skipped = 0;
  for (auto seed : cfg.seeds) {
    const World world = gen_world(world_for_seed(cfg, seed));
    const EncoderSet enc = train_encoder_set(world, cfg, seed);
    const auto artifact = region_players(world.config, world.artifact_region(), cfg.shapley.grid);
    const auto picks = pick_test_fakes(world, cfg.test_images);

    struct Row {
      AttributionMap d, s, t;
    };
    std::vector<Row> maps(picks.size());
    parallel_for(picks.size(), cfg.workers, [&](std::size_t k) {
      const auto& sample = world.samples[picks[k]];
      const std::uint64_t base = derive_seed(seed, kShapleySeed) + 3 * sample.id;
      maps[k].d = attribute(sample.grids, logit_scorer(enc.detector, 1), cfg.shapley, base);
      maps[k].s = attribute(sample.grids, logit_scorer(enc.source, static_cast<int>(sample.source_id)), cfg.shapley,
                            base + 1);
      maps[k].t = attribute(sample.grids, logit_scorer(enc.target, static_cast<int>(sample.target_id)), cfg.shapley,
                            base + 2);
    });

    std::vector<double> q_values, q_raw, ov_d, ov_s, ov_t;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      const auto& sample = world.samples[picks[k]];
      const auto& m = maps[k];
      const auto q = normalized_q(m.d.phi, m.s.phi, m.t.phi);
      if (!q) {
        ++skipped;
        continue;
      }
      const double q_unnorm = q_mean(m.d.phi, m.s.phi, m.t.phi).mean;
      const auto top_d = top_fraction_mask(m.d.phi, cfg.top_fraction);
      const auto top_s = top_fraction_mask(m.s.phi, cfg.top_fraction);
      const auto top_t = top_fraction_mask(m.t.phi, cfg.top_fraction);
      const double od = region_overlap(top_d, artifact);
      const double os = region_overlap(top_s, artifact);
      const double ot = region_overlap(top_t, artifact);
      q_values.push_back(q->mean);
      q_raw.push_back(q_unnorm);
      ov_d.push_back(od);
      ov_s.push_back(os);
      ov_t.push_back(ot);
      per_image.add_row({integer(seed), integer(sample.id), integer(sample.source_id), integer(sample.target_id),
                         num(q->mean), num(q_unnorm), num(od), num(os), num(ot)});
      for (std::size_t g = 0; g < m.d.phi.size(); ++g) {
        const bool relevant = top_s.contains(g) || top_t.contains(g);
        masks.add_row({integer(seed), integer(sample.id), integer(g), num(m.d.phi[g]), num(m.s.phi[g]),
                       num(m.t.phi[g]), integer(top_d.contains(g)), integer(top_s.contains(g)),
                       integer(top_t.contains(g)), integer(top_d.contains(g) && relevant)});
      }
    }
    report.record("q_bar", mean_of(q_values));
    report.record("q_bar_unnormalized", mean_of(q_raw));
    report.record("overlap_detect_artifact", mean_of(ov_d));
    report.record("overlap_source_artifact", mean_of(ov_s));
    report.record("overlap_target_artifact", mean_of(ov_t));
    report.record("images", static_cast<double>(q_values.size()));
  }
  const auto& q = report.metrics["q_bar"].values;
  report.checks["q_bar_positive_every_seed"] = std::all_of(q.begin(), q.end(), [](double v) { return v > 0.0; });
  const double od = report.metrics["overlap_detect_artifact"].mean();
  report.checks["detect_mask_overlaps_artifact_most"] =
      od > report.metrics["overlap_source_artifact"].mean() && od > report.metrics["overlap_target_artifact"].mean();
  if (skipped) report.notes.push_back(std::to_string(skipped) + " images skipped for zero-norm attribution maps");
  report.tables.push_back(std::move(per_image));
  report.tables.push_back(std::move(masks));
  return report;
}

// --- hypothesis 2 ----------------------------------------------------------

ExperimentReport run_hypothesis2(const ExperimentConfig& cfg) {
  auto report = new_report("hyp2", cfg);
  Table curve{"curve_hyp2_q", {"kept_percent", "kept_count", "q_paired", "q_unpaired"}, {}};
  Table per_seed{"hyp2_seeds",
                 {"seed", "paired_fakes", "paired_reals", "unpaired_reals", "paired_acc", "paired_auc", "unpaired_acc",
                  "unpaired_auc"},
                 {}};
  std::map<std::size_t, std::vector<double>> q_paired_by_k, q_unpaired_by_k;
  std::vector<std::size_t> kept_order;
  bool counts_equal = true;

  for (auto seed : cfg.seeds) {
    const World world = gen_world(world_for_seed(cfg, seed));
    const TrainingSets sets = build_paired_unpaired(world, cfg.n_pair_identities);
    const auto paired_reals = static_cast<std::size_t>(std::count_if(
        sets.paired.begin(), sets.paired.end(), [&](std::size_t i) { return world.samples[i].role == Role::Real; }));
    const auto unpaired_reals = static_cast<std::size_t>(std::count_if(
        sets.unpaired.begin(), sets.unpaired.end(), [&](std::size_t i) { return world.samples[i].role == Role::Real; }));
    counts_equal = counts_equal && paired_reals == unpaired_reals;

    // Same initialization for both conditions; only the data differ.
    const std::uint64_t det_seed = derive_seed(seed, kDetectorSeed);
    const DenseStack paired = train_detector(world, sets.paired, cfg, det_seed);
    const DenseStack unpaired = train_detector(world, sets.unpaired, cfg, det_seed);
    const auto train_idx = world.indices(Split::Train);
    const DenseStack source =
        train_identity_encoder(world, train_idx, IdentityRole::Source, cfg, derive_seed(seed, kSourceSeed));
    const DenseStack target =
        train_identity_encoder(world, train_idx, IdentityRole::Target, cfg, derive_seed(seed, kTargetSeed));

    const auto test_idx = world.indices(Split::Test);
    const auto mp = evaluate_detection(world, test_idx, [&](const GridImage& g) { return detection_score(paired, g); });
    const auto mu = evaluate_detection(world, test_idx, [&](const GridImage& g) { return detection_score(unpaired, g); });
    report.record("paired_acc", mp.accuracy);
    report.record("paired_video_auc", mp.video_auc);
    report.record("unpaired_acc", mu.accuracy);
    report.record("unpaired_video_auc", mu.video_auc);
    report.record("auc_gap", mp.video_auc - mu.video_auc);
    per_seed.add_row({integer(seed), integer(sets.fake_count), integer(paired_reals), integer(unpaired_reals),
                      num(mp.accuracy), num(mp.video_auc), num(mu.accuracy), num(mu.video_auc)});

    const auto picks = pick_test_fakes(world, cfg.test_images);
    struct Row {
      std::optional<QMeanResult> paired, unpaired;
    };
    std::vector<Row> rows(picks.size());
    parallel_for(picks.size(), cfg.workers, [&](std::size_t k) {
      const auto& sample = world.samples[picks[k]];
      const std::uint64_t base = derive_seed(seed, kShapleySeed) + 4 * sample.id;
      const auto dp = attribute(sample.grids, logit_scorer(paired, 1), cfg.shapley, base);
      const auto du = attribute(sample.grids, logit_scorer(unpaired, 1), cfg.shapley, base + 1);
      const auto s = attribute(sample.grids, logit_scorer(source, static_cast<int>(sample.source_id)), cfg.shapley,
                               base + 2);
      const auto t = attribute(sample.grids, logit_scorer(target, static_cast<int>(sample.target_id)), cfg.shapley,
                               base + 3);
      rows[k].paired = normalized_q(dp.phi, s.phi, t.phi);
      rows[k].unpaired = normalized_q(du.phi, s.phi, t.phi);
    });
    std::map<std::size_t, std::vector<double>> seed_p, seed_u;
    std::vector<double> qbar_p, qbar_u;
    for (const auto& r : rows) {
      if (!r.paired || !r.unpaired) continue;
      kept_order = r.paired->kept_counts;
      for (std::size_t j = 0; j < r.paired->kept_counts.size(); ++j) {
        seed_p[r.paired->kept_counts[j]].push_back(r.paired->values[j]);
        seed_u[r.unpaired->kept_counts[j]].push_back(r.unpaired->values[j]);
      }
      qbar_p.push_back(r.paired->mean);
      qbar_u.push_back(r.unpaired->mean);
    }
    for (auto& [k, v] : seed_p) q_paired_by_k[k].push_back(mean_of(v));
    for (auto& [k, v] : seed_u) q_unpaired_by_k[k].push_back(mean_of(v));
    report.record("paired_q_bar", mean_of(qbar_p));
    report.record("unpaired_q_bar", mean_of(qbar_u));
  }

  bool q_dominates = !kept_order.empty();
  const std::size_t n = cfg.shapley.grid * cfg.shapley.grid;
  for (int percent : kQSchedulePercent) {
    const std::size_t k = schedule_count(percent, n);
    if (!q_paired_by_k.count(k)) continue;
    const double qp = mean_of(q_paired_by_k[k]);
    const double qu = mean_of(q_unpaired_by_k[k]);
    q_dominates = q_dominates && qp > qu;
    curve.add_row({integer(static_cast<std::size_t>(percent)), integer(k), num(qp), num(qu)});
  }
  report.checks["real_counts_equal"] = counts_equal;
  report.checks["paired_auc_exceeds_unpaired_by_0.05"] = report.metrics["auc_gap"].mean() >= 0.05;
  report.checks["paired_q_exceeds_unpaired_every_k"] = q_dominates;
  report.tables.push_back(std::move(per_seed));
  report.tables.push_back(std::move(curve));
  return report;
}

// --- hypothesis 3 ----------------------------------------------------------

ExperimentReport run_hypothesis3(const ExperimentConfig& cfg) {
  auto report = new_report("hyp3", cfg);
  Table per_image{"hyp3_images",
                  {"seed", "sample_id", "source_id", "encoder", "cos_c23", "cos_c40", "delta"},
                  {}};
  Table buckets{"hyp3_buckets", {"seed", "source_id", "encoder", "delta"}, {}};
  const CompressionLevel levels[] = {CompressionLevel::C23, CompressionLevel::C40};
  std::vector<std::string> names = {"detection", "source", "target"};
  if (cfg.include_fst) names.push_back("fst");

  for (auto seed : cfg.seeds) {
    const World world = gen_world(world_for_seed(cfg, seed));
    const EncoderSet enc = train_encoder_set(world, cfg, seed);
    std::optional<FstModel> fst;
    if (cfg.include_fst) {
      fst = train_fst_model(world, detector_train_indices(world), cfg, derive_seed(seed, kFstSeed));
    }
    const auto picks = pick_test_fakes(world, cfg.test_images);

    // deltas[k][e]
    std::vector<std::vector<DeltaResult>> deltas(picks.size());
    parallel_for(picks.size(), cfg.workers, [&](std::size_t k) {
      const auto& raw = world.samples[picks[k]];
      std::vector<ImageSample> versions = {raw};
      for (auto level : levels) versions.push_back(compress(raw, level, world.config));
      std::vector<ImageScorer> scorers = {logit_scorer(enc.detector, 1),
                                          logit_scorer(enc.source, static_cast<int>(raw.source_id)),
                                          logit_scorer(enc.target, static_cast<int>(raw.target_id))};
      if (fst) scorers.push_back(fst_scorer(*fst, 1));
      for (std::size_t e = 0; e < scorers.size(); ++e) {
        StabilityInput in;
        for (std::size_t v = 0; v < versions.size(); ++v) {
          const std::uint64_t s = derive_seed(seed, kShapleySeed) + 16 * raw.id + 4 * e + v;
          auto phi = attribute(versions[v].grids, scorers[e], cfg.shapley, s).phi;
          if (v == 0) {
            in.phi_raw = std::move(phi);
          } else {
            in.phi_by_level[versions[v].compression] = std::move(phi);
          }
        }
        deltas[k].push_back(delta_stability(in));
      }
    });

    std::vector<std::vector<double>> per_encoder(names.size());
    std::map<std::pair<std::uint32_t, std::size_t>, std::vector<double>> bucket_values;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      const auto& sample = world.samples[picks[k]];
      for (std::size_t e = 0; e < names.size(); ++e) {
        const auto& d = deltas[k][e];
        per_encoder[e].push_back(d.value);
        bucket_values[{sample.source_id, e}].push_back(d.value);
        per_image.add_row({integer(seed), integer(sample.id), integer(sample.source_id), names[e],
                           num(d.per_level.at(CompressionLevel::C23)), num(d.per_level.at(CompressionLevel::C40)),
                           num(d.value)});
      }
    }
    for (std::size_t e = 0; e < names.size(); ++e) report.record("delta_" + names[e], mean_of(per_encoder[e]));
    bool bucket_ok = true;
    std::map<std::uint32_t, std::vector<double>> by_source;
    for (const auto& [key, values] : bucket_values) {
      buckets.add_row({integer(seed), integer(key.first), names[key.second], num(mean_of(values))});
    }
    for (const auto& [key, values] : bucket_values) {
      if (key.second != 0) continue;
      const double det = mean_of(values);
      bucket_ok = bucket_ok && mean_of(bucket_values[{key.first, 1}]) > det &&
                  mean_of(bucket_values[{key.first, 2}]) > det;
    }
    report.record("buckets_identity_above_detection", bucket_ok ? 1.0 : 0.0);

    const auto test_idx = world.indices(Split::Test);
    for (auto level : {CompressionLevel::Raw, CompressionLevel::C23, CompressionLevel::C40}) {
      World view = world;
      if (level != CompressionLevel::Raw) {
        for (auto i : test_idx) view.samples[i] = compress(world.samples[i], level, world.config);
      }
      const std::string tag = to_string(level);
      const auto base = evaluate_detection(view, test_idx, [&](const GridImage& g) { return detection_score(enc.detector, g); });
      report.record("baseline_auc_" + tag, base.video_auc);
      report.record("baseline_acc_" + tag, base.accuracy);
      if (fst) {
        const auto m = evaluate_detection(view, test_idx, [&](const GridImage& g) { return detection_score(*fst, g); });
        report.record("fst_auc_" + tag, m.video_auc);
        report.record("fst_acc_" + tag, m.accuracy);
      }
    }
  }

  const double dd = report.metrics["delta_detection"].mean();
  report.checks["delta_source_exceeds_detection_by_0.2"] = report.metrics["delta_source"].mean() - dd >= 0.2;
  report.checks["delta_target_exceeds_detection_by_0.2"] = report.metrics["delta_target"].mean() - dd >= 0.2;
  if (cfg.include_fst) {
    const auto& f = report.metrics["delta_fst"].values;
    const auto& b = report.metrics["delta_detection"].values;
    std::size_t wins = 0;
    for (std::size_t i = 0; i < f.size(); ++i) wins += f[i] > b[i];
    report.record("fst_delta_wins", static_cast<double>(wins));
    report.checks["fst_delta_exceeds_baseline_in_4_of_5"] = 5 * wins >= 4 * f.size();
    bool auc_ok = true;
    for (const char* tag : {"c23", "c40"}) {
      auc_ok = auc_ok && report.metrics[std::string("fst_auc_") + tag].mean() >=
                             report.metrics[std::string("baseline_auc_") + tag].mean();
    }
    report.checks["fst_compressed_auc_at_least_baseline"] = auc_ok;
  }
  report.tables.push_back(std::move(per_image));
  report.tables.push_back(std::move(buckets));
  return report;
}

InstabilityCurve instability_curve(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t images,
                                   std::span<const std::size_t> sample_counts) {
  const World world = gen_world(world_for_seed(cfg, seed));
  const DenseStack detector = train_detector(world, detector_train_indices(world), cfg, derive_seed(seed, kDetectorSeed));
  auto test_idx = world.indices(Split::Test);
  if (images < test_idx.size()) {
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < images; ++k) picked.push_back(test_idx[k * test_idx.size() / images]);
    test_idx = picked;
  }
  InstabilityCurve curve;
  curve.images = test_idx.size();
  for (auto t : sample_counts) {
    std::vector<double> values(test_idx.size());
    parallel_for(test_idx.size(), cfg.workers, [&](std::size_t k) {
      const auto& s = world.samples[test_idx[k]];
      const auto game = make_grid_game(s.grids, logit_scorer(detector, s.detection_label()), cfg.shapley.grid);
      const std::uint64_t a = derive_seed(seed, kShapleySeed) + 2 * s.id;
      values[k] = instability(game, t, a, a + 1, cfg.shapley.workers).value;
    });
    curve.samples.push_back(t);
    curve.mean_instability.push_back(mean_of(values));
  }
  return curve;
}

}  // namespace fstx
