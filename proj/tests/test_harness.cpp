#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fstx/experiments.hpp"
#include "json.hpp"

using namespace fstx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fstx_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const int status = std::system((std::string(FSTX_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small enough to run in a few seconds.
ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.world.n_identities = 6;
  c.world.fake_identities = 4;
  c.world.clips_per_identity = 2;
  c.world.train_clips = 1;
  c.world.frames_per_clip = 1;
  c.detector.epochs = 5;
  c.encoders.epochs = 5;
  c.fst.epochs = 3;
  c.seeds = {1, 2};
  c.shapley.grid = 4;
  c.shapley.samples = 8;
  c.test_images = 3;
  c.n_pair_identities = 2;
  return c;
}

void write_config(const ExperimentConfig& c, const fs::path& file) {
  nlohmann::json j = c;
  std::ofstream(file) << j.dump(2);
}

RealVector read_phi(const fs::path& file) {
  std::ifstream is(file);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "grid_index,phi");
  RealVector phi;
  while (std::getline(is, line)) phi.push_back(std::stod(line.substr(line.find(',') + 1)));
  return phi;
}

}  // namespace

TEST(Config, DefaultsRoundTripAndUnknownKeysFail) {
  const auto dir = scratch("config");
  std::ofstream(dir / "default.json") << default_config_text();
  const auto loaded = load_config(dir / "default.json");
  EXPECT_EQ(config_hash(loaded), config_hash(ExperimentConfig{}));
  EXPECT_EQ(config_hash(loaded).size(), 16u);

  auto j = nlohmann::json::parse(default_config_text());
  j["world"]["identity_amplitud"] = 1.0;
  std::ofstream(dir / "typo.json") << j.dump();
  try {
    load_config(dir / "typo.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("identity_amplitud"), std::string::npos);
  }
  std::ofstream(dir / "partial.json") << R"({"seeds": [7]})";
  EXPECT_EQ(load_config(dir / "partial.json").seeds, (std::vector<std::uint64_t>{7}));
}

TEST(Config, HashTracksEveryField) {
  ExperimentConfig a, b;
  b.world.noise_sigma += 1e-9;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(derive_seed(1, kWorldSeed), derive_seed(1, kDetectorSeed));
  EXPECT_EQ(derive_seed(3, kFstSeed), derive_seed(3, kFstSeed));
}

TEST(Report, WriteIsByteStableAndReadable) {
  ExperimentReport r;
  r.experiment = "demo";
  r.config = nlohmann::json(ExperimentConfig{});
  r.config_hash = config_hash(ExperimentConfig{});
  r.seeds = {1, 2};
  r.record("m", 0.1);
  r.record("m", 0.30000000000000004);
  r.checks["m_positive"] = true;
  Table t{"curve_demo", {"k", "value"}, {}};
  t.add_row({static_cast<long long>(38), 0.5});
  t.add_row({static_cast<long long>(42), -1.25});
  r.tables.push_back(t);
  const auto a = scratch("report_a"), b = scratch("report_b");
  write_report(r, a);
  write_report(r, b);
  for (const char* f : {"report.json", "curve_demo.csv", "curve_demo.dat"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "curve_demo.csv"), "k,value\n38,0.5\n42,-1.25\n");
  const auto back = read_report(a / "report.json");
  EXPECT_EQ(back.metrics.at("m").values, r.metrics.at("m").values);
  EXPECT_EQ(render_report(back), render_report(r));
  EXPECT_NE(render_report(r).find("[pass] m_positive"), std::string::npos);
}

TEST(Pipelines, NormalizedQMatchesHandValues) {
  // Injected maps: detection mass sits off the identity grids.
  RealVector d(16, 0.0), s(16, 0.0), t(16, 0.0);
  for (std::size_t i = 0; i < 8; ++i) s[i] = 1.0 + static_cast<double>(i);
  for (std::size_t i = 8; i < 10; ++i) t[i] = 3.0;
  for (std::size_t i = 12; i < 16; ++i) d[i] = 2.0;
  const auto q = normalized_q(d, s, t);
  ASSERT_TRUE(q.has_value());
  // |d| = 4 so the unit map holds 0.5 on grids 12..15. Grids 0..9 carry the
  // identity mass and zero ties break toward lower indices, so the mask of
  // size k is exactly grids 0..k-1.
  for (std::size_t j = 0; j < q->kept_counts.size(); ++j) {
    const std::size_t k = q->kept_counts[j];
    double on = 0, off = 0;
    for (std::size_t i = 0; i < 16; ++i) (i < k ? on : off) += d[i] / 4.0;
    EXPECT_DOUBLE_EQ(q->values[j], off / static_cast<double>(16 - k) - on / static_cast<double>(k)) << k;
  }
  EXPECT_GT(q->mean, 0.0);
  EXPECT_FALSE(normalized_q(RealVector(16, 0.0), s, t).has_value());
  EXPECT_FALSE(normalized_q(d, s, RealVector(16, 0.0)).has_value());
}

TEST(Pipelines, ExperimentsAreDeterministic) {
  const auto cfg = tiny_config();
  const auto a = scratch("det_a"), b = scratch("det_b");
  write_report(run_hypothesis2(cfg), a);
  write_report(run_hypothesis2(cfg), b);
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
  }
  const auto r = read_report(a / "report.json");
  EXPECT_TRUE(r.checks.at("real_counts_equal"));
  EXPECT_EQ(r.metrics.at("paired_acc").values.size(), 2u);
}

TEST(Cli, ConfigInitAndAxioms) {
  const auto dir = scratch("cli_cfg");
  EXPECT_EQ(run("--out " + dir.string() + " config init"), 0);
  EXPECT_EQ(slurp(dir / "config.json"), default_config_text());
  EXPECT_EQ(run("verify axioms --games 5 --players 6"), 0);
  EXPECT_NE(run("no-such-command"), 0);
}

TEST(Cli, AttributeAdditiveAndExternalAgree) {
  const auto dir = scratch("cli_attr");
  write_config(tiny_config(), dir / "cfg.json");
  const std::string common = "--config " + (dir / "cfg.json").string() + " --seed 2 --samples 4 --grid 8 ";
  ASSERT_EQ(run(common + "--out " + (dir / "add").string() + " attribute --limit 2"), 0);
  ASSERT_EQ(run(common + "--out " + (dir / "ext").string() + " attribute --limit 2 --scorer 'exec:" +
                FSTX_FAKE_SCORER + " sum'"),
            0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "add" / "attribution_manifest.json"));
  ASSERT_EQ(manifest["completed"].size(), 2u);
  const World w = gen_world(world_for_seed(tiny_config(), 2));
  for (const auto& id : manifest["completed"]) {
    const auto stem = "phi_" + std::to_string(id.get<std::size_t>());
    const auto add = read_phi(dir / "add" / (stem + ".csv"));
    const auto ext = read_phi(dir / "ext" / (stem + ".csv"));
    const auto& img = w.samples[id.get<std::size_t>()].grids;
    ASSERT_EQ(add.size(), img.cell_count());
    for (std::size_t c = 0; c < add.size(); ++c) {
      double sum = 0;
      for (double x : img.cell(c)) sum += x;
      EXPECT_NEAR(add[c], sum, 1e-12);
      EXPECT_NEAR(ext[c], sum, 1e-12);
    }
    const auto side = nlohmann::json::parse(slurp(dir / "add" / (stem + ".json")));
    EXPECT_EQ(side["method"], "sampled");
    EXPECT_EQ(side["samples"], 4);
    EXPECT_NEAR(side["efficiency_residual"].get<double>(), 0.0, 1e-10);
  }
}

TEST(Cli, FailingScorerLeavesPartialManifest) {
  const auto dir = scratch("cli_fail");
  write_config(tiny_config(), dir / "cfg.json");
  const int rc = run("--config " + (dir / "cfg.json").string() + " --samples 2 --grid 4 --out " + dir.string() +
                     " attribute --limit 2 --scorer 'exec:" + FSTX_FAKE_SCORER + " die'");
  EXPECT_EQ(rc, 2);
  const auto partial = nlohmann::json::parse(slurp(dir / "partial_manifest.json"));
  EXPECT_TRUE(partial["completed"].empty());
  EXPECT_NE(partial["error"].get<std::string>().find("fake_scorer die"), std::string::npos);
}

TEST(Cli, TrainedCheckpointDrivesAttribution) {
  const auto dir = scratch("cli_train");
  write_config(tiny_config(), dir / "cfg.json");
  const std::string common = "--config " + (dir / "cfg.json").string() + " --out " + dir.string() + " ";
  ASSERT_EQ(run(common + "train baseline"), 0);
  ASSERT_EQ(run(common + "train --csv fst"), 0);
  ASSERT_TRUE(fs::exists(dir / "detector.ckpt"));
  ASSERT_TRUE(fs::exists(dir / "fst" / "manifest.json"));
  EXPECT_EQ(run(common + "--samples 4 --grid 4 attribute --limit 1 --scorer model:" + (dir / "detector.ckpt").string()),
            0);
  EXPECT_EQ(run(common + "--samples 4 --grid 4 attribute --limit 1 --scorer fst:" + (dir / "fst").string()), 0);
}
