#include "fstx/synthworld.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fstx/config.hpp"
#include "fstx/errors.hpp"

namespace fstx {

namespace {

// RNG stream ids per purpose.
constexpr std::uint64_t kSignatureStream = 1;
constexpr std::uint64_t kArtifactStream = 2;
constexpr std::uint64_t kNoiseStreamBase = 1'000'000;

constexpr double kNoiseTruncation = 3.0;

}  // namespace

std::string to_string(Role role) { return role == Role::Fake ? "fake" : "real"; }
std::string to_string(Split split) { return split == Split::Test ? "test" : "train"; }
std::string to_string(FaceDonor donor) { return donor == FaceDonor::Source ? "source" : "target"; }

Role role_from_string(const std::string& s) {
  if (s == "real") return Role::Real;
  if (s == "fake") return Role::Fake;
  throw ParameterError("unknown role '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ParameterError("unknown split '" + s + "'");
}

FaceDonor face_donor_from_string(const std::string& s) {
  if (s == "target") return FaceDonor::Target;
  if (s == "source") return FaceDonor::Source;
  throw ConfigError("unknown face donor '" + s + "' (expected target or source)");
}

void WorldConfig::finalize() {
  if (side < 2) throw ConfigError("world side must be >= 2");
  if (depth == 0) throw ConfigError("world depth must be >= 1");
  if (n_identities < 4) throw ConfigError("need at least 4 identities");
  if (fake_identities < 2 || fake_identities > n_identities) {
    throw ConfigError("fake_identities must be in [2, n_identities]");
  }
  if (clips_per_identity < 2 || train_clips == 0 || train_clips >= clips_per_identity) {
    throw ConfigError("need 0 < train_clips < clips_per_identity");
  }
  if (frames_per_clip == 0) throw ConfigError("frames_per_clip must be >= 1");

  const std::size_t n = cell_count();
  if (face_region.empty() && boundary_region.empty()) {
    // Central block of half the side, ringed by one grid of boundary.
    const std::size_t lo = side / 4;
    const std::size_t hi = side - side / 4;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const bool in_face = r >= lo && r < hi && c >= lo && c < hi;
        const bool in_ring = r + 1 >= lo && r < hi + 1 && c + 1 >= lo && c < hi + 1 && lo >= 1;
        if (in_face) {
          face_region.push_back(r * side + c);
        } else if (in_ring) {
          boundary_region.push_back(r * side + c);
        }
      }
    }
  }
  std::set<std::size_t> face(face_region.begin(), face_region.end());
  std::set<std::size_t> boundary(boundary_region.begin(), boundary_region.end());
  if (face.empty() || boundary.empty()) throw ConfigError("face and boundary regions must be non-empty");
  if (face.size() != face_region.size() || boundary.size() != boundary_region.size()) {
    throw ConfigError("region lists contain duplicates");
  }
  if (*face.rbegin() >= n || *boundary.rbegin() >= n) throw ConfigError("region index out of range");
  for (auto i : boundary) {
    if (face.count(i)) throw ConfigError("face and boundary regions overlap at grid " + std::to_string(i));
  }
  if (face.size() + boundary.size() >= n) throw ConfigError("face and boundary regions leave no background");
  std::sort(face_region.begin(), face_region.end());
  std::sort(boundary_region.begin(), boundary_region.end());

  if (!(quant_step_c23 > 0.0 && quant_step_c40 > 0.0)) throw ConfigError("quantization steps must be positive");
  if (!(artifact_amplitude >= 0.0 && artifact_amplitude < quant_step_c40 / 2.0 &&
        quant_step_c40 / 2.0 < identity_amplitude)) {
    throw ConfigError("need artifact_amplitude < quant_step_c40 / 2 < identity_amplitude");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
}

double WorldConfig::quant_step(CompressionLevel level) const {
  switch (level) {
    case CompressionLevel::C23:
      return quant_step_c23;
    case CompressionLevel::C40:
      return quant_step_c40;
    case CompressionLevel::Raw:
      break;
  }
  throw ParameterError("raw has no quantization step");
}

std::vector<std::size_t> WorldConfig::background_region() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cell_count(); ++i) {
    if (!std::binary_search(face_region.begin(), face_region.end(), i) &&
        !std::binary_search(boundary_region.begin(), boundary_region.end(), i)) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> World::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> World::indices(Split split, Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split && samples[i].role == role) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> World::source_region() const {
  return config.face_donor == FaceDonor::Source ? config.face_region : config.background_region();
}

std::vector<std::size_t> World::target_region() const {
  return config.face_donor == FaceDonor::Target ? config.face_region : config.background_region();
}

RealVector artifact_pattern(const WorldConfig& config) {
  RealVector pattern(config.input_dim(), 0.0);
  SeededRng rng(config.seed, kArtifactStream);
  for (auto cell : config.boundary_region) {
    for (std::size_t d = 0; d < config.depth; ++d) {
      pattern[cell * config.depth + d] = config.artifact_amplitude * rng.sign();
    }
  }
  return pattern;
}

ImageSample compose_fake(const ImageSample& source, const ImageSample& target, const WorldConfig& config) {
  if (source.role != Role::Real || target.role != Role::Real) {
    throw CompositionError("compose_fake: donors must be real images");
  }
  if (source.compression != CompressionLevel::Raw || target.compression != CompressionLevel::Raw) {
    throw CompositionError("compose_fake: donors must be raw");
  }
  if (source.own_id == target.own_id) {
    throw CompositionError("compose_fake: source and target share identity " + std::to_string(source.own_id));
  }
  if (source.grids.side() != config.side || target.grids.side() != config.side ||
      source.grids.depth() != config.depth || target.grids.depth() != config.depth) {
    throw DimensionError("compose_fake: donor shape does not match the world");
  }

  const RealVector artifact = artifact_pattern(config);
  const ImageSample& face_donor = config.face_donor == FaceDonor::Target ? target : source;
  const ImageSample& rest_donor = config.face_donor == FaceDonor::Target ? source : target;

  ImageSample fake;
  fake.role = Role::Fake;
  fake.source_id = source.own_id;
  fake.target_id = target.own_id;
  fake.own_id = face_donor.own_id;
  fake.compression = CompressionLevel::Raw;
  fake.source_sample = source.id;
  fake.target_sample = target.id;
  fake.grids = rest_donor.grids;
  for (auto cell : config.face_region) {
    auto dst = fake.grids.cell(cell);
    auto src = face_donor.grids.cell(cell);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (auto cell : config.boundary_region) {
    auto dst = fake.grids.cell(cell);
    auto a = source.grids.cell(cell);
    auto b = target.grids.cell(cell);
    for (std::size_t d = 0; d < config.depth; ++d) {
      dst[d] = 0.5 * (a[d] + b[d]) + artifact[cell * config.depth + d];
    }
  }
  return fake;
}

double quantize(double value, double step) { return step * std::round(value / step); }

ImageSample compress(const ImageSample& image, CompressionLevel level, const WorldConfig& config) {
  if (level == CompressionLevel::Raw) throw ParameterError("compress: target level must be c23 or c40");
  if (image.compression != CompressionLevel::Raw) {
    throw StateError("compress: sample " + std::to_string(image.id) + " is already " + to_string(image.compression));
  }
  const double step = config.quant_step(level);
  ImageSample out = image;
  for (double& x : out.grids.flat()) x = quantize(x, step);
  out.compression = level;
  return out;
}

World gen_world(WorldConfig config) {
  config.finalize();
  World world;
  world.config = config;
  const std::size_t dim = config.input_dim();
  const double lattice = config.quant_step_c40;

  {
    SeededRng rng(config.seed, kSignatureStream);
    const std::vector<std::size_t> identity_cells = [&] {
      auto cells = config.background_region();
      cells.insert(cells.end(), config.face_region.begin(), config.face_region.end());
      std::sort(cells.begin(), cells.end());
      return cells;
    }();
    // Amplitude snapped to the lattice so quantization leaves signatures intact.
    const double amp = std::max(lattice, lattice * std::round(config.identity_amplitude / lattice));
    for (std::size_t id = 0; id < config.n_identities; ++id) {
      RealVector sig(dim, 0.0);
      for (auto cell : identity_cells) {
        for (std::size_t d = 0; d < config.depth; ++d) sig[cell * config.depth + d] = amp * rng.sign();
      }
      world.signatures.push_back(std::move(sig));
    }
  }
  world.artifact = artifact_pattern(config);

  std::uint32_t next_group = 0;
  // real_index[id][clip][frame] -> sample index
  std::vector<std::vector<std::vector<std::size_t>>> real_index(
      config.n_identities,
      std::vector<std::vector<std::size_t>>(config.clips_per_identity, std::vector<std::size_t>(config.frames_per_clip)));
  for (std::uint32_t id = 0; id < config.n_identities; ++id) {
    for (std::size_t clip = 0; clip < config.clips_per_identity; ++clip) {
      const std::uint32_t group = next_group++;
      for (std::size_t frame = 0; frame < config.frames_per_clip; ++frame) {
        ImageSample s;
        s.id = static_cast<std::uint32_t>(world.samples.size());
        s.role = Role::Real;
        s.source_id = s.target_id = s.own_id = id;
        s.video_group = group;
        s.split = clip < config.train_clips ? Split::Train : Split::Test;
        s.source_sample = s.target_sample = s.id;
        RealVector values = world.signatures[id];
        SeededRng noise(config.seed, kNoiseStreamBase + s.id);
        for (double& x : values) x += config.noise_sigma * noise.truncated_normal(kNoiseTruncation);
        s.grids = GridImage(config.side, config.depth, std::move(values));
        real_index[id][clip][frame] = world.samples.size();
        world.samples.push_back(std::move(s));
      }
    }
  }

  // Pairs ordered by the larger identity so the first m(m-1) pairs stay
  // within identities [0, m).
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t hi = 1; hi < config.fake_identities; ++hi) {
    for (std::uint32_t s = 0; s <= hi; ++s) {
      for (std::uint32_t t = 0; t <= hi; ++t) {
        if (s == t || std::max(s, t) != hi) continue;
        pairs.emplace_back(s, t);
      }
    }
  }
  if (config.max_fake_pairs > 0 && pairs.size() > config.max_fake_pairs) pairs.resize(config.max_fake_pairs);

  for (const auto& [s, t] : pairs) {
    for (std::size_t clip = 0; clip < config.clips_per_identity; ++clip) {
      const std::uint32_t group = next_group++;
      for (std::size_t frame = 0; frame < config.frames_per_clip; ++frame) {
        const std::size_t si = real_index[s][clip][frame];
        const std::size_t ti = real_index[t][clip][frame];
        ImageSample fake = compose_fake(world.samples[si], world.samples[ti], config);
        fake.id = static_cast<std::uint32_t>(world.samples.size());
        fake.video_group = group;
        fake.split = world.samples[si].split;
        world.triples.push_back({world.samples.size(), si, ti});
        world.samples.push_back(std::move(fake));
      }
    }
  }
  return world;
}

TrainingSets build_paired_unpaired(const World& world, std::size_t n_pair_identities) {
  const auto& cfg = world.config;
  if (n_pair_identities < 2) throw ConfigError("n_pair_identities must be >= 2");
  if (cfg.n_identities < 2 * n_pair_identities) {
    throw ConfigError("world has " + std::to_string(cfg.n_identities) + " identities, need >= " +
                      std::to_string(2 * n_pair_identities));
  }
  TrainingSets sets;
  std::set<std::size_t> paired_reals;
  for (const auto& tr : world.triples) {
    const auto& f = world.samples[tr.fake];
    if (f.split != Split::Train) continue;
    if (f.source_id >= n_pair_identities || f.target_id >= n_pair_identities) continue;
    sets.paired.push_back(tr.fake);
    sets.unpaired.push_back(tr.fake);
    paired_reals.insert(tr.source);
    paired_reals.insert(tr.target);
  }
  if (sets.paired.empty()) throw ConfigError("no training fakes among the first identities");
  sets.fake_count = sets.paired.size();
  sets.real_count = paired_reals.size();
  sets.paired.insert(sets.paired.end(), paired_reals.begin(), paired_reals.end());

  std::size_t taken = 0;
  for (std::size_t i = 0; i < world.samples.size() && taken < sets.real_count; ++i) {
    const auto& s = world.samples[i];
    if (s.role == Role::Real && s.split == Split::Train && s.own_id >= n_pair_identities) {
      sets.unpaired.push_back(i);
      ++taken;
    }
  }
  if (taken < sets.real_count) {
    throw ConfigError("not enough disjoint train reals for the unpaired set (" + std::to_string(taken) + " of " +
                      std::to_string(sets.real_count) + ")");
  }
  return sets;
}

std::vector<std::size_t> balance_reals(const World& world, std::span<const std::size_t> subset, double ratio) {
  std::vector<std::size_t> reals;
  std::vector<std::size_t> out;
  std::size_t fakes = 0;
  for (auto i : subset) {
    if (world.samples[i].role == Role::Real) {
      reals.push_back(i);
    } else {
      ++fakes;
    }
    out.push_back(i);
  }
  if (reals.empty() || ratio <= 0.0) return out;
  const auto wanted = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(fakes)));
  for (std::size_t k = reals.size(); k < wanted; ++k) out.push_back(reals[k % reals.size()]);
  return out;
}

std::uint32_t nearest_signature(const World& world, const GridImage& image) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  auto x = image.flat();
  for (std::uint32_t id = 0; id < world.signatures.size(); ++id) {
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d += (x[k] - world.signatures[id][k]) * (x[k] - world.signatures[id][k]);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

double mean_signature_distance(const World& world) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < world.signatures.size(); ++a) {
    for (std::size_t b = a + 1; b < world.signatures.size(); ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k < world.signatures[a].size(); ++k) {
        d += (world.signatures[a][k] - world.signatures[b][k]) * (world.signatures[a][k] - world.signatures[b][k]);
      }
      total += std::sqrt(d);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

// --- CSV export / import ---------------------------------------------------

namespace {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc()) throw ParameterError("bad number '" + std::string(s) + "'");
  return x;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void export_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "world.json");
    f << nlohmann::json(world.config).dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "manifest.csv");
    f << "sample_id,role,source_id,target_id,own_id,compression,video_group,split,source_sample,target_sample\n";
    for (const auto& s : world.samples) {
      f << s.id << ',' << to_string(s.role) << ',' << s.source_id << ',' << s.target_id << ',' << s.own_id << ','
        << to_string(s.compression) << ',' << s.video_group << ',' << to_string(s.split) << ',' << s.source_sample
        << ',' << s.target_sample << '\n';
    }
  }
  {
    std::ofstream f(dir / "grids.csv");
    f << "sample_id,grid_index,feature_index,value\n";
    for (const auto& s : world.samples) {
      for (std::size_t cell = 0; cell < s.grids.cell_count(); ++cell) {
        auto values = s.grids.cell(cell);
        for (std::size_t d = 0; d < values.size(); ++d) {
          f << s.id << ',' << cell << ',' << d << ',' << format_double(values[d]) << '\n';
        }
      }
    }
  }
}

World import_world(const std::filesystem::path& dir) {
  World world;
  {
    std::ifstream f(dir / "world.json");
    if (!f) throw ConfigError("missing " + (dir / "world.json").string());
    world.config = nlohmann::json::parse(f).get<WorldConfig>();
    world.config.finalize();
  }
  const auto& cfg = world.config;
  {
    std::ifstream f(dir / "manifest.csv");
    if (!f) throw ConfigError("missing " + (dir / "manifest.csv").string());
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto col = split_csv(line);
      if (col.size() < 7) throw ParameterError("manifest row has " + std::to_string(col.size()) + " columns");
      ImageSample s;
      s.id = static_cast<std::uint32_t>(std::stoul(col[0]));
      s.role = role_from_string(col[1]);
      s.source_id = static_cast<std::uint32_t>(std::stoul(col[2]));
      s.target_id = static_cast<std::uint32_t>(std::stoul(col[3]));
      s.own_id = static_cast<std::uint32_t>(std::stoul(col[4]));
      s.compression = compression_from_string(col[5]);
      s.video_group = static_cast<std::uint32_t>(std::stoul(col[6]));
      s.split = col.size() > 7 ? split_from_string(col[7]) : Split::Train;
      s.source_sample = col.size() > 8 ? static_cast<std::uint32_t>(std::stoul(col[8])) : s.id;
      s.target_sample = col.size() > 9 ? static_cast<std::uint32_t>(std::stoul(col[9])) : s.id;
      if (s.id != world.samples.size()) throw ParameterError("manifest sample ids must be dense and ordered");
      s.grids = GridImage(cfg.side, cfg.depth);
      world.samples.push_back(std::move(s));
    }
  }
  {
    std::ifstream f(dir / "grids.csv");
    if (!f) throw ConfigError("missing " + (dir / "grids.csv").string());
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto col = split_csv(line);
      if (col.size() != 4) throw ParameterError("grids row must have 4 columns");
      const auto id = std::stoul(col[0]);
      const auto cell = std::stoul(col[1]);
      const auto d = std::stoul(col[2]);
      if (id >= world.samples.size() || cell >= cfg.cell_count() || d >= cfg.depth) {
        throw ParameterError("grids row out of range: " + line);
      }
      world.samples[id].grids.cell(cell)[d] = parse_double(col[3]);
    }
  }
  // Signatures are a pure function of the config; rebuild them.
  const World fresh = gen_world(cfg);
  world.signatures = fresh.signatures;
  world.artifact = fresh.artifact;
  for (std::size_t i = 0; i < world.samples.size(); ++i) {
    const auto& s = world.samples[i];
    if (s.role == Role::Fake) world.triples.push_back({i, s.source_sample, s.target_sample});
  }
  return world;
}

}  // namespace fstx
