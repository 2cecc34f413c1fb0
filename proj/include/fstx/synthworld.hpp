#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fstx/fstmetrics.hpp"
#include "fstx/game.hpp"
#include "fstx/numerics.hpp"

namespace fstx {

enum class Role { Real = 0, Fake = 1 };
enum class Split { Train, Test };
/// Which donor supplies the face region of a fake.
enum class FaceDonor { Target, Source };

std::string to_string(Role role);
std::string to_string(Split split);
std::string to_string(FaceDonor donor);
Role role_from_string(const std::string& s);
Split split_from_string(const std::string& s);
FaceDonor face_donor_from_string(const std::string& s);

/// Synthetic universe parameters.
///
/// Identity signatures live on the quant_step_c40 lattice so that
/// quantization keeps them intact, while the noise (truncated at 3 sigma) and
/// the artifact ride below half a step and vanish under c40. Boundary grids
/// carry no identity content; in fakes they hold the donor average plus the
/// planted artifact.
struct WorldConfig {
  std::size_t side = 8;
  std::size_t depth = 4;
  std::size_t n_identities = 12;
  /// Identities 0..fake_identities-1 take part in fakes; the rest only appear
  /// as extra reals.
  std::size_t fake_identities = 7;
  std::size_t max_fake_pairs = 0;  // 0 keeps every ordered pair
  std::size_t clips_per_identity = 4;
  std::size_t train_clips = 2;
  std::size_t frames_per_clip = 2;
  std::vector<std::size_t> face_region;      // empty -> central block
  std::vector<std::size_t> boundary_region;  // empty -> ring around the face
  double identity_amplitude = 0.4;
  double artifact_amplitude = 0.1;
  double noise_sigma = 0.03;
  double quant_step_c23 = 0.2;
  double quant_step_c40 = 0.4;
  FaceDonor face_donor = FaceDonor::Target;
  std::uint64_t seed = 0;

  /// Fills default regions and checks every invariant; throws ConfigError.
  void finalize();
  std::size_t cell_count() const noexcept { return side * side; }
  std::size_t input_dim() const noexcept { return side * side * depth; }
  double quant_step(CompressionLevel level) const;
  std::vector<std::size_t> background_region() const;
};

struct ImageSample {
  std::uint32_t id = 0;
  GridImage grids;
  Role role = Role::Real;
  std::uint32_t source_id = 0;
  std::uint32_t target_id = 0;
  std::uint32_t own_id = 0;  // face identity for fakes
  CompressionLevel compression = CompressionLevel::Raw;
  std::uint32_t video_group = 0;
  Split split = Split::Train;
  // Raw reals a fake was composed from; equal to id for reals.
  std::uint32_t source_sample = 0;
  std::uint32_t target_sample = 0;

  int detection_label() const noexcept { return role == Role::Fake ? 1 : 0; }
};

/// Indices into World::samples.
struct FstTriple {
  std::size_t fake;
  std::size_t source;
  std::size_t target;
};

struct World {
  WorldConfig config;
  std::vector<RealVector> signatures;  // per identity, cell-major like GridImage
  RealVector artifact;                 // cell-major, zero off the boundary
  std::vector<ImageSample> samples;
  std::vector<FstTriple> triples;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(Split split, Role role) const;
  /// Grids the source identity shows in a fake (background for the default donor).
  std::vector<std::size_t> source_region() const;
  std::vector<std::size_t> target_region() const;
  const std::vector<std::size_t>& artifact_region() const { return config.boundary_region; }
};

World gen_world(WorldConfig config);

/// Fixed +-artifact_amplitude pattern on boundary grids, derived from the seed.
RealVector artifact_pattern(const WorldConfig& config);

ImageSample compose_fake(const ImageSample& source, const ImageSample& target, const WorldConfig& config);

/// Quantizes every feature to the nearest multiple of the level's step.
ImageSample compress(const ImageSample& image, CompressionLevel level, const WorldConfig& config);

double quantize(double value, double step);

struct TrainingSets {
  std::vector<std::size_t> paired;
  std::vector<std::size_t> unpaired;
  std::size_t fake_count = 0;
  std::size_t real_count = 0;  // unique reals per set, equal across sets
};

/// Paired: train fakes whose donors are both among the first n identities plus
/// exactly the reals they were composed from. Unpaired: the same fakes plus as
/// many train reals taken from identities >= n.
TrainingSets build_paired_unpaired(const World& world, std::size_t n_pair_identities);

/// Repeats reals so that reals : fakes is about `ratio` (never drops samples).
std::vector<std::size_t> balance_reals(const World& world, std::span<const std::size_t> subset, double ratio);

/// Nearest identity signature over face and background grids.
std::uint32_t nearest_signature(const World& world, const GridImage& image);

/// Mean pairwise L2 distance between identity signatures.
double mean_signature_distance(const World& world);

void export_world(const World& world, const std::filesystem::path& dir);
World import_world(const std::filesystem::path& dir);

}  // namespace fstx
