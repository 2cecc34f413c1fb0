#pragma once

#include <filesystem>

#include "fstx/fstnet.hpp"
#include "fstx/nets.hpp"

namespace fstx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: "FSTXCKPT", u32 version, u32 section count, then per
/// section a name, a layer count and per layer (in, out, activation, weights,
/// bias). Integers and doubles are little-endian.
void save_checkpoint(const DenseStack& model, const std::filesystem::path& file);
void save_checkpoint(const FstModel& model, const std::filesystem::path& file);
DenseStack load_stack_checkpoint(const std::filesystem::path& file);
FstModel load_fst_checkpoint(const std::filesystem::path& file);

/// Directory with manifest.json (shapes) and params.csv
/// (section,layer,tensor,index,value). Values are written in shortest
/// round-trip form so reloading is bit-exact.
void save_checkpoint_csv(const DenseStack& model, const std::filesystem::path& dir);
void save_checkpoint_csv(const FstModel& model, const std::filesystem::path& dir);
DenseStack load_stack_checkpoint_csv(const std::filesystem::path& dir);
FstModel load_fst_checkpoint_csv(const std::filesystem::path& dir);

/// Dispatches on the path: directories are read as CSV checkpoints.
DenseStack load_stack(const std::filesystem::path& path);
FstModel load_fst(const std::filesystem::path& path);

}  // namespace fstx
