#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "fstx/checkpoint.hpp"
#include "fstx/errors.hpp"
#include "json.hpp"

using namespace fstx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fstx_ckpt_" + name);
  fs::remove_all(p);
  return p;
}

DenseStack awkward_stack() {
  SeededRng rng(3);
  const std::size_t dims[] = {5, 4, 3};
  const Activation acts[] = {Activation::Sigmoid, Activation::Identity};
  auto m = DenseStack::create(dims, acts, rng);
  // Values that do not survive a naive %g round trip.
  m.layers()[0].weights[0] = 0.1 + 0.2;
  m.layers()[0].weights[1] = 1.0 / 3.0;
  m.layers()[0].weights[2] = -5e-324;
  m.layers()[1].bias[0] = 1.7976931348623157e308;
  return m;
}

bool bit_equal(const DenseStack& a, const DenseStack& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t k = 0; k < a.layers().size(); ++k) {
    const auto& x = a.layers()[k];
    const auto& y = b.layers()[k];
    if (x.in_dim != y.in_dim || x.out_dim != y.out_dim || x.activation != y.activation) return false;
    if (std::memcmp(x.weights.data(), y.weights.data(), x.weights.size() * 8) != 0) return false;
    if (std::memcmp(x.bias.data(), y.bias.data(), x.bias.size() * 8) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(Checkpoint, BinaryRoundTripIsBitExact) {
  const auto m = awkward_stack();
  const auto f = scratch("bin.ckpt");
  save_checkpoint(m, f);
  EXPECT_TRUE(bit_equal(load_stack_checkpoint(f), m));
  EXPECT_TRUE(bit_equal(load_stack(f), m));
  std::ifstream is(f, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "FSTXCKPT");
}

TEST(Checkpoint, CsvRoundTripIsBitExact) {
  const auto m = awkward_stack();
  const auto d = scratch("csv");
  save_checkpoint_csv(m, d);
  EXPECT_TRUE(fs::exists(d / "manifest.json"));
  EXPECT_TRUE(bit_equal(load_stack_checkpoint_csv(d), m));
  EXPECT_TRUE(bit_equal(load_stack(d), m));
}

TEST(Checkpoint, FstModelNamesItsSections) {
  SeededRng rng(4);
  const auto model = FstModel::create({12, 5, 16, 6, 7, 8}, rng);
  const auto f = scratch("fst.ckpt");
  const auto d = scratch("fst_csv");
  save_checkpoint(model, f);
  save_checkpoint_csv(model, d);
  EXPECT_TRUE(load_fst_checkpoint(f) == model);
  EXPECT_TRUE(load_fst_checkpoint_csv(d) == model);
  std::ifstream ms(d / "manifest.json");
  const auto manifest = nlohmann::json::parse(ms);
  ASSERT_EQ(manifest["sections"].size(), FstModel::section_names().size());
  for (std::size_t i = 0; i < manifest["sections"].size(); ++i) {
    EXPECT_EQ(manifest["sections"][i]["name"], FstModel::section_names()[i]);
  }
  // A plain network is not an FST model and vice versa.
  EXPECT_THROW(load_stack_checkpoint(f), FormatError);
  const auto s = scratch("plain.ckpt");
  save_checkpoint(awkward_stack(), s);
  EXPECT_THROW(load_fst_checkpoint(s), FormatError);
}

TEST(Checkpoint, RejectsDamagedFiles) {
  const auto f = scratch("bad.ckpt");
  save_checkpoint(awkward_stack(), f);
  {
    std::fstream io(f, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(8);
    const std::uint32_t v = 99;
    io.write(reinterpret_cast<const char*>(&v), 4);
  }
  EXPECT_THROW(load_stack_checkpoint(f), FormatError);
  std::ofstream(f, std::ios::binary) << "NOTACKPT";
  EXPECT_THROW(load_stack_checkpoint(f), FormatError);
  save_checkpoint(awkward_stack(), f);
  fs::resize_file(f, fs::file_size(f) - 3);
  EXPECT_THROW(load_stack_checkpoint(f), FormatError);
  EXPECT_THROW(load_stack_checkpoint(scratch("missing.ckpt")), FormatError);

  const auto d = scratch("bad_csv");
  save_checkpoint_csv(awkward_stack(), d);
  std::ofstream(d / "params.csv", std::ios::app) << "stack,0,w,0,notanumber\n";
  EXPECT_THROW(load_stack_checkpoint_csv(d), FormatError);
}
