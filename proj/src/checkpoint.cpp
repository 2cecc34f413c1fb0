#include "fstx/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fstx/errors.hpp"
#include "fstx/report.hpp"
#include "json.hpp"

namespace fstx {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'F', 'S', 'T', 'X', 'C', 'K', 'P', 'T'};
const std::string kStackSection = "stack";

struct Section {
  std::string name;
  const DenseStack* stack;
};

std::vector<Section> sections_of(const DenseStack& model) { return {{kStackSection, &model}}; }

std::vector<Section> sections_of(const FstModel& model) {
  std::vector<Section> out;
  const auto stacks = model.sections();
  for (std::size_t i = 0; i < stacks.size(); ++i) out.push_back({FstModel::section_names()[i], stacks[i]});
  return out;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(file.string() + ": truncated checkpoint");
  return v;
}

void write_binary(const std::vector<Section>& sections, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError("cannot write " + file.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.stack->layers().size()));
    for (const auto& l : s.stack->layers()) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_dim));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(l.out_dim));
      put<std::uint8_t>(os, static_cast<std::uint8_t>(l.activation));
      os.write(reinterpret_cast<const char*>(l.weights.data()), static_cast<std::streamsize>(l.weights.size() * 8));
      os.write(reinterpret_cast<const char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * 8));
    }
  }
  if (!os) throw FormatError("write failed for " + file.string());
}

Activation activation_code(std::uint8_t code, const std::filesystem::path& file) {
  if (code > static_cast<std::uint8_t>(Activation::Identity)) {
    throw FormatError(file.string() + ": unknown activation code " + std::to_string(code));
  }
  return static_cast<Activation>(code);
}

std::vector<std::pair<std::string, DenseStack>> read_binary(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot open " + file.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError(file.string() + ": not a checkpoint");
  const auto version = get<std::uint32_t>(is, file);
  if (version != kCheckpointVersion) {
    throw FormatError(file.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(is, file);
  std::vector<std::pair<std::string, DenseStack>> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    std::string name(get<std::uint32_t>(is, file), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw FormatError(file.string() + ": truncated");
    const auto n_layers = get<std::uint32_t>(is, file);
    std::vector<DenseLayer> layers;
    for (std::uint32_t k = 0; k < n_layers; ++k) {
      DenseLayer l;
      l.in_dim = get<std::uint32_t>(is, file);
      l.out_dim = get<std::uint32_t>(is, file);
      l.activation = activation_code(get<std::uint8_t>(is, file), file);
      l.weights.resize(l.in_dim * l.out_dim);
      l.bias.resize(l.out_dim);
      is.read(reinterpret_cast<char*>(l.weights.data()), static_cast<std::streamsize>(l.weights.size() * 8));
      is.read(reinterpret_cast<char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * 8));
      if (!is) throw FormatError(file.string() + ": truncated layer data");
      layers.push_back(std::move(l));
    }
    out.emplace_back(std::move(name), DenseStack(std::move(layers)));
  }
  return out;
}

void write_csv(const std::vector<Section>& sections, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "fstx-checkpoint-csv";
  manifest["version"] = kCheckpointVersion;
  std::ofstream params(dir / "params.csv");
  if (!params) throw FormatError("cannot write " + (dir / "params.csv").string());
  params << "section,layer,tensor,index,value\n";
  for (const auto& s : sections) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t k = 0; k < s.stack->layers().size(); ++k) {
      const auto& l = s.stack->layers()[k];
      layers.push_back({{"in", l.in_dim}, {"out", l.out_dim}, {"activation", to_string(l.activation)}});
      for (std::size_t i = 0; i < l.weights.size(); ++i) {
        params << s.name << ',' << k << ",w," << i << ',' << format_number(l.weights[i]) << '\n';
      }
      for (std::size_t i = 0; i < l.bias.size(); ++i) {
        params << s.name << ',' << k << ",b," << i << ',' << format_number(l.bias[i]) << '\n';
      }
    }
    manifest["sections"].push_back({{"name", s.name}, {"layers", layers}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

double parse_double(const std::string& text, const std::filesystem::path& file) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(file.string() + ": bad number '" + text + "'");
  }
  return v;
}

std::vector<std::pair<std::string, DenseStack>> read_csv(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream ms(manifest_path);
  if (!ms) throw FormatError("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ms);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "fstx-checkpoint-csv") throw FormatError(manifest_path.string() + ": wrong format");
  if (manifest.value("version", 0u) != kCheckpointVersion) throw FormatError(manifest_path.string() + ": bad version");

  std::vector<std::pair<std::string, std::vector<DenseLayer>>> shells;
  for (const auto& s : manifest.at("sections")) {
    std::vector<DenseLayer> layers;
    for (const auto& l : s.at("layers")) {
      DenseLayer d;
      d.in_dim = l.at("in").get<std::size_t>();
      d.out_dim = l.at("out").get<std::size_t>();
      d.activation = activation_from_string(l.at("activation").get<std::string>());
      d.weights.assign(d.in_dim * d.out_dim, 0.0);
      d.bias.assign(d.out_dim, 0.0);
      layers.push_back(std::move(d));
    }
    shells.emplace_back(s.at("name").get<std::string>(), std::move(layers));
  }

  const auto params_path = dir / "params.csv";
  std::ifstream ps(params_path);
  if (!ps) throw FormatError("cannot open " + params_path.string());
  std::string line;
  std::getline(ps, line);
  std::size_t filled = 0, expected = 0;
  for (const auto& [name, layers] : shells) {
    for (const auto& l : layers) expected += l.weights.size() + l.bias.size();
  }
  while (std::getline(ps, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 5) throw FormatError(params_path.string() + ": bad row '" + line + "'");
    auto it = std::find_if(shells.begin(), shells.end(), [&](const auto& s) { return s.first == f[0]; });
    if (it == shells.end()) throw FormatError(params_path.string() + ": unknown section " + f[0]);
    const auto k = std::stoul(f[1]);
    const auto i = std::stoul(f[3]);
    if (k >= it->second.size()) throw FormatError(params_path.string() + ": layer out of range in '" + line + "'");
    auto& tensor = f[2] == "w" ? it->second[k].weights : it->second[k].bias;
    if ((f[2] != "w" && f[2] != "b") || i >= tensor.size()) {
      throw FormatError(params_path.string() + ": bad tensor index in '" + line + "'");
    }
    tensor[i] = parse_double(f[4], params_path);
    ++filled;
  }
  if (filled != expected) {
    throw FormatError(params_path.string() + ": expected " + std::to_string(expected) + " values, found " +
                      std::to_string(filled));
  }
  std::vector<std::pair<std::string, DenseStack>> out;
  for (auto& [name, layers] : shells) out.emplace_back(name, DenseStack(std::move(layers)));
  return out;
}

DenseStack as_stack(std::vector<std::pair<std::string, DenseStack>> sections, const std::filesystem::path& path) {
  if (sections.size() != 1 || sections[0].first != kStackSection) {
    throw FormatError(path.string() + ": not a single-network checkpoint");
  }
  return std::move(sections[0].second);
}

FstModel as_fst(std::vector<std::pair<std::string, DenseStack>> sections, const std::filesystem::path& path) {
  const auto& names = FstModel::section_names();
  if (sections.size() != names.size()) throw FormatError(path.string() + ": not an FST checkpoint");
  FstModel model;
  auto targets = model.sections();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (sections[i].first != names[i]) {
      throw FormatError(path.string() + ": expected section " + names[i] + ", found " + sections[i].first);
    }
    *targets[i] = std::move(sections[i].second);
  }
  model.validate();
  return model;
}

}  // namespace

void save_checkpoint(const DenseStack& model, const std::filesystem::path& file) {
  write_binary(sections_of(model), file);
}
void save_checkpoint(const FstModel& model, const std::filesystem::path& file) {
  write_binary(sections_of(model), file);
}
DenseStack load_stack_checkpoint(const std::filesystem::path& file) { return as_stack(read_binary(file), file); }
FstModel load_fst_checkpoint(const std::filesystem::path& file) { return as_fst(read_binary(file), file); }

void save_checkpoint_csv(const DenseStack& model, const std::filesystem::path& dir) {
  write_csv(sections_of(model), dir);
}
void save_checkpoint_csv(const FstModel& model, const std::filesystem::path& dir) { write_csv(sections_of(model), dir); }
DenseStack load_stack_checkpoint_csv(const std::filesystem::path& dir) { return as_stack(read_csv(dir), dir); }
FstModel load_fst_checkpoint_csv(const std::filesystem::path& dir) { return as_fst(read_csv(dir), dir); }

DenseStack load_stack(const std::filesystem::path& path) {
  return std::filesystem::is_directory(path) ? load_stack_checkpoint_csv(path) : load_stack_checkpoint(path);
}
FstModel load_fst(const std::filesystem::path& path) {
  return std::filesystem::is_directory(path) ? load_fst_checkpoint_csv(path) : load_fst_checkpoint(path);
}

}  // namespace fstx
