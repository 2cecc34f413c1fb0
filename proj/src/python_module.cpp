// Python bindings. JSON-shaped values cross the boundary as strings; the
// package wrapper decodes them.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fstx/config.hpp"
#include "fstx/experiments.hpp"
#include "fstx/fstmetrics.hpp"
#include "fstx/report.hpp"
#include "fstx/shapley.hpp"

namespace py = pybind11;
using namespace fstx;

namespace {

std::vector<int> mask_bits(const RelevanceMask& m) { return {m.bits().begin(), m.bits().end()}; }

TableGame table_of(std::size_t n, const std::vector<double>& values) { return TableGame(n, values); }

ExperimentConfig config_of(const std::string& text) {
  if (text.empty()) return {};
  ExperimentConfig c;
  try {
    from_json(nlohmann::json::parse(text), c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentReport run_named(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "hyp1") return run_hypothesis1(cfg);
  if (name == "hyp2") return run_hypothesis2(cfg);
  if (name == "hyp3") return run_hypothesis3(cfg);
  throw ParameterError("unknown experiment: " + name);
}

}  // namespace

PYBIND11_MODULE(_fstx, m) {
  m.doc() = "fstx core";

  auto base = py::register_exception<Error>(m, "FstxError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def(
      "exact_shapley", [](std::size_t n, const std::vector<double>& values) { return exact_shapley(table_of(n, values)).phi; },
      py::arg("n"), py::arg("values"), "Exact Shapley values of a table game (2^n values by bit word).");
  m.def(
      "sampled_shapley",
      [](std::size_t n, const std::vector<double>& values, std::size_t samples, std::uint64_t seed, std::size_t workers) {
        return sampled_shapley(table_of(n, values), {samples, seed, workers}).phi;
      },
      py::arg("n"), py::arg("values"), py::arg("samples") = kDefaultSamples, py::arg("seed") = 0,
      py::arg("workers") = 1);
  m.def(
      "shapley_of",
      [](std::size_t n, const std::function<double(std::uint64_t)>& v, std::size_t samples, std::uint64_t seed) {
        // The callable is evaluated once per coalition up front, so the GIL is not an issue later.
        const auto game = TableGame::from_function(n, v);
        return samples == 0 ? exact_shapley(game).phi : sampled_shapley(game, {samples, seed, 1}).phi;
      },
      py::arg("n"), py::arg("value"), py::arg("samples") = 0, py::arg("seed") = 0,
      "Shapley values of v(word); samples=0 is exact.");
  m.def(
      "verify_axioms",
      [](std::size_t games, std::size_t max_players, std::uint64_t seed) {
        const auto r = verify_axioms(games, max_players, seed);
        return py::dict(py::arg("games") = r.games, py::arg("linearity") = r.linearity, py::arg("dummy") = r.dummy,
                        py::arg("symmetry") = r.symmetry, py::arg("efficiency") = r.efficiency,
                        py::arg("worst") = r.worst());
      },
      py::arg("games") = 20, py::arg("max_players") = 10, py::arg("seed") = 0);

  m.def(
      "relevance_mask",
      [](const RealVector& s, const RealVector& t, std::size_t k) { return mask_bits(relevance_mask(s, t, k)); },
      py::arg("phi_s"), py::arg("phi_t"), py::arg("k"));
  m.def(
      "top_fraction_mask", [](const RealVector& phi, double f) { return mask_bits(top_fraction_mask(phi, f)); },
      py::arg("phi"), py::arg("fraction"));
  m.def(
      "q_metric",
      [](const RealVector& d, const std::vector<std::uint8_t>& mask) { return q_metric(d, RelevanceMask(mask)); },
      py::arg("phi_d"), py::arg("mask"));
  m.def(
      "q_mean",
      [](const RealVector& d, const RealVector& s, const RealVector& t) {
        const auto r = q_mean(d, s, t);
        return py::dict(py::arg("mean") = r.mean, py::arg("kept_counts") = r.kept_counts, py::arg("values") = r.values,
                        py::arg("warnings") = r.warnings);
      },
      py::arg("phi_d"), py::arg("phi_s"), py::arg("phi_t"));
  m.def("schedule_count", &schedule_count, py::arg("percent"), py::arg("n"));
  m.def(
      "delta_stability",
      [](const RealVector& raw, const std::map<std::string, RealVector>& levels) {
        StabilityInput in{raw, {}};
        for (const auto& [name, phi] : levels) in.phi_by_level[compression_from_string(name)] = phi;
        return delta_stability(in).value;
      },
      py::arg("phi_raw"), py::arg("phi_by_level"));

  m.def("default_config_json", &default_config_text);
  m.def(
      "config_hash", [](const std::string& text) { return config_hash(config_of(text)); }, py::arg("config_json"));
  m.def(
      "run_experiment",
      [](const std::string& name, const std::string& config_json, const std::string& out_dir) {
        const auto cfg = config_of(config_json);
        ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = run_named(name, cfg);
          if (!out_dir.empty()) write_report(r, out_dir);
        }
        return r.to_json().dump();
      },
      py::arg("name"), py::arg("config_json") = "", py::arg("out_dir") = "");
}
