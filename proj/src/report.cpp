#include "fstx/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fstx/errors.hpp"
#include "fstx/numerics.hpp"

namespace fstx {

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw DimensionError("table " + name + ": row has " + std::to_string(row.size()) + " cells, expected " +
                         std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

double SeedMetric::mean() const { return fstx::mean(values); }
double SeedMetric::stddev() const { return fstx::stddev(values); }

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::to_string(std::get<long long>(c));
}

nlohmann::json number_json(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

}  // namespace

const Table* ExperimentReport::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["provenance"] = {{"tool_version", kToolVersion}, {"config_hash", config_hash}, {"seeds", seeds}};
  j["config"] = config;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, metric] : metrics) {
    nlohmann::json values = nlohmann::json::array();
    for (double v : metric.values) values.push_back(number_json(v));
    m[name] = {{"values", values}, {"mean", number_json(metric.mean())}, {"std", number_json(metric.stddev())}};
  }
  j["metrics"] = m;
  j["checks"] = checks;
  nlohmann::json tables_json = nlohmann::json::array();
  for (const auto& t : tables) tables_json.push_back({{"name", t.name}, {"file", t.name + ".csv"}, {"rows", t.rows.size()}});
  j["tables"] = tables_json;
  j["notes"] = notes;
  return j;
}

std::string to_csv(const Table& table) {
  std::ostringstream out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell_text(row[c]);
    out << '\n';
  }
  return out.str();
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "report.json");
    f << report.to_json().dump(2) << '\n';
  }
  for (const auto& t : report.tables) {
    std::ofstream f(dir / (t.name + ".csv"));
    f << to_csv(t);
    if (t.name.rfind("curve_", 0) == 0) {
      std::ofstream dat(dir / (t.name + ".dat"));
      dat << '#';
      for (const auto& c : t.columns) dat << ' ' << c;
      dat << '\n';
      for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) dat << (c ? " " : "") << cell_text(row[c]);
        dat << '\n';
      }
    }
  }
}

ExperimentReport read_report(const std::filesystem::path& report_json) {
  std::ifstream f(report_json);
  if (!f) throw ConfigError("cannot open report " + report_json.string());
  const auto j = nlohmann::json::parse(f);
  ExperimentReport r;
  r.experiment = j.at("experiment").get<std::string>();
  r.config = j.at("config");
  r.config_hash = j.at("provenance").at("config_hash").get<std::string>();
  r.seeds = j.at("provenance").at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& [name, m] : j.at("metrics").items()) {
    SeedMetric metric;
    for (const auto& v : m.at("values")) {
      metric.values.push_back(v.is_number() ? v.get<double>() : std::stod(v.get<std::string>()));
    }
    r.metrics[name] = metric;
  }
  r.checks = j.at("checks").get<std::map<std::string, bool>>();
  r.notes = j.value("notes", std::vector<std::string>{});
  return r;
}

std::string render_report(const ExperimentReport& report) {
  std::ostringstream out;
  out << "experiment: " << report.experiment << "\n";
  out << "config hash: " << report.config_hash << "\n";
  out << "seeds:";
  for (auto s : report.seeds) out << ' ' << s;
  out << "\n\n";
  std::size_t width = 6;
  for (const auto& [name, _] : report.metrics) width = std::max(width, name.size());
  for (const auto& [name, m] : report.metrics) {
    out << name << std::string(width - name.size() + 2, ' ') << format_number(m.mean()) << " +- "
        << format_number(m.stddev()) << "\n";
  }
  if (!report.checks.empty()) {
    out << "\n";
    for (const auto& [name, ok] : report.checks) out << (ok ? "[pass] " : "[FAIL] ") << name << "\n";
  }
  for (const auto& n : report.notes) out << "note: " << n << "\n";
  return out.str();
}

}  // namespace fstx
