#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace fstx {

inline constexpr const char* kToolVersion = "0.3.0";

using Cell = std::variant<std::string, double, long long>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

/// One metric measured once per seed.
struct SeedMetric {
  std::vector<double> values;  // aligned with ExperimentReport::seeds
  double mean() const;
  double stddev() const;
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::json config;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, SeedMetric> metrics;
  std::map<std::string, bool> checks;
  std::vector<Table> tables;
  std::vector<std::string> notes;

  void record(const std::string& metric, double value) { metrics[metric].values.push_back(value); }
  const Table* table(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Shortest round-trip decimal form of x.
std::string format_number(double x);

std::string to_csv(const Table& table);

/// Writes report.json, one CSV per table and gnuplot .dat files for tables
/// whose name starts with "curve_".
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

ExperimentReport read_report(const std::filesystem::path& report_json);

/// Plain-text summary: metrics with mean and std, then checks.
std::string render_report(const ExperimentReport& report);

}  // namespace fstx
