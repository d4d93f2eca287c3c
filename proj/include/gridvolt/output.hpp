#pragma once

#include "gridvolt/simulator.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gridvolt {

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

/// Simple comma-separated table; the first row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::filesystem::path& path);
double parse_double(const std::string& field);

/// voltages.csv, dc_power.csv, slack.csv, delays.csv, buses.csv and metrics.csv in `dir`.
void write_run_outputs(const std::filesystem::path& dir, const SimResult& res,
                       const Metrics& metrics);
/// Tidy `metric,bus,value` rows; per-site rows carry the data-center bus id.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<int>& dc_buses,
                       const Metrics& metrics);

/// sweep.csv, sweep_runs.csv, sweep.md and runs/<cell>/metrics.csv.
void write_sweep_outputs(const std::filesystem::path& dir, const SweepResult& sweep);
std::string sweep_markdown(const SweepResult& sweep);

}  // namespace gridvolt
