#pragma once

#include "gridvolt/simulator.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridvolt {

/// Sweep grid declared in a config's [sweep] section.
struct SweepGrid {
  std::optional<std::vector<double>> k_p;
  std::optional<std::vector<int>> n_dc;
  std::optional<int> seeds;
};

struct LoadedConfig {
  ScenarioConfig scenario;
  SweepGrid sweep;
};

/// Parses the INI-style scenario file. Sections: network, simulation,
/// placement, datacenter, inverter, trace, sweep. Unknown keys are errors.
/// Relative file paths resolve against `base_dir`.
LoadedConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
LoadedConfig load_config(const std::filesystem::path& path);

/// "1,10,20" -> {1, 10, 20}
std::vector<double> parse_number_list(std::string_view text);
/// "1:5" -> {1..5}; also accepts comma lists and single values.
std::vector<int> parse_int_range(std::string_view text);

ControlMode parse_mode(std::string_view text);
PowerFlowModel parse_solver(std::string_view text);

}  // namespace gridvolt
