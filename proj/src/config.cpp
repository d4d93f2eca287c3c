#include "gridvolt/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gridvolt {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t end = std::min(text.find(sep, start), text.size());
    std::string item = trim(text.substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& value) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

std::string resolve_path(const fs::path& base_dir, const std::string& value) {
  const fs::path p(value);
  return (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
}

}  // namespace

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) out.push_back(to_double("list", item));
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

std::vector<int> parse_int_range(std::string_view text) {
  std::vector<int> out;
  for (const std::string& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(static_cast<int>(to_int("range", item)));
      continue;
    }
    const auto lo = to_int("range", trim(item.substr(0, colon)));
    const auto hi = to_int("range", trim(item.substr(colon + 1)));
    if (lo > hi) throw ConfigError("range '" + item + "' is empty");
    for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ConfigError("empty range");
  return out;
}

ControlMode parse_mode(std::string_view text) {
  if (text == "none") return ControlMode::kNone;
  if (text == "inverter" || text == "inverter_only") return ControlMode::kInverterOnly;
  if (text == "full") return ControlMode::kFull;
  throw ConfigError("unknown control mode '" + std::string(text) + "'");
}

PowerFlowModel parse_solver(std::string_view text) {
  if (text == "linear") return PowerFlowModel::kLinear;
  if (text == "nonlinear") return PowerFlowModel::kNonlinear;
  throw ConfigError("unknown solver '" + std::string(text) + "'");
}

LoadedConfig parse_config(std::string_view text, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  LoadedConfig loaded;
  ScenarioConfig& c = loaded.scenario;
  std::optional<double> kappa;

  using Setter = void (*)(LoadedConfig&, std::optional<double>&, const std::string&,
                          const std::string&, const fs::path&);
  // clang-format off
  static const std::map<std::string, Setter> setters = {
    {"network.file", [](LoadedConfig& l, auto&, auto&, auto& v, auto& b) { l.scenario.network_file = resolve_path(b, v); }},
    {"network.sensitivity", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) {
      if (v == "magnitude") l.scenario.sensitivity = SensitivityConvention::kMagnitude;
      else if (v == "squared") l.scenario.sensitivity = SensitivityConvention::kSquared;
      else throw ConfigError(k + ": expected magnitude or squared");
    }},
    {"simulation.horizon", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.horizon = static_cast<int>(to_int(k, v)); }},
    {"simulation.dt", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dt = to_double(k, v); }},
    {"simulation.solver", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.scenario.solver = parse_solver(v); }},
    {"simulation.mode", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.scenario.mode = parse_mode(v); }},
    {"simulation.noise_sigma", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.noise_sigma = to_double(k, v); }},
    {"simulation.tol", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.solver_options.tol = to_double(k, v); }},
    {"simulation.max_iter", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.solver_options.max_iter = static_cast<int>(to_int(k, v)); }},
    {"simulation.trailing_idle", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.trailing_idle = static_cast<int>(to_int(k, v)); }},
    {"placement.n_dc", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.n_dc = static_cast<int>(to_int(k, v)); }},
    {"placement.dc_buses", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.scenario.dc_buses = parse_int_range(v); }},
    {"placement.n_inverters", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.n_inverters = static_cast<int>(to_int(k, v)); }},
    {"placement.inverter_buses", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.scenario.inverter_buses = parse_int_range(v); }},
    {"placement.seed", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.placement_seed = static_cast<std::uint64_t>(to_int(k, v)); }},
    {"datacenter.peak_kw", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.peak_kw = to_double(k, v); }},
    {"datacenter.q_min_kvar", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.q_min_kvar = to_double(k, v); }},
    {"datacenter.q_max_kvar", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.q_max_kvar = to_double(k, v); }},
    {"datacenter.kp", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.k_p = to_double(k, v); }},
    {"datacenter.kq", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.k_q = to_double(k, v); }},
    {"datacenter.alpha0", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.alpha0 = to_double(k, v); }},
    {"datacenter.gamma", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.gamma = to_double(k, v); }},
    {"datacenter.alpha_max", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.alpha_max = to_double(k, v); }},
    {"datacenter.literal_backlog", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.literal_backlog = to_bool(k, v); }},
    {"datacenter.q_circle", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.q_circle = to_bool(k, v); }},
    {"datacenter.s_rating_kva", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.s_rating_kva = to_double(k, v); }},
    {"datacenter.f_min", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.dvfs.f_min = to_double(k, v); }},
    {"datacenter.f_max", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.dvfs.f_max = to_double(k, v); }},
    {"datacenter.p_idle", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.dc.dvfs.p_idle = to_double(k, v); }},
    {"datacenter.kappa", [](LoadedConfig&, auto& kap, auto& k, auto& v, auto&) { kap = to_double(k, v); }},
    {"inverter.kq", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.inverter.k_q = to_double(k, v); }},
    {"inverter.q_min_kvar", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.inverter.q_min_kvar = to_double(k, v); }},
    {"inverter.q_max_kvar", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.inverter.q_max_kvar = to_double(k, v); }},
    {"trace.source", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) {
      if (v == "synthetic") l.scenario.trace_source = TraceSource::kSynthetic;
      else if (v == "files") l.scenario.trace_source = TraceSource::kFiles;
      else if (v == "replay") l.scenario.trace_source = TraceSource::kReplay;
      else throw ConfigError(k + ": expected synthetic, files or replay");
    }},
    {"trace.files", [](LoadedConfig& l, auto&, auto&, auto& v, auto& b) {
      l.scenario.trace_files.clear();
      for (const std::string& f : split(v, ',')) l.scenario.trace_files.push_back(resolve_path(b, f));
    }},
    {"trace.burst_len_s", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.burst_len_s = to_double(k, v); }},
    {"trace.gap_s", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.gap_s = to_double(k, v); }},
    {"trace.ramp_frac", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.ramp_frac = to_double(k, v); }},
    {"trace.idle_level", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.idle_level = to_double(k, v); }},
    {"trace.peak_level", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.peak_level = to_double(k, v); }},
    {"trace.dip_probability", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.dip_probability = to_double(k, v); }},
    {"trace.seed", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
    {"trace.pool", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.synthetic_pool = static_cast<int>(to_int(k, v)); }},
    {"trace.threshold", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.scenario.query_threshold = to_double(k, v); }},
    {"sweep.kp", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.sweep.k_p = parse_number_list(v); }},
    {"sweep.dc", [](LoadedConfig& l, auto&, auto&, auto& v, auto&) { l.sweep.n_dc = parse_int_range(v); }},
    {"sweep.seeds", [](LoadedConfig& l, auto&, auto& k, auto& v, auto&) { l.sweep.seeds = static_cast<int>(to_int(k, v)); }},
  };
  // clang-format on

  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, node] : entries) {
      const std::string full = section + "." + key;
      auto it = setters.find(full);
      if (it == setters.end()) throw ConfigError("unknown config key '" + full + "'");
      it->second(loaded, kappa, full, trim(node.data()), base_dir);
    }
  }
  c.dc.dvfs.kappa = kappa.value_or((1.0 - c.dc.dvfs.p_idle) / c.dc.dvfs.f_max);
  return loaded;
}

LoadedConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace gridvolt
