#include "gridvolt/cli.hpp"

#include "gridvolt/config.hpp"
#include "gridvolt/output.hpp"
#include "gridvolt/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <thread>

namespace gridvolt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir);
}

void write_manifest(const fs::path& dir, const json& manifest) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

json base_manifest(const std::string& command, const fs::path& config, const fs::path& out_dir) {
  return json{{"command", command},
              {"config", fs::absolute(config).lexically_normal().string()},
              {"tool_version", kVersion},
              {"output_dir", fs::absolute(out_dir).lexically_normal().string()},
              {"started_utc", utc_now()},
              {"status", "running"}};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string percent_bucket(size_t i) {
  if (i == 9) return ">=90%";
  return std::to_string(i * 10) + "-" + std::to_string(i * 10 + 10) + "%";
}

// ---- validate ---------------------------------------------------------------

int cmd_validate(const std::string& network_path, const std::vector<std::string>& traces,
                 std::ostream& out, std::ostream& err) {
  std::optional<Network> net;
  try {
    net.emplace(load_network_file(network_path));
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    out << "radial: " << (what.rfind("not radial", 0) == 0 ? "no" : "unknown") << '\n';
    err << "error: " << what << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  out << "network: " << network_path << '\n';
  out << "buses: " << net->size() + 1 << " (" << net->size() << " non-feeder), lines: "
      << net->lines().size() << '\n';

  const SensitivityMatrices s = build_sensitivity(*net);
  const bool pd = is_positive_definite(s.R) && is_positive_definite(s.X);
  out << "radial: yes, R,X positive definite: " << (pd ? "yes" : "no") << '\n';
  if (!pd) {
    err << "error: sensitivity matrices are not positive definite\n";
    return kExitValidation;
  }
  out << "max R_ii: " << fixed(s.R.diagonal().maxCoeff(), 6)
      << " p.u., max X_ii: " << fixed(s.X.diagonal().maxCoeff(), 6) << " p.u.\n";

  for (const std::string& path : traces) {
    TraceStats st;
    try {
      st = trace_stats(load_trace_file(path));
    } catch (const std::exception& e) {
      err << "error: trace " << path << ": " << e.what() << '\n';
      return kExitValidation;
    }
    out << "trace " << path << ": peak " << fixed(st.peak, 3) << ", mean " << fixed(st.mean, 3)
        << ", ramps " << st.ramp_count << ", median ramp " << fixed(100.0 * st.median_ramp, 1)
        << "%\n";
    size_t dominant = 0;
    for (size_t i = 0; i < st.ramp_histogram.size(); ++i) {
      if (st.ramp_histogram[i] > st.ramp_histogram[dominant]) dominant = i;
      out << "  ramp " << percent_bucket(i) << ": " << st.ramp_histogram[i] << '\n';
    }
    if (st.ramp_count > 0) out << "  dominant ramp range: " << percent_bucket(dominant) << '\n';
  }
  return kExitOk;
}

// ---- run --------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string solver;
  std::string mode;
  bool force = false;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  LoadedConfig loaded = load_config(a.config);
  ScenarioConfig& cfg = loaded.scenario;
  if (!a.solver.empty()) cfg.solver = parse_solver(a.solver);
  if (!a.mode.empty()) cfg.mode = parse_mode(a.mode);
  cfg = resolve(std::move(cfg));
  cfg.validate();

  prepare_out_dir(a.out_dir, a.force);
  const auto start = std::chrono::steady_clock::now();
  json manifest = base_manifest("run", a.config, a.out_dir);
  manifest["seeds"] = {a.seed};
  manifest["mode"] = std::string(to_string(cfg.mode));
  manifest["solver"] = std::string(to_string(cfg.solver));
  write_manifest(a.out_dir, manifest);

  const SimResult res = run_scenario(cfg, a.seed);
  const Metrics m = compute_metrics(res);
  write_run_outputs(a.out_dir, res, m);

  manifest["status"] = "complete";
  manifest["wall_clock_s"] = seconds_since(start);
  write_manifest(a.out_dir, manifest);

  const long outside = std::lround((1.0 - m.within_band) * static_cast<double>(m.samples));
  out << "mode " << to_string(cfg.mode) << ", " << cfg.horizon << " steps, dc buses";
  for (int b : res.dc_buses) out << ' ' << b;
  out << '\n';
  out << "mean dV " << fixed(m.dv_mean, 5) << " p.u., max dV " << fixed(m.dv_max, 5)
      << " p.u., out-of-band samples " << outside << " (" << fixed(100.0 * m.within_band, 2)
      << "% within band), mean delay " << fixed(m.mean_delay_s, 2) << " s, infeasible steps "
      << m.infeasible_steps << '\n';
  return kExitOk;
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::string kp;
  std::string dc;
  std::optional<int> seeds;
  std::uint64_t master_seed = 1;
  std::string out_dir;
  bool force = false;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  if (a.seeds && *a.seeds <= 0) throw UsageError("--seeds must be positive");
  LoadedConfig loaded = load_config(a.config);
  SweepSpec spec;
  try {
    if (!a.kp.empty()) spec.k_p = parse_number_list(a.kp);
    else if (loaded.sweep.k_p) spec.k_p = *loaded.sweep.k_p;
    if (!a.dc.empty()) spec.n_dc = parse_int_range(a.dc);
    else if (loaded.sweep.n_dc) spec.n_dc = *loaded.sweep.n_dc;
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  spec.seeds = a.seeds.value_or(loaded.sweep.seeds.value_or(spec.seeds));
  if (spec.seeds <= 0) throw UsageError("seeds must be positive");
  spec.master_seed = a.master_seed;
  spec.threads = sweep_threads_from_env();

  ScenarioConfig cfg = resolve(std::move(loaded.scenario));
  cfg.validate();

  prepare_out_dir(a.out_dir, a.force);
  const auto start = std::chrono::steady_clock::now();
  json manifest = base_manifest("sweep", a.config, a.out_dir);
  manifest["master_seed"] = spec.master_seed;
  json seeds = json::array();
  for (int r = 0; r < spec.seeds; ++r) seeds.push_back(mix_seed(spec.master_seed, r));
  manifest["seeds"] = seeds;
  manifest["k_p"] = spec.k_p;
  manifest["n_dc"] = spec.n_dc;
  manifest["threads"] = spec.threads;
  write_manifest(a.out_dir, manifest);

  const SweepResult result = sweep(cfg, spec);
  write_sweep_outputs(a.out_dir, result);

  int ok = 0;
  for (const SweepRun& run : result.runs) {
    if (run.metrics) {
      ++ok;
    } else {
      err << "run dc=" << run.n_dc << " kp=" << format_double(run.k_p) << " replicate "
          << run.replicate << " failed: " << run.error << '\n';
    }
  }
  manifest["status"] = ok > 0 ? "complete" : "failed";
  manifest["runs_ok"] = ok;
  manifest["runs_failed"] = static_cast<int>(result.runs.size()) - ok;
  manifest["wall_clock_s"] = seconds_since(start);
  write_manifest(a.out_dir, manifest);

  out << sweep_markdown(result);
  return ok > 0 ? kExitOk : kExitValidation;
}

// ---- report -----------------------------------------------------------------

int column_or_throw(const CsvTable& t, const std::string& name, const fs::path& file) {
  const int c = t.column(name);
  if (c < 0) throw std::runtime_error(file.string() + ": missing column " + name);
  return c;
}

int cmd_report(const std::string& in_dir, const std::vector<int>& requested,
               const std::string& out_path, std::ostream& out, std::ostream& err) {
  const fs::path dir(in_dir);
  for (const char* f : {"voltages.csv", "dc_power.csv"}) {
    if (!fs::exists(dir / f)) {
      err << "error: missing " << (dir / f).string() << '\n';
      return kExitValidation;
    }
  }
  const CsvTable volts = read_csv(dir / "voltages.csv");
  const CsvTable power = read_csv(dir / "dc_power.csv");
  const int vt = column_or_throw(volts, "t", dir / "voltages.csv");
  const int vb = column_or_throw(volts, "bus", dir / "voltages.csv");
  const int vv = column_or_throw(volts, "v_pu", dir / "voltages.csv");
  const int pt = column_or_throw(power, "t", dir / "dc_power.csv");
  const int pb = column_or_throw(power, "bus", dir / "dc_power.csv");

  std::set<int> present;
  for (const auto& row : volts.rows) present.insert(std::stoi(row.at(vb)));
  std::vector<int> dc_buses;
  for (const auto& row : power.rows) {
    const int b = std::stoi(row.at(pb));
    if (std::find(dc_buses.begin(), dc_buses.end(), b) == dc_buses.end()) dc_buses.push_back(b);
  }

  const std::vector<int> buses = requested.empty() ? dc_buses : requested;
  for (int b : buses) {
    if (!present.count(b)) {
      err << "error: bus " << b << " is not present in " << dir.string() << '\n';
      return kExitValidation;
    }
  }
  const std::set<int> selected(buses.begin(), buses.end());

  const fs::path target = out_path.empty() ? dir / "curves.csv" : fs::path(out_path);
  std::ofstream csv(target);
  if (!csv) throw std::runtime_error("cannot write " + target.string());
  csv << "t,bus,series,value\n";
  long rows = 0;
  for (const auto& row : volts.rows) {
    if (!selected.count(std::stoi(row.at(vb)))) continue;
    csv << row.at(vt) << ',' << row.at(vb) << ",v_pu," << row.at(vv) << '\n';
    ++rows;
  }
  const std::vector<std::pair<std::string, std::string>> series = {
      {"p_ref_pu", "load_ref_pu"}, {"p_served_pu", "load_served_pu"}, {"S_pu", "backlog_pu"}};
  for (const auto& [column, name] : series) {
    const int c = column_or_throw(power, column, dir / "dc_power.csv");
    for (const auto& row : power.rows) {
      if (!selected.count(std::stoi(row.at(pb)))) continue;
      // Loads are reported as positive consumption.
      std::string value = row.at(c);
      if (column != "S_pu") value = format_double(-parse_double(value) + 0.0);
      csv << row.at(pt) << ',' << row.at(pb) << ',' << name << ',' << value << '\n';
      ++rows;
    }
  }
  out << "wrote " << target.string() << " (" << rows << " rows, buses";
  for (int b : buses) out << ' ' << b;
  out << ")\n";
  return kExitOk;
}

}  // namespace

int sweep_threads_from_env() {
  if (const char* env = std::getenv("GRIDVOLT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voltage regulation simulator for distribution feeders with data-center loads",
               "gridvolt"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string v_network, v_config;
  std::vector<std::string> v_traces;
  auto* validate = app.add_subcommand("validate", "Check a network file and optional traces");
  auto* v_net_opt = validate->add_option("--network", v_network, "Network file");
  validate->add_option("--trace", v_traces, "Normalized power trace CSV (repeatable)");
  auto* v_cfg_opt = validate->add_option("--config", v_config, "Take network and traces from a config");
  v_net_opt->excludes(v_cfg_opt);

  RunArgs r;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--config", r.config, "Scenario config")->required();
  run->add_option("--seed", r.seed, "Scenario seed");
  run->add_option("--out", r.out_dir, "Output directory")->required();
  run->add_option("--solver", r.solver, "linear|nonlinear")
      ->check(CLI::IsMember({"linear", "nonlinear"}));
  run->add_option("--mode", r.mode, "none|inverter|full")
      ->check(CLI::IsMember({"none", "inverter", "full"}));
  run->add_flag("--force", r.force, "Allow a non-empty output directory");

  SweepArgs s;
  int seeds_value = 0;
  auto* sw = app.add_subcommand("sweep", "Sweep k_p and data-center count over seeds");
  sw->add_option("--config", s.config, "Scenario config")->required();
  sw->add_option("--kp", s.kp, "Comma list of k_p values");
  sw->add_option("--dc", s.dc, "Data-center counts, e.g. 1:5");
  auto* seeds_opt = sw->add_option("--seeds", seeds_value, "Replicates per cell");
  sw->add_option("--master-seed", s.master_seed, "Master seed for the replicate streams");
  sw->add_option("--out", s.out_dir, "Output directory")->required();
  sw->add_flag("--force", s.force, "Allow a non-empty output directory");

  std::string rep_in, rep_out;
  std::vector<int> rep_buses;
  auto* report = app.add_subcommand("report", "Extract plot-ready curves from a run directory");
  report->add_option("--in", rep_in, "Run output directory")->required();
  report->add_option("--bus", rep_buses, "Buses to extract (default: data-center buses)");
  report->add_option("--out", rep_out, "Output CSV (default: <in>/curves.csv)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*validate) {
      if (!v_config.empty()) {
        LoadedConfig loaded = load_config(v_config);
        if (loaded.scenario.network_file.empty()) throw UsageError("config names no network file");
        std::vector<std::string> traces = v_traces;
        traces.insert(traces.end(), loaded.scenario.trace_files.begin(),
                      loaded.scenario.trace_files.end());
        return cmd_validate(loaded.scenario.network_file, traces, out, err);
      }
      if (v_network.empty()) throw UsageError("validate needs --network or --config");
      return cmd_validate(v_network, v_traces, out, err);
    }
    if (*run) return cmd_run(r, out);
    if (*sw) {
      if (*seeds_opt) s.seeds = seeds_value;
      return cmd_sweep(s, out, err);
    }
    if (*report) return cmd_report(rep_in, rep_buses, rep_out, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace gridvolt
