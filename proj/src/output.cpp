#include "gridvolt/output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gridvolt {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string run_name(const SweepRun& run) {
  return "dc" + std::to_string(run.n_dc) + "_kp" + format_double(run.k_p) + "_r" +
         std::to_string(run.replicate);
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(const std::string& field) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::runtime_error("malformed number '" + field + "'");
  }
  return value;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

void write_metrics_csv(const fs::path& path, const std::vector<int>& dc_buses,
                       const Metrics& m) {
  std::ofstream out = open_out(path);
  out << "metric,bus,value\n";
  auto global = [&](const char* name, double v) { out << name << ",," << format_double(v) << '\n'; };
  global("dv_mean", m.dv_mean);
  global("dv_std", m.dv_std);
  global("dv_max", m.dv_max);
  global("within_band", m.within_band);
  global("samples", static_cast<double>(m.samples));
  global("infeasible_steps", m.infeasible_steps);
  global("mean_delay_s", m.mean_delay_s);
  global("n_queries", m.n_queries);
  global("censored_queries", m.censored_queries);
  global("overshoot_fraction", m.overshoot_fraction);
  for (size_t d = 0; d < dc_buses.size(); ++d) {
    const std::string bus = std::to_string(dc_buses[d]);
    out << "dc_mean_delay_s," << bus << ',' << format_double(m.dc_mean_delay_s.at(d)) << '\n';
    out << "balance_residual," << bus << ',' << format_double(m.balance_residual.at(d)) << '\n';
    out << "balance_residual_rel," << bus << ',' << format_double(m.balance_residual_rel.at(d))
        << '\n';
    out << "overshoot_max_pu," << bus << ',' << format_double(m.overshoot_max_pu.at(d)) << '\n';
  }
}

void write_run_outputs(const fs::path& dir, const SimResult& res, const Metrics& metrics) {
  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir / "voltages.csv");
    out << "t,bus,v_pu\n";
    for (int t = 0; t < res.voltage.rows(); ++t) {
      const std::string ts = format_double((t + 1) * res.dt);
      for (int i = 0; i < res.voltage.cols(); ++i) {
        out << ts << ',' << (i + 1) << ',' << format_double(res.voltage(t, i)) << '\n';
      }
    }
  }
  {
    std::ofstream out = open_out(dir / "dc_power.csv");
    out << "t,bus,p_ref_pu,p_served_pu,q_pu,S_pu\n";
    for (size_t t = 0; t < static_cast<size_t>(res.horizon); ++t) {
      const std::string ts = format_double(static_cast<double>(t + 1) * res.dt);
      for (size_t d = 0; d < res.dc_buses.size(); ++d) {
        out << ts << ',' << res.dc_buses[d] << ',' << format_double(res.p_ref[d][t]) << ','
            << format_double(res.p_served[d][t]) << ',' << format_double(res.q_dc[d][t]) << ','
            << format_double(res.backlog[d][t]) << '\n';
      }
    }
  }
  {
    std::ofstream out = open_out(dir / "slack.csv");
    out << "t,p0,q0\n";
    for (size_t t = 0; t < res.slack.size(); ++t) {
      out << format_double(static_cast<double>(t + 1) * res.dt) << ','
          << format_double(res.slack[t].p0) << ',' << format_double(res.slack[t].q0) << '\n';
    }
  }
  {
    std::ofstream out = open_out(dir / "delays.csv");
    out << "bus,query_id,delay_s,censored\n";
    for (size_t d = 0; d < res.delays.size(); ++d) {
      for (const QueryDelay& q : res.delays[d].delays) {
        out << res.dc_buses[d] << ',' << q.query_id << ',' << format_double(q.delay_s) << ','
            << (q.censored ? 1 : 0) << '\n';
      }
    }
  }
  {
    std::ofstream out = open_out(dir / "buses.csv");
    out << "bus,role\n";
    for (int b = 1; b <= res.n_bus; ++b) {
      const char* role = "pq";
      if (std::find(res.dc_buses.begin(), res.dc_buses.end(), b) != res.dc_buses.end()) {
        role = "dc";
      } else if (std::find(res.inverter_buses.begin(), res.inverter_buses.end(), b) !=
                 res.inverter_buses.end()) {
        role = "inverter";
      }
      out << b << ',' << role << '\n';
    }
  }
  write_metrics_csv(dir / "metrics.csv", res.dc_buses, metrics);
}

std::string sweep_markdown(const SweepResult& sweep) {
  std::vector<double> kps;
  std::vector<int> dcs;
  std::map<std::pair<int, double>, const SweepRow*> cells;
  for (const SweepRow& row : sweep.rows) {
    if (std::find(kps.begin(), kps.end(), row.k_p) == kps.end()) kps.push_back(row.k_p);
    if (std::find(dcs.begin(), dcs.end(), row.n_dc) == dcs.end()) dcs.push_back(row.n_dc);
    cells[{row.n_dc, row.k_p}] = &row;
  }
  auto fixed = [](double v, int digits) {
    if (std::isnan(v)) return std::string("n/a");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf);
  };
  std::ostringstream md;
  md << "| No. of Data Centers |";
  for (double kp : kps) {
    const std::string k = format_double(kp);
    md << " k_p=" << k << " ΔV (p.u.) | k_p=" << k << " Average Delay (s) |";
  }
  md << "\n|---|";
  for (size_t i = 0; i < kps.size(); ++i) md << "---|---|";
  md << '\n';
  for (int dc : dcs) {
    md << "| " << dc << " |";
    for (double kp : kps) {
      const SweepRow* row = cells.at({dc, kp});
      md << ' ' << fixed(row->dv_mean, 3) << " ± " << fixed(row->dv_std, 3) << " | "
         << fixed(row->mean_delay_s, 1) << (row->runs_failed > 0 ? " (partial)" : "") << " |";
    }
    md << '\n';
  }
  return md.str();
}

void write_sweep_outputs(const fs::path& dir, const SweepResult& sweep) {
  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir / "sweep.csv");
    out << "n_dc,k_p,dv_mean,dv_std,mean_delay_s,dv_sample_std,within_band,runs_ok,runs_failed\n";
    for (const SweepRow& r : sweep.rows) {
      out << r.n_dc << ',' << format_double(r.k_p) << ',' << format_double(r.dv_mean) << ','
          << format_double(r.dv_std) << ',' << format_double(r.mean_delay_s) << ','
          << format_double(r.dv_sample_std) << ',' << format_double(r.within_band) << ','
          << r.runs_ok << ',' << r.runs_failed << '\n';
    }
  }
  {
    std::ofstream out = open_out(dir / "sweep_runs.csv");
    out << "n_dc,k_p,replicate,seed,dv_mean,dv_std,within_band,mean_delay_s,status\n";
    for (const SweepRun& run : sweep.runs) {
      out << run.n_dc << ',' << format_double(run.k_p) << ',' << run.replicate << ','
          << run.seed << ',';
      if (run.metrics) {
        out << format_double(run.metrics->dv_mean) << ',' << format_double(run.metrics->dv_std)
            << ',' << format_double(run.metrics->within_band) << ','
            << format_double(run.metrics->mean_delay_s) << ",ok\n";
      } else {
        std::string err = run.error;
        for (char& c : err) {
          if (c == ',' || c == '\n') c = ';';
        }
        out << "nan,nan,nan,nan,failed: " << err << '\n';
      }
      if (run.metrics) {
        const fs::path run_dir = dir / "runs" / run_name(run);
        fs::create_directories(run_dir);
        write_metrics_csv(run_dir / "metrics.csv", run.dc_buses, *run.metrics);
      }
    }
  }
  std::ofstream md = open_out(dir / "sweep.md");
  md << sweep_markdown(sweep);
}

}  // namespace gridvolt
