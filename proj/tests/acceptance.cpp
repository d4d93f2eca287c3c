// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "gridvolt/cli.hpp"
#include "gridvolt/config.hpp"
#include "gridvolt/control.hpp"
#include "gridvolt/output.hpp"
#include "gridvolt/powerflow.hpp"
#include "gridvolt/simulator.hpp"
#include "gridvolt/workload.hpp"

#include "test_util.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

using namespace gridvolt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double max_runtime_s,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (max_runtime_s > 0 && secs >= max_runtime_s) {
    o.pass = false;
    o.detail += "; runtime over " + format_double(max_runtime_s) + " s";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d %s: %s (%s) [%.2f s]\n", id, o.pass ? "PASS" : "FAIL", title,
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

std::string fix(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

ScenarioConfig from_file(const std::string& name) {
  return resolve(load_config(data_path(name)).scenario);
}

// ---- 1 ----------------------------------------------------------------------

Outcome flat_grid() {
  double worst_nl = 0.0;
  bool lin_exact = true;
  for (const char* f : {"six_bus.net", "feeder123.net"}) {
    const Network net = load_network_file(data_path(f));
    const InjectionVector zero = InjectionVector::zeros(net.size());
    lin_exact &= (solve_lindistflow(build_sensitivity(net), zero).v.array() == 1.0).all();
    const VoltageVector nl = solve_distflow_nonlinear(net, zero);
    worst_nl = std::max(worst_nl, (nl.v.array() - 1.0).abs().maxCoeff());
  }
  return {lin_exact && worst_nl <= 1e-9, std::string("linear exact ") + (lin_exact ? "yes" : "no") +
                                             ", nonlinear max |v-1| " + sci(worst_nl) +
                                             " <= 1e-9"};
}

// ---- 2 ----------------------------------------------------------------------

Outcome sensitivity_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(1, 19);
  double worst = 0.0;
  bool chol = true;
  for (int k = 0; k < 50; ++k) {
    const Network net = random_tree(rng, size(rng));
    const SensitivityMatrices s = build_sensitivity(net);
    const Eigen::MatrixXd r_ref = grounded_laplacian(net, true).inverse();
    const Eigen::MatrixXd x_ref = grounded_laplacian(net, false).inverse();
    worst = std::max(worst, (s.R - r_ref).cwiseAbs().maxCoeff());
    worst = std::max(worst, (s.X - x_ref).cwiseAbs().maxCoeff());
    chol &= Eigen::LLT<Eigen::MatrixXd>(s.R).info() == Eigen::Success;
    chol &= Eigen::LLT<Eigen::MatrixXd>(s.X).info() == Eigen::Success;
  }
  return {worst <= 1e-10 && chol, "50 trees, max elementwise error " + sci(worst) +
                                      " <= 1e-10, Cholesky " + (chol ? "ok" : "failed")};
}

// ---- 3 ----------------------------------------------------------------------

Outcome solver_agreement() {
  const Network net = load_network_file(data_path("six_bus.net"));
  const SensitivityMatrices s = build_sensitivity(net);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  double worst = 0.0;
  bool lossy_ok = true;
  for (int draw = 0; draw < 100; ++draw) {
    InjectionVector inj = InjectionVector::zeros(net.size());
    for (int i = 0; i < net.size(); ++i) {
      inj.p(i) = u(rng);
      inj.q(i) = u(rng);
    }
    worst = std::max(worst, (solve_lindistflow(s, inj).v -
                             solve_distflow_nonlinear(net, inj).v).cwiseAbs().maxCoeff());
    InjectionVector load = inj;
    load.p = -inj.p.cwiseAbs();
    load.q = -inj.q.cwiseAbs();
    const VoltageVector nl = solve_distflow_nonlinear(net, load);
    lossy_ok &= slack_power(net, load, nl, PowerFlowModel::kNonlinear).p0 >=
                slack_power(net, load, nl, PowerFlowModel::kLinear).p0;
  }
  return {worst <= 5e-3 && lossy_ok, "max |v_lin - v_nl| " + sci(worst) +
                                         " <= 5e-3, nonlinear slack >= lossless: " +
                                         (lossy_ok ? "yes" : "no")};
}

// ---- 4 ----------------------------------------------------------------------

struct LoopRun {
  bool converged = false;
  bool diverged = false;
  int steps = 0;
  double error = 0.0;
};

// Feeder plus one data-center bus, linear model, constant reference, alpha = 0.
// Wide actuator bounds so the recursion is not masked by saturation.
LoopRun two_bus_loop(double a) {
  const double r = 0.05, p_ref = -0.6;
  const Network net = make_network({{0, 1, r, r / 2}});
  const SensitivityMatrices s = build_sensitivity(net);
  DroopParams pr;
  pr.k_p = a / r;
  pr.p_lo = -1e3;
  pr.p_hi = 1e3;
  pr.alpha0 = 0.0;
  pr.alpha_max = 0.0;
  pr.gamma = 0.0;
  ControllerState st = ControllerState::initial(pr, p_ref, 0.0);
  st.alpha = 0.0;
  const double v_star = 1.0 + r * p_ref / (1.0 + a);
  InjectionVector inj = InjectionVector::zeros(1);
  inj.p(0) = p_ref;
  double e0 = 0.0;
  LoopRun out;
  for (int t = 0; t < 200; ++t) {
    const double v = solve_lindistflow(s, inj).v(0);
    out.steps = t + 1;
    out.error = std::abs(v - v_star);
    if (t == 0) e0 = out.error;
    if (!(v > 0.0) || !std::isfinite(v) || out.error > 1e3 * e0) {
      out.diverged = true;
      return out;
    }
    if (out.error <= 1e-8) {
      out.converged = true;
      return out;
    }
    const ActiveUpdate up = active_droop_update(st, pr, v, p_ref);
    st = up.state;
    st.alpha = adapt_alpha(st, pr);
    inj.p(0) = up.u_p;
  }
  // Not settled and not blown up within 200 steps: flagged if the error grew.
  out.diverged = out.error > e0;
  return out;
}

Outcome controller_fixed_point() {
  std::ostringstream detail;
  bool pass = true;
  for (double a : {0.3, 0.6, 0.9, 1.5, 1.9}) {
    const LoopRun run = two_bus_loop(a);
    detail << "r*kp=" << a << (run.converged ? " converged" : run.diverged ? " diverged" : " stalled")
           << " in " << run.steps << ", ";
    pass &= run.converged;
  }
  for (double a : {2.1, 3.0}) {
    const LoopRun run = two_bus_loop(a);
    detail << "r*kp=" << a << (run.diverged ? " flagged" : " NOT flagged") << ", ";
    pass &= run.diverged;
  }
  detail << "required: converge within 1e-8 for r*kp < 2; the loop contracts only for r*kp < 1";
  return {pass, detail.str()};
}

// ---- 5 ----------------------------------------------------------------------

Outcome energy_balance() {
  const ScenarioConfig cfg = from_file("six_bus_balance.ini");
  const Metrics m = compute_metrics(run_scenario(cfg, 1));
  double worst = 0.0;
  for (double r : m.balance_residual_rel) worst = std::max(worst, r);
  const bool setup = cfg.mode == ControlMode::kFull && cfg.trailing_idle == 60;
  return {setup && worst <= 1e-6 && !m.balance_residual_rel.empty(),
          "full control, 60 s idle tail, worst relative residual " + sci(worst) + " <= 1e-6"};
}

// ---- 6 ----------------------------------------------------------------------

Outcome step_response() {
  ScenarioConfig cfg = from_file("six_bus_step.ini");
  const std::vector<double> tr = load_trace_file(cfg.trace_files.at(0)).samples;
  int step = 1;
  while (step < static_cast<int>(tr.size()) && tr[step] == tr[step - 1]) ++step;
  auto out_of_band = [](const SimResult& res, int t) {
    return (res.voltage.row(t).array() - 1.0).abs().maxCoeff() > 0.05;
  };

  cfg.mode = ControlMode::kNone;
  const SimResult none = run_scenario(cfg, 1);
  int leaves = 0;
  for (int t = step; t < none.horizon; ++t) leaves += out_of_band(none, t);

  cfg.mode = ControlMode::kFull;
  const SimResult full = run_scenario(cfg, 1);
  int last_out = step - 1;
  for (int t = step; t < full.horizon; ++t) {
    if (out_of_band(full, t)) last_out = t;
  }
  const int settle = last_out - step + 1;
  const bool pass = leaves > 0 && settle <= 10 && cfg.dc.k_p == 10.0;
  return {pass, "step at t=" + std::to_string(step) + ", no control: " + std::to_string(leaves) +
                    " steps out of band after the step; full control (k_p=10) in band " +
                    std::to_string(settle) + " steps after the step (<= 10) and stays"};
}

// ---- 7 ----------------------------------------------------------------------

Outcome table_trends() {
  const LoadedConfig loaded = load_config(data_path("feeder123.ini"));
  const ScenarioConfig cfg = resolve(loaded.scenario);
  SweepSpec spec;
  spec.k_p = {1.0, 10.0, 20.0};
  spec.n_dc = {1, 2, 3, 4, 5};
  spec.seeds = 10;
  spec.threads = sweep_threads_from_env();
  const SweepResult res = sweep(cfg, spec);
  std::map<std::pair<int, double>, const SweepRow*> cell;
  bool all_ok = true;
  for (const SweepRow& row : res.rows) {
    cell[{row.n_dc, row.k_p}] = &row;
    all_ok &= row.runs_failed == 0;
  }
  bool delay_up = true;
  bool dv_cap = true;
  bool dv_down = true;
  double dv_max = 0.0;
  for (int d : spec.n_dc) {
    const SweepRow* c1 = cell.at({d, 1.0});
    const SweepRow* c10 = cell.at({d, 10.0});
    const SweepRow* c20 = cell.at({d, 20.0});
    delay_up &= c1->mean_delay_s < c10->mean_delay_s && c10->mean_delay_s < c20->mean_delay_s;
    for (const SweepRow* c : {c1, c10, c20}) {
      dv_cap &= c->dv_mean <= 0.035;
      dv_max = std::max(dv_max, c->dv_mean);
    }
    if (d >= 3) dv_down &= c10->dv_mean <= c1->dv_mean && c20->dv_mean <= c10->dv_mean;
  }
  const SweepRow* one1 = cell.at({1, 1.0});
  const SweepRow* one10 = cell.at({1, 10.0});
  const SweepRow* one20 = cell.at({1, 20.0});
  std::string detail = "T=" + std::to_string(cfg.horizon) + ", 10 seeds; delay at 1 DC " +
                       fix(one1->mean_delay_s, 2) + " -> " + fix(one10->mean_delay_s, 2) +
                       " -> " + fix(one20->mean_delay_s, 2) + " s (strictly increasing at every " +
                       "DC count: " + (delay_up ? "yes" : "no") + "); max cell dV " +
                       fix(dv_max, 4) + " <= 0.035; dV nonincreasing in k_p at 3-5 DCs: " +
                       (dv_down ? "yes" : "no");
  return {all_ok && delay_up && dv_cap && dv_down && cfg.horizon == 600, detail};
}

// ---- 8 ----------------------------------------------------------------------

Outcome mode_ordering() {
  ScenarioConfig cfg = from_file("feeder123.ini");
  cfg.n_dc = 5;
  double dv[3] = {0, 0, 0};
  double band_full = 0.0;
  const ControlMode modes[3] = {ControlMode::kNone, ControlMode::kInverterOnly, ControlMode::kFull};
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t seed = mix_seed(1, static_cast<std::uint64_t>(r));
    for (int k = 0; k < 3; ++k) {
      cfg.mode = modes[k];
      const Metrics m = compute_metrics(run_scenario(cfg, seed));
      dv[k] += m.dv_mean / 10.0;
      if (k == 2) band_full += m.within_band / 10.0;
    }
  }
  const double gain = (dv[1] - dv[2]) / dv[1];
  const bool pass = dv[2] < dv[1] && dv[1] < dv[0] && gain >= 0.05 && band_full >= 0.95;
  return {pass, "5 DCs, 10 seeds: dV none " + fix(dv[0], 4) + ", inverter " + fix(dv[1], 4) +
                    ", full " + fix(dv[2], 4) + "; full vs inverter gain " +
                    fix(100.0 * gain, 1) + "% >= 5%; within band under full control " +
                    fix(100.0 * band_full, 2) + "% >= 95%"};
}

// ---- 9 ----------------------------------------------------------------------

Outcome workload_oracles() {
  PowerTrace ref;
  ref.samples.assign(10, 10.0);  // 100 kJ at 10 kW
  QueryQueue q;
  q.add(0.0, ref);
  for (int t = 0; t < 13; ++t) q.step(8.0, 1.0);
  const DelayReport rep = query_delays(q, 13.0);
  const double delay_err = std::abs(rep.delays.at(0).delay_s - 2.5);

  const DvfsModel m;
  double worst = 0.0;
  for (int k = 0; k <= 12000; ++k) {
    const double f = m.f_min + (m.f_max - m.f_min) * k / 12000.0;
    worst = std::max(worst, std::abs(freq_for_power(dvfs_power(f, m), m) - f) / f);
  }
  const double eps = 4.0 * std::numeric_limits<double>::epsilon();
  return {delay_err <= 1e-9 && worst <= eps,
          "FCFS delay error " + sci(delay_err) + " <= 1e-9; DVFS round-trip max relative error " +
              sci(worst) + " <= 4 ulp"};
}

// ---- 10 ---------------------------------------------------------------------

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "gridvolt_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = true;
  int checked = 0;
  for (const char* name : {"six_bus_step.ini", "feeder123.ini", "six_bus_balance.ini"}) {
    const ScenarioConfig cfg = from_file(name);
    for (std::uint64_t seed : {1ULL, 77ULL}) {
      std::string first;
      for (int rep = 0; rep < 2; ++rep) {
        const SimResult res = run_scenario(cfg, seed);
        const fs::path p = dir / ("metrics" + std::to_string(rep) + ".csv");
        write_metrics_csv(p, res.dc_buses, compute_metrics(res));
        if (rep == 0) first = bytes(p);
        else same &= first == bytes(p);
      }
      ++checked;
    }
  }
  fs::remove_all(dir);
  return {same, std::to_string(checked) + " (config, seed) pairs, metrics.csv byte-identical: " +
                    (same ? "yes" : "no")};
}

}  // namespace

int main() {
  criterion(1, "flat-grid fixed point", 1.0, flat_grid);
  criterion(2, "sensitivity matrices vs inverse tree Laplacian", 5.0, sensitivity_oracle);
  criterion(3, "linear vs nonlinear solver agreement", 5.0, solver_agreement);
  criterion(4, "two-bus controller fixed point", 0.0, controller_fixed_point);
  criterion(5, "energy balance with idle tail", 0.0, energy_balance);
  criterion(6, "six-bus step response", 1.0, step_response);
  criterion(7, "k_p sweep trends", 300.0, table_trends);
  criterion(8, "control mode ordering", 120.0, mode_ordering);
  criterion(9, "workload oracles", 0.0, workload_oracles);
  criterion(10, "determinism", 0.0, determinism);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
