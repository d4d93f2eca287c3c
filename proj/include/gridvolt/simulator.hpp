#pragma once

#include "gridvolt/control.hpp"
#include "gridvolt/network.hpp"
#include "gridvolt/powerflow.hpp"
#include "gridvolt/workload.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gridvolt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ControlMode { kNone, kInverterOnly, kFull };
enum class TraceSource { kSynthetic, kFiles, kReplay };

std::string_view to_string(ControlMode mode);
std::string_view to_string(PowerFlowModel model);

struct DataCenterSettings {
  double peak_kw = 280.0;
  double q_min_kvar = -100.0;
  double q_max_kvar = 100.0;
  double k_p = 10.0;
  double k_q = 5.0;
  double alpha0 = 0.05;
  double gamma = 0.5;
  double alpha_max = 1.0;
  bool literal_backlog = false;
  /// Limit |q| by sqrt(s_rating^2 - p^2) each step.
  bool q_circle = false;
  double s_rating_kva = 300.0;
  DvfsModel dvfs;
};

struct InverterSettings {
  double k_q = 5.0;
  double q_min_kvar = -50.0;
  double q_max_kvar = 50.0;
};

struct ScenarioConfig {
  /// Either a loaded network or a path to one.
  std::shared_ptr<const Network> network;
  std::string network_file;
  SensitivityConvention sensitivity = SensitivityConvention::kMagnitude;

  int horizon = 600;  // steps T
  double dt = 1.0;    // s
  PowerFlowModel solver = PowerFlowModel::kNonlinear;
  SolverOptions solver_options;
  ControlMode mode = ControlMode::kFull;
  double noise_sigma = 0.05;

  // Buses marked inverter/dc in the network file are always controllable;
  // the counts below add randomly chosen pq buses on top.
  int n_dc = 0;
  std::vector<int> dc_buses;
  int n_inverters = 0;
  std::vector<int> inverter_buses;
  std::uint64_t placement_seed = 7;  // inverter placement, fixed across runs

  DataCenterSettings dc;
  InverterSettings inverter;

  TraceSource trace_source = TraceSource::kSynthetic;
  std::vector<std::string> trace_files;
  std::vector<PowerTrace> traces;  // in-memory traces take precedence over files
  SyntheticTraceConfig synthetic;
  int synthetic_pool = 16;
  std::optional<double> query_threshold;  // default: idle_level + 0.05
  int trailing_idle = 0;  // steps at the end kept free of new queries

  /// Resolves the network (loading network_file if needed) and checks invariants.
  void validate() const;
  const Network& resolved_network() const;
};

/// Loads `network_file` into `network` when only the path is set.
ScenarioConfig resolve(ScenarioConfig cfg);

/// Multiply each pq-load entry by (1 + sigma z), z ~ N(0,1) truncated to
/// [-3, 3]; one draw per bus scales both p and q. Other buses pass through.
InjectionVector perturb_loads(const InjectionVector& base, const std::vector<bool>& is_load,
                              double sigma, std::mt19937_64& rng);

/// SplitMix64 finalizer; derives independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct DataCenterSite {
  int bus = 0;
  double scale_pu = 0.0;        // normalized 1.0 in p.u.
  std::vector<double> p_ref;    // p.u. injection per step index 0..T
  DroopParams params;
  ControllerState control;
  QueryQueue queue;
};

struct InverterSite {
  int bus = 0;
  DroopParams params;
  ControllerState control;
};

struct GridState {
  int t = 0;
  VoltageVector v;
  InjectionVector inj;
  bool feasible = true;
  std::vector<DataCenterSite> dcs;
  std::vector<InverterSite> inverters;
};

struct SimResult {
  int horizon = 0;
  double dt = 1.0;
  double s_base_kva = 1000.0;
  int n_bus = 0;
  std::vector<int> dc_buses;
  std::vector<int> inverter_buses;
  Eigen::MatrixXd voltage;  // row t-1 holds the voltages after step t
  // Per data center, one entry per step.
  std::vector<std::vector<double>> p_ref;
  std::vector<std::vector<double>> p_served;
  std::vector<std::vector<double>> q_dc;
  std::vector<std::vector<double>> backlog;
  std::vector<SlackPower> slack;
  std::vector<bool> infeasible;
  std::vector<DelayReport> delays;
};

/// Closed loop of one scenario. Each step measures V_t, actuates the
/// controllers for t+1, perturbs the uncontrolled loads, solves V_{t+1}, then
/// credits served energy and adapts alpha.
class Simulation {
 public:
  Simulation(const ScenarioConfig& cfg, std::uint64_t seed);

  const GridState& state() const { return state_; }
  bool done() const { return state_.t >= cfg_.horizon; }
  void step();
  /// Steps to the horizon and returns the recorded histories.
  SimResult run();

 private:
  void record();
  bool solve(const InjectionVector& inj, VoltageVector& out) const;

  ScenarioConfig cfg_;
  const Network* net_;
  SensitivityMatrices sens_;
  std::vector<bool> is_load_;
  std::mt19937_64 noise_rng_;
  GridState state_;
  SimResult result_;
};

SimResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

struct Metrics {
  double dv_mean = 0.0;
  double dv_std = 0.0;
  double dv_max = 0.0;
  double within_band = 1.0;  // fraction of bus-step samples with |V-1| <= 0.05
  long samples = 0;
  int infeasible_steps = 0;
  double mean_delay_s = 0.0;
  int n_queries = 0;
  int censored_queries = 0;
  std::vector<double> dc_mean_delay_s;
  std::vector<double> balance_residual;      // |sum u_p - sum p_ref|, p.u. * steps
  std::vector<double> balance_residual_rel;  // relative to sum |p_ref|
  std::vector<double> overshoot_max_pu;      // largest consumption above reference
  double overshoot_fraction = 0.0;           // DC-steps consuming above reference
};

Metrics compute_metrics(const SimResult& res, double band = 0.05);

struct SweepSpec {
  std::vector<double> k_p{1.0, 10.0, 20.0};
  std::vector<int> n_dc{1, 2, 3, 4, 5};
  int seeds = 10;
  std::uint64_t master_seed = 1;
  int threads = 1;
};

struct SweepRun {
  int n_dc = 0;
  double k_p = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::vector<int> dc_buses;
  std::optional<Metrics> metrics;
  std::string error;
};

struct SweepRow {
  int n_dc = 0;
  double k_p = 0.0;
  double dv_mean = 0.0;       // mean over seeds of per-run mean deviation
  double dv_std = 0.0;        // sample std over seeds of per-run mean deviation
  double mean_delay_s = 0.0;  // mean over seeds of per-run mean delay
  double dv_sample_std = 0.0; // mean over seeds of per-run bus-step std
  double within_band = 0.0;
  int runs_ok = 0;
  int runs_failed = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepRow> rows;
};

/// Seed of replicate r is mix_seed(master, r) for every (n_dc, k_p) cell, so
/// cells compare under common random numbers. Cells run on up to
/// spec.threads worker threads; a failing run is recorded and skipped.
SweepResult sweep(const ScenarioConfig& base, const SweepSpec& spec);

}  // namespace gridvolt
