#include "gridvolt/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

namespace gridvolt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> shuffled(std::vector<int> ids, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

}  // namespace

std::string_view to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::kNone: return "none";
    case ControlMode::kInverterOnly: return "inverter";
    case ControlMode::kFull: return "full";
  }
  return "unknown";
}

std::string_view to_string(PowerFlowModel model) {
  return model == PowerFlowModel::kLinear ? "linear" : "nonlinear";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ScenarioConfig resolve(ScenarioConfig cfg) {
  if (!cfg.network) {
    if (cfg.network_file.empty()) throw ConfigError("no network configured");
    cfg.network = std::make_shared<const Network>(load_network_file(cfg.network_file));
  }
  return cfg;
}

const Network& ScenarioConfig::resolved_network() const {
  if (!network) throw ConfigError("network not loaded; call resolve() first");
  return *network;
}

void ScenarioConfig::validate() const {
  const Network& net = resolved_network();
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (n_dc < 0 || n_inverters < 0) throw ConfigError("placement counts must be >= 0");
  if (trailing_idle < 0 || trailing_idle > horizon) {
    throw ConfigError("trailing_idle must lie in [0, horizon]");
  }
  if (!(solver_options.tol > 0.0) || solver_options.max_iter < 1) {
    throw ConfigError("solver needs tol > 0 and max_iter >= 1");
  }
  if (!(dc.peak_kw > 0.0)) throw ConfigError("dc peak_kw must be > 0");
  if (!(dc.q_min_kvar <= dc.q_max_kvar) || !(inverter.q_min_kvar <= inverter.q_max_kvar)) {
    throw ConfigError("reactive bounds need q_min <= q_max");
  }
  if (dc.k_p < 0.0 || dc.k_q < 0.0 || inverter.k_q < 0.0) {
    throw ConfigError("droop gains must be >= 0");
  }
  if (!(dc.alpha0 >= 0.0 && dc.alpha0 <= dc.alpha_max) || dc.gamma < 0.0) {
    throw ConfigError("alpha settings need 0 <= alpha0 <= alpha_max and gamma >= 0");
  }
  try {
    dc.dvfs.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::set<int> seen;
  for (int b : dc_buses) {
    if (b <= 0 || b > net.size()) throw ConfigError("dc bus " + std::to_string(b) + " out of range");
    if (!seen.insert(b).second) throw ConfigError("bus " + std::to_string(b) + " listed twice");
  }
  for (int b : inverter_buses) {
    if (b <= 0 || b > net.size()) {
      throw ConfigError("inverter bus " + std::to_string(b) + " out of range");
    }
    if (!seen.insert(b).second) throw ConfigError("bus " + std::to_string(b) + " listed twice");
  }
  int eligible = 0;
  for (const Bus& b : net.buses()) {
    if (b.role == BusRole::kPqLoad && !seen.count(b.id)) ++eligible;
  }
  if (n_dc + n_inverters > eligible) {
    throw ConfigError("requested " + std::to_string(n_dc) + " data centers and " +
                      std::to_string(n_inverters) + " inverters but only " +
                      std::to_string(eligible) + " pq buses are eligible");
  }
  if (trace_source != TraceSource::kSynthetic && traces.empty() && trace_files.empty()) {
    throw ConfigError("trace source needs at least one trace file");
  }
  if (synthetic_pool < 1) throw ConfigError("synthetic pool must hold at least one burst");
}

InjectionVector perturb_loads(const InjectionVector& base, const std::vector<bool>& is_load,
                              double sigma, std::mt19937_64& rng) {
  InjectionVector out = base;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < base.p.size(); ++i) {
    if (!is_load[static_cast<size_t>(i)]) continue;
    const double z = std::clamp(normal(rng), -3.0, 3.0);
    out.p(i) *= 1.0 + sigma * z;
    out.q(i) *= 1.0 + sigma * z;
  }
  return out;
}

Simulation::Simulation(const ScenarioConfig& cfg, std::uint64_t seed)
    : cfg_(resolve(cfg)), net_(nullptr), noise_rng_(mix_seed(seed, 2)) {
  cfg_.validate();
  const Network& file_net = cfg_.resolved_network();
  const int n = file_net.size();
  const double s_base = file_net.s_base_kva();

  // Placement: file roles, explicit lists, then random pq buses.
  std::vector<int> inverter_buses;
  std::vector<int> dc_buses;
  for (const Bus& b : file_net.buses()) {
    if (b.role == BusRole::kInverter) inverter_buses.push_back(b.id);
    if (b.role == BusRole::kDataCenter) dc_buses.push_back(b.id);
  }
  std::set<int> taken(cfg_.dc_buses.begin(), cfg_.dc_buses.end());
  taken.insert(cfg_.inverter_buses.begin(), cfg_.inverter_buses.end());
  for (int b : cfg_.inverter_buses) {
    if (file_net.bus(b).role != BusRole::kPqLoad) {
      throw ConfigError("inverter bus " + std::to_string(b) + " is not a pq bus");
    }
    inverter_buses.push_back(b);
  }
  for (int b : cfg_.dc_buses) {
    if (file_net.bus(b).role != BusRole::kPqLoad) {
      throw ConfigError("dc bus " + std::to_string(b) + " is not a pq bus");
    }
    dc_buses.push_back(b);
  }
  std::vector<int> free_pq;
  for (const Bus& b : file_net.buses()) {
    if (b.role == BusRole::kPqLoad && !taken.count(b.id)) free_pq.push_back(b.id);
  }
  const std::vector<int> inv_draw = shuffled(free_pq, mix_seed(cfg_.placement_seed, 11));
  std::set<int> random_inverters(inv_draw.begin(), inv_draw.begin() + cfg_.n_inverters);
  inverter_buses.insert(inverter_buses.end(), random_inverters.begin(), random_inverters.end());
  std::vector<int> dc_pool;
  for (int b : free_pq) {
    if (!random_inverters.count(b)) dc_pool.push_back(b);
  }
  const std::vector<int> dc_draw = shuffled(dc_pool, mix_seed(seed, 1));
  dc_buses.insert(dc_buses.end(), dc_draw.begin(), dc_draw.begin() + cfg_.n_dc);

  // Role-adjusted copy of the network.
  std::vector<Bus> buses = file_net.buses();
  const ReactiveBounds inv_bounds{cfg_.inverter.q_min_kvar / s_base,
                                  cfg_.inverter.q_max_kvar / s_base};
  const ReactiveBounds dc_bounds{cfg_.dc.q_min_kvar / s_base, cfg_.dc.q_max_kvar / s_base};
  for (int b : inverter_buses) {
    Bus& bus = buses[static_cast<size_t>(b)];
    bus.role = BusRole::kInverter;
    if (!bus.q_bounds) bus.q_bounds = inv_bounds;
  }
  for (int b : dc_buses) {
    Bus& bus = buses[static_cast<size_t>(b)];
    bus.role = BusRole::kDataCenter;
    if (!bus.q_bounds) bus.q_bounds = dc_bounds;
  }
  cfg_.network = std::make_shared<const Network>(std::move(buses), file_net.lines(), s_base,
                                                 file_net.v_base_kv());
  net_ = cfg_.network.get();
  sens_ = build_sensitivity(*net_, cfg_.sensitivity);
  is_load_.resize(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) {
    is_load_[static_cast<size_t>(i - 1)] = net_->bus(i).role == BusRole::kPqLoad;
  }

  // Reference power for every data center.
  const int n_steps = cfg_.horizon + 1;
  const int active_end = n_steps - cfg_.trailing_idle;
  const double idle = cfg_.synthetic.idle_level;
  const double threshold = cfg_.query_threshold.value_or(idle + 0.05);
  std::vector<PowerTrace> traces = cfg_.traces;
  if (cfg_.trace_source != TraceSource::kSynthetic && traces.empty()) {
    for (const std::string& f : cfg_.trace_files) traces.push_back(load_trace_file(f));
  }
  for (const PowerTrace& tr : traces) {
    if (cfg_.trace_source != TraceSource::kSynthetic &&
        std::abs(tr.dt - cfg_.dt) > 1e-9 * cfg_.dt) {
      throw ConfigError("trace spacing " + std::to_string(tr.dt) +
                        " s does not match the simulation step");
    }
  }
  std::vector<PowerTrace> pool;
  if (cfg_.trace_source == TraceSource::kSynthetic) {
    SyntheticTraceConfig syn = cfg_.synthetic;
    syn.dt = cfg_.dt;
    std::mt19937_64 pool_rng(mix_seed(mix_seed(seed, 3), syn.seed));
    for (int k = 0; k < cfg_.synthetic_pool; ++k) pool.push_back(synthesize_burst(syn, pool_rng));
  } else if (cfg_.trace_source == TraceSource::kFiles) {
    for (const PowerTrace& tr : traces) {
      for (PowerTrace& seg : segment_queries(tr, threshold)) pool.push_back(std::move(seg));
    }
    if (pool.empty()) throw ConfigError("trace files contain no samples above the query threshold");
  }

  const double peak = cfg_.dc.peak_kw;
  const double scale = peak / s_base;
  for (size_t d = 0; d < dc_buses.size(); ++d) {
    DataCenterSite site;
    site.bus = dc_buses[d];
    site.scale_pu = scale;
    ReferenceSchedule sched;
    if (cfg_.trace_source == TraceSource::kReplay) {
      sched = replay_schedule(traces[d % traces.size()], n_steps, 1, idle, threshold);
    } else {
      std::mt19937_64 rng(mix_seed(seed, 1000 + d));
      sched = compose_schedule(pool, n_steps, 1, active_end, cfg_.synthetic.gap_s, idle,
                               cfg_.dt, rng);
    }
    site.p_ref.resize(sched.normalized.size());
    for (size_t k = 0; k < sched.normalized.size(); ++k) site.p_ref[k] = -sched.normalized[k] * scale;
    site.queue = QueryQueue(cfg_.dt);
    for (const auto& slot : sched.slots) {
      PowerTrace profile;
      profile.dt = cfg_.dt;
      for (int k = slot.arrival_index; k < slot.arrival_index + slot.length; ++k) {
        profile.samples.push_back(sched.normalized[static_cast<size_t>(k)] * peak);
      }
      site.queue.add(slot.arrival_index * cfg_.dt, std::move(profile));
    }
    const ReactiveBounds qb = *net_->bus(site.bus).q_bounds;
    site.params.k_p = cfg_.dc.k_p;
    site.params.k_q = cfg_.dc.k_q;
    site.params.p_lo = -dvfs_power(cfg_.dc.dvfs.f_max, cfg_.dc.dvfs) * scale;
    site.params.p_hi = -dvfs_power(cfg_.dc.dvfs.f_min, cfg_.dc.dvfs) * scale;
    site.params.q_lo = qb.q_min;
    site.params.q_hi = qb.q_max;
    site.params.alpha0 = cfg_.dc.alpha0;
    site.params.gamma = cfg_.dc.gamma;
    site.params.alpha_max = cfg_.dc.alpha_max;
    site.params.literal_backlog = cfg_.dc.literal_backlog;
    site.params.validate();
    site.control = ControllerState::initial(site.params, site.p_ref[0], 0.0);
    state_.dcs.push_back(std::move(site));
  }
  for (int b : inverter_buses) {
    InverterSite site;
    site.bus = b;
    const ReactiveBounds qb = *net_->bus(b).q_bounds;
    site.params.k_q = cfg_.inverter.k_q;
    site.params.q_lo = qb.q_min;
    site.params.q_hi = qb.q_max;
    site.params.validate();
    site.control = ControllerState::initial(site.params, 0.0, 0.0);
    state_.inverters.push_back(site);
  }

  // Initial operating point: references at index 0, no reactive support.
  state_.inj = InjectionVector::base(*net_);
  for (const DataCenterSite& site : state_.dcs) state_.inj.p(site.bus - 1) += site.p_ref[0];
  if (!solve(state_.inj, state_.v)) {
    throw ConfigError("initial operating point has no power-flow solution");
  }

  result_.horizon = cfg_.horizon;
  result_.dt = cfg_.dt;
  result_.s_base_kva = s_base;
  result_.n_bus = n;
  result_.dc_buses = dc_buses;
  result_.inverter_buses = inverter_buses;
  result_.voltage = Eigen::MatrixXd::Zero(cfg_.horizon, n);
  const size_t n_dc = dc_buses.size();
  result_.p_ref.assign(n_dc, {});
  result_.p_served.assign(n_dc, {});
  result_.q_dc.assign(n_dc, {});
  result_.backlog.assign(n_dc, {});
}

bool Simulation::solve(const InjectionVector& inj, VoltageVector& out) const {
  if (cfg_.solver == PowerFlowModel::kLinear) {
    VoltageVector v = solve_lindistflow(sens_, inj);
    if (!v.v.allFinite() || v.v.minCoeff() <= 0.0) return false;
    out = std::move(v);
    return true;
  }
  try {
    out = solve_distflow_nonlinear(*net_, inj, cfg_.solver_options);
    return true;
  } catch (const ConvergenceError&) {
    return false;
  }
}

void Simulation::step() {
  if (done()) throw std::logic_error("simulation already reached its horizon");
  const Eigen::VectorXd& v = state_.v.v;
  const int next = state_.t + 1;
  const bool inverters_on = cfg_.mode != ControlMode::kNone;
  const bool dcs_on = cfg_.mode == ControlMode::kFull;

  InjectionVector inj =
      perturb_loads(InjectionVector::base(*net_), is_load_, cfg_.noise_sigma, noise_rng_);

  for (InverterSite& site : state_.inverters) {
    double u_q = 0.0;
    if (inverters_on) {
      ReactiveUpdate r = reactive_droop_update(site.control, site.params, v(site.bus - 1));
      u_q = r.u_q;
      site.control = r.state;
    }
    inj.q(site.bus - 1) += u_q;
  }

  std::vector<double> served(state_.dcs.size());
  std::vector<double> q_out(state_.dcs.size());
  for (size_t d = 0; d < state_.dcs.size(); ++d) {
    DataCenterSite& site = state_.dcs[d];
    const double p_ref = site.p_ref[static_cast<size_t>(next)];
    double u_p = p_ref;
    double u_q = 0.0;
    if (dcs_on) {
      const double vi = v(site.bus - 1);
      DroopParams pr = site.params;
      // A site can always follow its own reference, even outside the DVFS band.
      pr.p_lo = std::min(pr.p_lo, p_ref);
      pr.p_hi = std::max(pr.p_hi, p_ref);
      ActiveUpdate a = active_droop_update(site.control, pr, vi, p_ref);
      u_p = a.u_p;
      site.control = a.state;
      if (cfg_.dc.q_circle) {
        const double s = cfg_.dc.s_rating_kva / net_->s_base_kva();
        const double lim = std::sqrt(std::max(0.0, s * s - u_p * u_p));
        pr.q_hi = std::min(pr.q_hi, lim);
        pr.q_lo = std::max(pr.q_lo, -lim);
        if (pr.q_lo > pr.q_hi) pr.q_lo = pr.q_hi = 0.0;
      }
      ReactiveUpdate r = reactive_droop_update(site.control, pr, vi);
      u_q = r.u_q;
      site.control = r.state;
    }
    inj.p(site.bus - 1) += u_p;
    inj.q(site.bus - 1) += u_q;
    served[d] = u_p;
    q_out[d] = u_q;
  }

  VoltageVector v_next;
  state_.feasible = solve(inj, v_next);
  if (state_.feasible) state_.v = std::move(v_next);

  for (size_t d = 0; d < state_.dcs.size(); ++d) {
    DataCenterSite& site = state_.dcs[d];
    site.queue.step(std::max(0.0, -served[d]) * net_->s_base_kva(), cfg_.dt);
    if (dcs_on) site.control.alpha = adapt_alpha(site.control, site.params);
    result_.p_ref[d].push_back(site.p_ref[static_cast<size_t>(next)]);
    result_.p_served[d].push_back(served[d]);
    result_.q_dc[d].push_back(q_out[d]);
    result_.backlog[d].push_back(site.control.S);
  }
  state_.inj = std::move(inj);
  state_.t = next;
  record();
}

void Simulation::record() {
  const int row = state_.t - 1;
  result_.voltage.row(row) = state_.v.v.transpose();
  result_.infeasible.push_back(!state_.feasible);
  if (state_.feasible) {
    result_.slack.push_back(slack_power(*net_, state_.inj, state_.v, cfg_.solver));
  } else {
    result_.slack.push_back({kNaN, kNaN});
  }
}

SimResult Simulation::run() {
  while (!done()) step();
  const double horizon_end = (cfg_.horizon + 1) * cfg_.dt;
  result_.delays.clear();
  for (const DataCenterSite& site : state_.dcs) {
    result_.delays.push_back(query_delays(site.queue, horizon_end));
  }
  return result_;
}

SimResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  return Simulation(cfg, seed).run();
}

Metrics compute_metrics(const SimResult& res, double band) {
  Metrics m;
  double sum = 0.0;
  double sum_sq = 0.0;
  long within = 0;
  for (int t = 0; t < res.voltage.rows(); ++t) {
    if (t < static_cast<int>(res.infeasible.size()) && res.infeasible[static_cast<size_t>(t)]) {
      ++m.infeasible_steps;
      continue;
    }
    for (int i = 0; i < res.voltage.cols(); ++i) {
      const double dev = std::abs(res.voltage(t, i) - 1.0);
      sum += dev;
      sum_sq += dev * dev;
      m.dv_max = std::max(m.dv_max, dev);
      if (dev <= band + 1e-12) ++within;
      ++m.samples;
    }
  }
  if (m.samples > 0) {
    const auto n = static_cast<double>(m.samples);
    m.dv_mean = sum / n;
    m.dv_std = std::sqrt(std::max(0.0, sum_sq / n - m.dv_mean * m.dv_mean));
    m.within_band = static_cast<double>(within) / n;
  }

  double delay_total = 0.0;
  for (const DelayReport& rep : res.delays) {
    m.dc_mean_delay_s.push_back(rep.mean_s);
    for (const QueryDelay& d : rep.delays) delay_total += d.delay_s;
    m.n_queries += static_cast<int>(rep.delays.size());
    m.censored_queries += rep.censored;
  }
  if (m.n_queries > 0) m.mean_delay_s = delay_total / m.n_queries;

  long over = 0;
  long dc_steps = 0;
  for (size_t d = 0; d < res.p_ref.size(); ++d) {
    double served = 0.0;
    double ref = 0.0;
    double ref_abs = 0.0;
    double overshoot = 0.0;
    for (size_t t = 0; t < res.p_ref[d].size(); ++t) {
      served += res.p_served[d][t];
      ref += res.p_ref[d][t];
      ref_abs += std::abs(res.p_ref[d][t]);
      const double excess = res.p_ref[d][t] - res.p_served[d][t];
      if (excess > 1e-12) {
        ++over;
        overshoot = std::max(overshoot, excess);
      }
      ++dc_steps;
    }
    const double residual = std::abs(served - ref);
    m.balance_residual.push_back(residual);
    m.balance_residual_rel.push_back(ref_abs > 0.0 ? residual / ref_abs : 0.0);
    m.overshoot_max_pu.push_back(overshoot);
  }
  if (dc_steps > 0) m.overshoot_fraction = static_cast<double>(over) / dc_steps;
  return m;
}

SweepResult sweep(const ScenarioConfig& base_in, const SweepSpec& spec) {
  if (spec.seeds < 1) throw ConfigError("sweep needs at least one seed");
  if (spec.k_p.empty() || spec.n_dc.empty()) throw ConfigError("sweep grid is empty");
  const ScenarioConfig base = resolve(base_in);

  SweepResult out;
  for (int n_dc : spec.n_dc) {
    for (double k_p : spec.k_p) {
      for (int r = 0; r < spec.seeds; ++r) {
        SweepRun run;
        run.n_dc = n_dc;
        run.k_p = k_p;
        run.replicate = r;
        run.seed = mix_seed(spec.master_seed, static_cast<std::uint64_t>(r));
        out.runs.push_back(run);
      }
    }
  }

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < out.runs.size(); i = next++) {
      SweepRun& run = out.runs[i];
      try {
        ScenarioConfig cfg = base;
        cfg.n_dc = run.n_dc;
        cfg.dc.k_p = run.k_p;
        const SimResult res = run_scenario(cfg, run.seed);
        run.dc_buses = res.dc_buses;
        run.metrics = compute_metrics(res);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(spec.threads, static_cast<int>(out.runs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const size_t per_cell = static_cast<size_t>(spec.seeds);
  for (size_t c = 0; c * per_cell < out.runs.size(); ++c) {
    SweepRow row;
    row.n_dc = out.runs[c * per_cell].n_dc;
    row.k_p = out.runs[c * per_cell].k_p;
    std::vector<double> dv;
    double delay = 0.0, sample_std = 0.0, within = 0.0;
    for (size_t r = 0; r < per_cell; ++r) {
      const SweepRun& run = out.runs[c * per_cell + r];
      if (!run.metrics) {
        ++row.runs_failed;
        continue;
      }
      ++row.runs_ok;
      dv.push_back(run.metrics->dv_mean);
      delay += run.metrics->mean_delay_s;
      sample_std += run.metrics->dv_std;
      within += run.metrics->within_band;
    }
    if (row.runs_ok > 0) {
      const double k = row.runs_ok;
      double s = 0.0;
      for (double x : dv) s += x;
      row.dv_mean = s / k;
      double ss = 0.0;
      for (double x : dv) ss += (x - row.dv_mean) * (x - row.dv_mean);
      row.dv_std = row.runs_ok > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
      row.mean_delay_s = delay / k;
      row.dv_sample_std = sample_std / k;
      row.within_band = within / k;
    } else {
      row.dv_mean = row.dv_std = row.mean_delay_s = kNaN;
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace gridvolt
