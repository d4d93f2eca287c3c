#include "gridvolt/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gridvolt {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_field(const std::string& field, int lineno) {
  const std::string t = trim(field);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
    throw TraceError("trace line " + std::to_string(lineno) + ": malformed number '" + t + "'");
  }
  return value;
}

double median(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

double PowerTrace::integral() const {
  double total = 0.0;
  for (double s : samples) total += s * dt;
  return total;
}

PowerTrace parse_trace(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::vector<double> times;
  PowerTrace trace;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      std::string compact;
      for (char c : line) {
        if (c != ' ' && c != '\t') compact.push_back(c);
      }
      if (compact == "time_s,power_norm") continue;
      // Headerless input is accepted when the first row is numeric.
      if (line.empty() || !(std::isdigit(static_cast<unsigned char>(line[0])) ||
                            line[0] == '-' || line[0] == '.')) {
        throw TraceError("trace header must be 'time_s,power_norm'");
      }
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw TraceError("trace line " + std::to_string(lineno) + ": expected two fields");
    }
    const double t = parse_field(line.substr(0, comma), lineno);
    const double p = parse_field(line.substr(comma + 1), lineno);
    if (p < 0.0) {
      throw TraceError("trace line " + std::to_string(lineno) + ": negative power");
    }
    if (!times.empty() && !(t > times.back())) {
      throw TraceError("trace line " + std::to_string(lineno) + ": time is not increasing");
    }
    times.push_back(t);
    trace.samples.push_back(p);
  }
  if (trace.samples.empty()) throw TraceError("empty trace");
  if (trace.samples.size() == 1) {
    throw TraceError("trace needs at least two samples to infer its spacing");
  }
  std::vector<double> spacing(times.size() - 1);
  for (size_t i = 1; i < times.size(); ++i) spacing[i - 1] = times[i] - times[i - 1];
  trace.dt = median(spacing);
  for (size_t i = 0; i < spacing.size(); ++i) {
    if (std::abs(spacing[i] - trace.dt) > 0.01 * trace.dt) {
      throw TraceError("trace spacing jitter above 1% at sample " + std::to_string(i + 1));
    }
  }
  return trace;
}

PowerTrace load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_trace(ss.str());
  } catch (const TraceError& e) {
    throw TraceError(path + ": " + e.what());
  }
}

std::vector<double> scale_trace(const PowerTrace& trace, double peak_kw, double s_base_kva) {
  if (!(peak_kw > 0.0) || !std::isfinite(peak_kw)) {
    throw TraceError("peak_kw must be positive");
  }
  if (!(s_base_kva > 0.0)) throw TraceError("s_base must be positive");
  const double factor = peak_kw / s_base_kva;
  std::vector<double> out;
  out.reserve(trace.samples.size());
  for (double s : trace.samples) out.push_back(-s * factor);
  return out;
}

void DvfsModel::validate() const {
  if (!(f_min > 0.0 && f_min < f_max)) throw std::invalid_argument("DVFS needs 0 < f_min < f_max");
  if (!(p_idle >= 0.0)) throw std::invalid_argument("DVFS p_idle must be >= 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("DVFS kappa must be > 0");
}

double dvfs_power(double f_mhz, const DvfsModel& m) {
  return m.p_idle + m.kappa * std::clamp(f_mhz, m.f_min, m.f_max);
}

double freq_for_power(double p_norm, const DvfsModel& m) {
  return std::clamp((p_norm - m.p_idle) / m.kappa, m.f_min, m.f_max);
}

int QueryQueue::add(double arrival_s, PowerTrace ref_profile_kw) {
  if (!queries_.empty() && arrival_s < queries_.back().arrival_s) {
    throw std::invalid_argument("queries must be added in arrival order");
  }
  Query q;
  q.id = static_cast<int>(queries_.size());
  q.arrival_s = arrival_s;
  q.ref_energy_kj = ref_profile_kw.integral();
  if (!(q.ref_energy_kj > 0.0)) throw std::invalid_argument("query reference energy must be > 0");
  q.ref_profile = std::move(ref_profile_kw);
  queries_.push_back(std::move(q));
  return queries_.back().id;
}

void QueryQueue::step(double served_kw, double dt) {
  if (served_kw < 0.0) throw std::invalid_argument("served power must be >= 0");
  const double start = now_;
  double energy = served_kw * dt;
  double cursor = start;
  // Arrivals share the step grid; the tolerance absorbs clock rounding.
  const double arrived_before = start + 1e-9 * dt;
  while (energy > 0.0 && head_ < queries_.size() &&
         queries_[head_].arrival_s <= arrived_before) {
    Query& q = queries_[head_];
    const double remaining = q.ref_energy_kj - q.served_kj;
    if (energy >= remaining - 1e-9 * q.ref_energy_kj) {
      const double used = std::min(remaining, energy);
      cursor += used / served_kw;
      q.served_kj = q.ref_energy_kj;
      q.completion_s = std::min(cursor, start + dt);
      energy -= used;
      ++head_;
    } else {
      q.served_kj += energy;
      energy = 0.0;
    }
  }
  unattributed_kj_ += energy;
  now_ = start + dt;
}

double QueryQueue::backlog_kj() const {
  double total = 0.0;
  for (size_t i = head_; i < queries_.size(); ++i) {
    if (queries_[i].arrival_s > now_) break;
    total += queries_[i].ref_energy_kj - queries_[i].served_kj;
  }
  return total;
}

int QueryQueue::completed_count() const { return static_cast<int>(head_); }

int QueryQueue::pending_count() const {
  int n = 0;
  for (size_t i = head_; i < queries_.size(); ++i) {
    if (queries_[i].arrival_s > now_) ++n;
  }
  return n;
}

std::optional<size_t> QueryQueue::active() const {
  if (head_ < queries_.size() && queries_[head_].arrival_s <= now_) return head_;
  return std::nullopt;
}

DelayReport query_delays(const QueryQueue& queue, double horizon_end_s) {
  DelayReport report;
  double total = 0.0;
  for (const Query& q : queue.queries()) {
    QueryDelay d;
    d.query_id = q.id;
    if (q.completion_s) {
      d.delay_s = *q.completion_s - q.reference_completion_s();
    } else {
      d.delay_s = horizon_end_s - q.reference_completion_s();
      d.censored = true;
      ++report.censored;
    }
    total += d.delay_s;
    report.delays.push_back(d);
  }
  if (!report.delays.empty()) report.mean_s = total / static_cast<double>(report.delays.size());
  return report;
}

PowerTrace synthesize_burst(const SyntheticTraceConfig& cfg, std::mt19937_64& rng) {
  PowerTrace tr;
  tr.dt = cfg.dt;
  const double step_lo = cfg.ramp_frac * 2.0 / 3.0;
  const double step_hi = cfg.ramp_frac * 4.0 / 3.0;
  const double floor = cfg.idle_level + 0.5 * step_lo;

  double level = cfg.idle_level;
  while (level < cfg.peak_level) {
    level = std::min(cfg.peak_level, level + uniform(rng, step_lo, step_hi));
    tr.samples.push_back(level);
  }
  const double secs = cfg.burst_len_s * uniform(rng, 0.5, 1.5);
  const int plateau = std::max(1, static_cast<int>(std::lround(secs / cfg.dt)));
  std::normal_distribution<double> jitter(0.0, 0.01);
  for (int k = 0; k < plateau; ++k) {
    if (uniform(rng, 0.0, 1.0) < cfg.dip_probability) {
      const double dip = std::max(floor, cfg.peak_level - uniform(rng, step_lo, step_hi));
      const int len = 1 + static_cast<int>(uniform(rng, 0.0, 2.0));
      for (int d = 0; d < len && k < plateau; ++d, ++k) tr.samples.push_back(dip);
      if (k >= plateau) break;
    }
    tr.samples.push_back(std::clamp(cfg.peak_level + jitter(rng), floor, 1.0));
  }
  level = tr.samples.back();
  while (true) {
    level -= uniform(rng, step_lo, step_hi);
    if (level <= floor) break;
    tr.samples.push_back(level);
  }
  return tr;
}

std::vector<PowerTrace> segment_queries(const PowerTrace& trace, double threshold) {
  std::vector<PowerTrace> out;
  PowerTrace current;
  current.dt = trace.dt;
  for (double s : trace.samples) {
    if (s > threshold) {
      current.samples.push_back(s);
    } else if (!current.samples.empty()) {
      out.push_back(current);
      current.samples.clear();
    }
  }
  if (!current.samples.empty()) out.push_back(current);
  return out;
}

ReferenceSchedule compose_schedule(const std::vector<PowerTrace>& pool, int n_steps, int first,
                                   int end, double gap_s, double idle_level, double dt,
                                   std::mt19937_64& rng) {
  if (pool.empty()) throw TraceError("no trace snippets available");
  ReferenceSchedule sched;
  sched.normalized.assign(static_cast<size_t>(n_steps), idle_level);
  end = std::min(end, n_steps);
  const auto gap_steps = [&] {
    return std::max(1, static_cast<int>(std::lround(gap_s * uniform(rng, 0.5, 1.5) / dt)));
  };
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  int pos = first + static_cast<int>(std::floor(uniform(rng, 0.0, gap_s / dt)));
  while (true) {
    const PowerTrace& snippet = pool[pick(rng)];
    const int len = static_cast<int>(snippet.samples.size());
    if (pos + len > end) break;
    std::copy(snippet.samples.begin(), snippet.samples.end(),
              sched.normalized.begin() + pos);
    sched.slots.push_back({pos, len});
    pos += len + gap_steps();
  }
  return sched;
}

ReferenceSchedule replay_schedule(const PowerTrace& trace, int n_steps, int first,
                                  double idle_level, double threshold) {
  ReferenceSchedule sched;
  sched.normalized.assign(static_cast<size_t>(n_steps), idle_level);
  for (size_t k = 0; k < trace.samples.size() && k < sched.normalized.size(); ++k) {
    sched.normalized[k] = trace.samples[k];
  }
  int start = -1;
  for (int k = first; k <= n_steps; ++k) {
    const bool high = k < n_steps && sched.normalized[static_cast<size_t>(k)] > threshold;
    if (high && start < 0) start = k;
    if (!high && start >= 0) {
      sched.slots.push_back({start, k - start});
      start = -1;
    }
  }
  return sched;
}

TraceStats trace_stats(const PowerTrace& trace) {
  TraceStats st;
  if (trace.samples.empty()) return st;
  double total = 0.0;
  for (double s : trace.samples) {
    st.peak = std::max(st.peak, s);
    total += s;
  }
  st.mean = total / static_cast<double>(trace.samples.size());
  std::vector<double> ramps;
  for (size_t i = 1; i < trace.samples.size(); ++i) {
    const double r = std::abs(trace.samples[i] - trace.samples[i - 1]);
    if (r < 0.05) continue;
    ramps.push_back(r);
    const auto bucket = std::min<size_t>(9, static_cast<size_t>(r * 10.0));
    ++st.ramp_histogram[bucket];
  }
  st.ramp_count = static_cast<int>(ramps.size());
  if (!ramps.empty()) st.median_ramp = median(ramps);
  return st;
}

}  // namespace gridvolt
