#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridvolt {

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniformly sampled power series. Normalized traces are fractions of TDP
/// (values may slightly exceed 1); scaled traces carry kW.
struct PowerTrace {
  double dt = 1.0;
  std::vector<double> samples;

  double duration() const { return dt * static_cast<double>(samples.size()); }
  /// Rectangle-rule integral (value * s).
  double integral() const;
};

/// Reads CSV with header `time_s,power_norm`. dt is the median spacing;
/// any spacing more than 1% away from it is rejected.
PowerTrace parse_trace(std::string_view text);
PowerTrace load_trace_file(const std::string& path);

/// Normalized trace to p.u. injections (negative: consumption) for a site
/// whose normalized 1.0 equals `peak_kw`.
std::vector<double> scale_trace(const PowerTrace& trace, double peak_kw, double s_base_kva);

/// Affine GPU power model: power = p_idle + kappa * f, f clamped to [f_min, f_max].
struct DvfsModel {
  double f_min = 210.0;
  double f_max = 1410.0;
  double p_idle = 0.1;
  double kappa = 0.9 / 1410.0;

  /// Normalized power at f_max.
  double rated() const { return p_idle + kappa * f_max; }
  void validate() const;
};

double dvfs_power(double f_mhz, const DvfsModel& m);
double freq_for_power(double p_norm, const DvfsModel& m);

struct Query {
  int id = 0;
  double arrival_s = 0.0;
  PowerTrace ref_profile;  // kW
  double ref_energy_kj = 0.0;
  double served_kj = 0.0;
  std::optional<double> completion_s;

  double reference_completion_s() const { return arrival_s + ref_profile.duration(); }
  bool complete() const { return completion_s.has_value(); }
};

/// FCFS service of the queries at one data-center bus.
///
/// Served energy goes to the oldest arrived query that has not completed;
/// once it completes the remainder of the step cascades to the next arrived
/// query. Energy served while no arrived query is waiting is booked as
/// unattributed (idle draw).
class QueryQueue {
 public:
  explicit QueryQueue(double start_time_s = 0.0) : now_(start_time_s) {}

  /// Appends a query; arrivals must be non-decreasing. Returns its id.
  int add(double arrival_s, PowerTrace ref_profile_kw);

  /// Credits served_kw over [now, now + dt) and advances the clock.
  void step(double served_kw, double dt);

  double now() const { return now_; }
  const std::vector<Query>& queries() const { return queries_; }
  double unattributed_kj() const { return unattributed_kj_; }
  /// Remaining reference energy of arrived, incomplete queries.
  double backlog_kj() const;
  int completed_count() const;
  int pending_count() const;
  /// Index of the query currently being served, if any.
  std::optional<size_t> active() const;

 private:
  std::vector<Query> queries_;
  size_t head_ = 0;  // first incomplete query
  double now_;
  double unattributed_kj_ = 0.0;
};

struct QueryDelay {
  int query_id = 0;
  double delay_s = 0.0;
  bool censored = false;  // still incomplete at horizon end
};

struct DelayReport {
  std::vector<QueryDelay> delays;
  double mean_s = 0.0;
  int censored = 0;
};

/// Delay = actual completion minus reference completion. Queries still
/// running at `horizon_end_s` are charged horizon_end - reference completion.
DelayReport query_delays(const QueryQueue& queue, double horizon_end_s);

/// Generator settings for square-ish inference bursts.
struct SyntheticTraceConfig {
  double burst_len_s = 40.0;
  double gap_s = 20.0;
  double ramp_frac = 0.15;  // mean ramp step; individual steps span +-1/3 of it
  double idle_level = 0.25;
  double peak_level = 0.95;
  double dip_probability = 0.08;
  double dt = 1.0;
  std::uint64_t seed = 1;
};

/// One burst: stepped ramp up from idle, a plateau with short dips, stepped
/// ramp down. All samples lie strictly above idle_level.
PowerTrace synthesize_burst(const SyntheticTraceConfig& cfg, std::mt19937_64& rng);

/// Splits a trace into contiguous runs of samples above `threshold`.
std::vector<PowerTrace> segment_queries(const PowerTrace& trace, double threshold);

/// Placement of bursts on a step grid together with the idle fill.
struct ReferenceSchedule {
  struct Slot {
    int arrival_index = 0;
    int length = 0;
  };
  std::vector<double> normalized;  // one value per step index
  std::vector<Slot> slots;
};

/// Lays snippets drawn uniformly from `pool` onto indices [first, end) with
/// idle gaps of mean `gap_s`; indices outside bursts hold `idle_level`.
ReferenceSchedule compose_schedule(const std::vector<PowerTrace>& pool, int n_steps, int first,
                                   int end, double gap_s, double idle_level, double dt,
                                   std::mt19937_64& rng);

/// Uses a trace verbatim as the timeline (padded with idle_level); every run
/// above `threshold` becomes a slot.
ReferenceSchedule replay_schedule(const PowerTrace& trace, int n_steps, int first,
                                  double idle_level, double threshold);

struct TraceStats {
  double peak = 0.0;
  double mean = 0.0;
  double median_ramp = 0.0;
  int ramp_count = 0;
  std::array<int, 10> ramp_histogram{};  // |step| in 10% buckets, last bucket open
};

/// Ramps are absolute sample-to-sample changes of at least 0.05 (plateau
/// jitter is not a ramp).
TraceStats trace_stats(const PowerTrace& trace);

}  // namespace gridvolt
