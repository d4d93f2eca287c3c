#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridvolt {

/// Raised when a network file cannot be tokenized or contains unknown keywords.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a syntactically valid network violates a structural invariant
/// (not radial, duplicate ids, missing feeder, bad bounds).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a numerical construction produces non-finite or indefinite results.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BusRole { kFeeder, kPqLoad, kInverter, kDataCenter };

std::string_view to_string(BusRole role);
BusRole parse_role(std::string_view token);

/// Reactive limits of a controllable bus, p.u.
struct ReactiveBounds {
  double q_min = 0.0;
  double q_max = 0.0;
};

// All powers are net injections in p.u.; consumption is negative.
struct Bus {
  int id = 0;
  BusRole role = BusRole::kPqLoad;
  double p_base = 0.0;
  double q_base = 0.0;
  std::optional<ReactiveBounds> q_bounds;
};

struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
};

/// Validated radial network rooted at bus 0.
///
/// Construction checks every structural invariant and caches the tree
/// orientation (parent line of each bus, root-first ordering), so the sweep
/// solver and sensitivity builder never revalidate.
class Network {
 public:
  static constexpr double kDefaultSBaseKva = 1000.0;
  static constexpr double kDefaultVBaseKv = 4.16;

  /// Buses may arrive in any order; ids must cover 0..N exactly once.
  /// Line endpoints may be given in either orientation.
  Network(std::vector<Bus> buses, std::vector<Line> lines,
          double s_base_kva = kDefaultSBaseKva,
          double v_base_kv = kDefaultVBaseKv);

  /// Number of non-feeder buses (N).
  int size() const { return static_cast<int>(buses_.size()) - 1; }
  const std::vector<Bus>& buses() const { return buses_; }
  const Bus& bus(int id) const { return buses_.at(static_cast<size_t>(id)); }
  const std::vector<Line>& lines() const { return lines_; }
  double s_base_kva() const { return s_base_kva_; }
  double v_base_kv() const { return v_base_kv_; }
  /// Impedance base in ohm.
  double z_base_ohm() const { return v_base_kv_ * v_base_kv_ * 1000.0 / s_base_kva_; }

  /// Index into lines() of the line connecting `bus` to its parent; -1 for the feeder.
  int parent_line(int bus) const { return parent_line_.at(static_cast<size_t>(bus)); }
  /// Parent bus id; -1 for the feeder.
  int parent(int bus) const { return parent_.at(static_cast<size_t>(bus)); }
  /// Bus ids ordered so that every parent precedes its children (starts with 0).
  const std::vector<int>& root_first_order() const { return order_; }
  const std::vector<int>& children(int bus) const {
    return children_.at(static_cast<size_t>(bus));
  }

  /// Copy of this network with `bus` re-assigned to `role`.
  Network with_role(int bus, BusRole role, std::optional<ReactiveBounds> bounds) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  double s_base_kva_;
  double v_base_kv_;
  std::vector<int> parent_line_;
  std::vector<int> parent_;
  std::vector<int> order_;
  std::vector<std::vector<int>> children_;
};

/// Parses the line-oriented network format:
///   BASE <s_base_kVA> <v_base_kV>
///   BUS  <id> <feeder|pq|inverter|dc> <p_kW> <q_kvar> [q_min_kvar q_max_kvar]
///   LINE <from> <to> <r_ohm> <x_ohm>
/// '#' starts a comment. Values are converted to per-unit on the file's bases.
Network load_network(std::string_view text);
Network load_network_file(const std::string& path);

/// For each bus id, the ordered line indices from the feeder down to that bus.
std::vector<std::vector<int>> root_paths(const Network& net);

/// How the linear model relates injections to voltage.
enum class SensitivityConvention {
  kMagnitude,  // v = R p + X q + 1, R = common-path resistance
  kSquared,    // v^2 = 2 R p + 2 X q + 1 (matrices carry the factor 2)
};

/// LinDistFlow sensitivities; index i-1 corresponds to bus i.
struct SensitivityMatrices {
  Eigen::MatrixXd R;
  Eigen::MatrixXd X;
  SensitivityConvention convention = SensitivityConvention::kMagnitude;
};

SensitivityMatrices build_sensitivity(
    const Network& net,
    SensitivityConvention convention = SensitivityConvention::kMagnitude);

/// True when the Cholesky factorization of m succeeds with strictly positive pivots.
bool is_positive_definite(const Eigen::MatrixXd& m);

}  // namespace gridvolt
