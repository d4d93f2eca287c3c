#pragma once

#include "gridvolt/network.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace gridvolt {

/// Net injections at buses 1..N (index i-1 is bus i), p.u.
struct InjectionVector {
  Eigen::VectorXd p;
  Eigen::VectorXd q;

  static InjectionVector zeros(int n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  }
  /// Base injections of every non-feeder bus in `net`.
  static InjectionVector base(const Network& net);
};

/// Voltage magnitudes at buses 1..N, p.u.; the feeder is fixed at 1.
struct VoltageVector {
  Eigen::VectorXd v;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 100;
};

enum class PowerFlowModel { kLinear, kNonlinear };

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sweep did not settle within max_iter; carries the residual trail.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int iterations, std::vector<double> residuals)
      : std::runtime_error(what), iterations_(iterations), residuals_(std::move(residuals)) {}
  int iterations() const { return iterations_; }
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  int iterations_;
  std::vector<double> residuals_;
};

/// v = R p + X q + 1 (or its square root under the squared convention).
VoltageVector solve_lindistflow(const SensitivityMatrices& s, const InjectionVector& inj);

struct DistFlowSolution {
  VoltageVector voltage;
  /// Sending-end branch flows indexed like Network::lines(), p.u.
  Eigen::VectorXd p_flow;
  Eigen::VectorXd q_flow;
  int iterations = 0;
  /// Max voltage change per sweep, one entry per iteration.
  std::vector<double> residuals;
};

/// Forward-backward sweep on the DistFlow branch equations:
///   P_e = p_load(j) + sum_children P_c + r_e l_e,  l_e = (P_e^2 + Q_e^2) / v_parent^2
///   v_j^2 = v_parent^2 - 2 (r_e P_e + x_e Q_e) + (r_e^2 + x_e^2) l_e
/// Throws ConvergenceError when max_iter sweeps do not reach tol, or when the
/// squared voltage turns non-positive (injections beyond the solvable regime).
DistFlowSolution solve_distflow(const Network& net, const InjectionVector& inj,
                                const SolverOptions& opts = {});

VoltageVector solve_distflow_nonlinear(const Network& net, const InjectionVector& inj,
                                       const SolverOptions& opts = {});

struct SlackPower {
  double p0 = 0.0;
  double q0 = 0.0;
};

/// Feeder injection that balances the network: total consumption plus losses.
/// Under the linear model losses vanish and p0 = -sum(p).
SlackPower slack_power(const Network& net, const InjectionVector& inj, const VoltageVector& v,
                       PowerFlowModel model);

}  // namespace gridvolt
