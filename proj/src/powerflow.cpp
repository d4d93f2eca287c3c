#include "gridvolt/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gridvolt {

namespace {

void check_dims(int n, const InjectionVector& inj) {
  if (inj.p.size() != n || inj.q.size() != n) {
    throw DimensionError("injection vector length " + std::to_string(inj.p.size()) + "/" +
                         std::to_string(inj.q.size()) + " does not match " +
                         std::to_string(n) + " buses");
  }
}

// One backward pass: sending-end flows from loads plus losses at the given
// voltages. `p_flow`/`q_flow` hold the previous estimate on entry, used for
// the loss term.
void backward_pass(const Network& net, const InjectionVector& inj, const Eigen::VectorXd& vsq,
                   Eigen::VectorXd& p_flow, Eigen::VectorXd& q_flow) {
  const auto& order = net.root_first_order();
  Eigen::VectorXd p_next = Eigen::VectorXd::Zero(p_flow.size());
  Eigen::VectorXd q_next = Eigen::VectorXd::Zero(q_flow.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int j = *it;
    if (j == 0) continue;
    const int e = net.parent_line(j);
    const Line& l = net.lines()[static_cast<size_t>(e)];
    double p_recv = -inj.p(j - 1);
    double q_recv = -inj.q(j - 1);
    for (int c : net.children(j)) {
      p_recv += p_next(net.parent_line(c));
      q_recv += q_next(net.parent_line(c));
    }
    const double parent_vsq = vsq(net.parent(j));
    const double loss = (p_flow(e) * p_flow(e) + q_flow(e) * q_flow(e)) / parent_vsq;
    p_next(e) = p_recv + l.r * loss;
    q_next(e) = q_recv + l.x * loss;
  }
  p_flow = std::move(p_next);
  q_flow = std::move(q_next);
}

}  // namespace

InjectionVector InjectionVector::base(const Network& net) {
  InjectionVector inj = zeros(net.size());
  for (int i = 1; i <= net.size(); ++i) {
    inj.p(i - 1) = net.bus(i).p_base;
    inj.q(i - 1) = net.bus(i).q_base;
  }
  return inj;
}

VoltageVector solve_lindistflow(const SensitivityMatrices& s, const InjectionVector& inj) {
  const auto n = static_cast<int>(s.R.rows());
  check_dims(n, inj);
  Eigen::VectorXd rhs = s.R * inj.p + s.X * inj.q + Eigen::VectorXd::Ones(n);
  if (s.convention == SensitivityConvention::kSquared) {
    rhs = rhs.cwiseMax(0.0).cwiseSqrt();
  }
  return {std::move(rhs)};
}

DistFlowSolution solve_distflow(const Network& net, const InjectionVector& inj,
                                const SolverOptions& opts) {
  const int n = net.size();
  check_dims(n, inj);
  if (!(opts.tol > 0.0) || opts.max_iter < 1) {
    throw std::invalid_argument("solver options require tol > 0 and max_iter >= 1");
  }
  const auto& order = net.root_first_order();

  // Squared magnitudes indexed by bus id (feeder included).
  Eigen::VectorXd vsq = Eigen::VectorXd::Ones(n + 1);
  DistFlowSolution sol;
  sol.p_flow = Eigen::VectorXd::Zero(n);
  sol.q_flow = Eigen::VectorXd::Zero(n);

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    backward_pass(net, inj, vsq, sol.p_flow, sol.q_flow);

    double residual = 0.0;
    Eigen::VectorXd next = vsq;
    for (size_t a = 1; a < order.size(); ++a) {
      const int j = order[a];
      const int e = net.parent_line(j);
      const Line& l = net.lines()[static_cast<size_t>(e)];
      const double up = next(net.parent(j));
      const double pf = sol.p_flow(e);
      const double qf = sol.q_flow(e);
      const double loss = (pf * pf + qf * qf) / up;
      const double value = up - 2.0 * (l.r * pf + l.x * qf) + (l.r * l.r + l.x * l.x) * loss;
      if (!(value > 0.0) || !std::isfinite(value)) {
        throw ConvergenceError("voltage collapse at bus " + std::to_string(j) +
                                   " (injections beyond solvable regime)",
                               iter, sol.residuals);
      }
      next(j) = value;
      residual = std::max(residual, std::abs(std::sqrt(value) - std::sqrt(vsq(j))));
    }
    vsq = std::move(next);
    sol.residuals.push_back(residual);
    sol.iterations = iter;
    if (residual < opts.tol) {
      sol.voltage.v = vsq.tail(n).cwiseSqrt();
      // Flows consistent with the final voltages.
      backward_pass(net, inj, vsq, sol.p_flow, sol.q_flow);
      return sol;
    }
  }
  throw ConvergenceError("forward-backward sweep did not converge in " +
                             std::to_string(opts.max_iter) + " iterations (residual " +
                             std::to_string(sol.residuals.back()) + ")",
                         sol.iterations, sol.residuals);
}

VoltageVector solve_distflow_nonlinear(const Network& net, const InjectionVector& inj,
                                       const SolverOptions& opts) {
  return solve_distflow(net, inj, opts).voltage;
}

SlackPower slack_power(const Network& net, const InjectionVector& inj, const VoltageVector& v,
                       PowerFlowModel model) {
  const int n = net.size();
  check_dims(n, inj);
  if (model == PowerFlowModel::kLinear) return {-inj.p.sum(), -inj.q.sum()};
  if (v.v.size() != n) throw DimensionError("voltage vector length mismatch");

  Eigen::VectorXd vsq(n + 1);
  vsq(0) = 1.0;
  vsq.tail(n) = v.v.cwiseProduct(v.v);
  Eigen::VectorXd p_flow = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_flow = Eigen::VectorXd::Zero(n);
  // Losses depend on the flows they add to; iterate the backward pass at
  // fixed voltages until the flows stop moving.
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd prev = p_flow;
    backward_pass(net, inj, vsq, p_flow, q_flow);
    if ((p_flow - prev).cwiseAbs().maxCoeff() < 1e-15) break;
  }
  SlackPower s;
  for (int c : net.children(0)) {
    s.p0 += p_flow(net.parent_line(c));
    s.q0 += q_flow(net.parent_line(c));
  }
  return s;
}

}  // namespace gridvolt
