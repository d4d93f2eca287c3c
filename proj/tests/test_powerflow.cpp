#include "gridvolt/powerflow.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gridvolt;

namespace {

// Scalar DistFlow on one line with the feeder at 1 p.u.: the squared current
// l solves l = (p + r l)^2 + (q + x l)^2 (load p, q > 0). Bisection on the
// low-current root, then v^2 = 1 - 2(rP + xQ) + (r^2 + x^2) l.
double two_bus_oracle(double r, double x, double p_load, double q_load, double* p_send) {
  auto f = [&](double l) {
    const double P = p_load + r * l;
    const double Q = q_load + x * l;
    return P * P + Q * Q - l;
  };
  double lo = 0.0, hi = 1.0;  // f(0) > 0, f(1) < 0 for the loads used below
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  const double l = 0.5 * (lo + hi);
  const double P = p_load + r * l;
  const double Q = q_load + x * l;
  if (p_send) *p_send = P;
  return std::sqrt(1.0 - 2.0 * (r * P + x * Q) + (r * r + x * x) * l);
}

InjectionVector single(double p, double q) {
  InjectionVector inj = InjectionVector::zeros(1);
  inj.p(0) = p;
  inj.q(0) = q;
  return inj;
}

}  // namespace

TEST_CASE("zero injections give a flat profile") {
  for (const char* f : {"six_bus.net", "feeder123.net"}) {
    const Network net = load_network_file(data_path(f));
    const InjectionVector zero = InjectionVector::zeros(net.size());
    const VoltageVector lin = solve_lindistflow(build_sensitivity(net), zero);
    CHECK((lin.v.array() == 1.0).all());
    const VoltageVector nl = solve_distflow_nonlinear(net, zero);
    CHECK((nl.v.array() - 1.0).abs().maxCoeff() <= 1e-9);
    const SlackPower s = slack_power(net, zero, nl, PowerFlowModel::kNonlinear);
    CHECK(s.p0 == doctest::Approx(0.0));
    CHECK(s.q0 == doctest::Approx(0.0));
  }
}

TEST_CASE("two-bus linear solution") {
  const Network net = make_network({{0, 1, 0.02, 0.01}});
  const InjectionVector inj = single(-0.5, 0.0);
  const VoltageVector v = solve_lindistflow(build_sensitivity(net), inj);
  CHECK(v.v(0) == doctest::Approx(0.99).epsilon(1e-14));
  const SlackPower s = slack_power(net, inj, v, PowerFlowModel::kLinear);
  CHECK(s.p0 == doctest::Approx(0.5));
  CHECK(s.q0 == doctest::Approx(0.0));
}

TEST_CASE("two-bus nonlinear solution matches the scalar oracle") {
  const Network net = make_network({{0, 1, 0.02, 0.01}});
  const InjectionVector inj = single(-0.5, 0.0);
  double p_send = 0.0;
  const double v_ref = two_bus_oracle(0.02, 0.01, 0.5, 0.0, &p_send);
  const DistFlowSolution sol = solve_distflow(net, inj);
  CHECK(std::abs(sol.voltage.v(0) - v_ref) < 1e-9);
  CHECK(sol.voltage.v(0) >= 0.9890);
  CHECK(sol.voltage.v(0) < 0.99);
  const SlackPower s = slack_power(net, inj, sol.voltage, PowerFlowModel::kNonlinear);
  CHECK(std::abs(s.p0 - p_send) < 1e-9);
  CHECK(s.p0 > 0.5);
  CHECK(s.q0 > 0.0);
}

TEST_CASE("two-bus oracle with reactive load") {
  const Network net = make_network({{0, 1, 0.03, 0.05}});
  const double v_ref = two_bus_oracle(0.03, 0.05, 0.4, 0.2, nullptr);
  CHECK(std::abs(solve_distflow_nonlinear(net, single(-0.4, -0.2)).v(0) - v_ref) < 1e-9);
}

TEST_CASE("linear model is superposable") {
  const Network net = load_network_file(data_path("six_bus.net"));
  const SensitivityMatrices s = build_sensitivity(net);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  InjectionVector a = InjectionVector::zeros(net.size());
  InjectionVector b = a;
  for (int i = 0; i < net.size(); ++i) {
    a.p(i) = u(rng);
    b.p(i) = u(rng);
  }
  InjectionVector ab = a;
  ab.p += b.p;
  const Eigen::VectorXd lhs = solve_lindistflow(s, ab).v.array() - 1.0;
  const Eigen::VectorXd rhs =
      (solve_lindistflow(s, a).v.array() - 1.0) + (solve_lindistflow(s, b).v.array() - 1.0);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("squared convention takes the square root") {
  const Network net = make_network({{0, 1, 0.02, 0.01}});
  const auto s = build_sensitivity(net, SensitivityConvention::kSquared);
  const VoltageVector v = solve_lindistflow(s, single(-0.5, 0.0));
  CHECK(v.v(0) == doctest::Approx(std::sqrt(1.0 - 0.02)).epsilon(1e-14));
}

TEST_CASE("dimension mismatch is rejected") {
  const Network net = load_network_file(data_path("six_bus.net"));
  const InjectionVector bad = InjectionVector::zeros(3);
  CHECK_THROWS_AS(solve_lindistflow(build_sensitivity(net), bad), DimensionError);
  CHECK_THROWS_AS(solve_distflow(net, bad), DimensionError);
}

TEST_CASE("converged sweep satisfies the branch equations") {
  const Network net = load_network_file(data_path("feeder123.net"));
  const InjectionVector inj = InjectionVector::base(net);
  const DistFlowSolution sol = solve_distflow(net, inj);
  const Eigen::VectorXd& v = sol.voltage.v;
  auto volt = [&](int bus) { return bus == 0 ? 1.0 : v(bus - 1); };
  double worst = 0.0;
  for (int j = 1; j <= net.size(); ++j) {
    const int e = net.parent_line(j);
    const Line& l = net.lines()[static_cast<size_t>(e)];
    const double vp = volt(net.parent(j));
    const double P = sol.p_flow(e);
    const double Q = sol.q_flow(e);
    const double cur = (P * P + Q * Q) / (vp * vp);
    double p_down = -inj.p(j - 1);
    double q_down = -inj.q(j - 1);
    for (int c : net.children(j)) {
      p_down += sol.p_flow(net.parent_line(c));
      q_down += sol.q_flow(net.parent_line(c));
    }
    worst = std::max(worst, std::abs(P - p_down - l.r * cur));
    worst = std::max(worst, std::abs(Q - q_down - l.x * cur));
    const double v2 = vp * vp - 2.0 * (l.r * P + l.x * Q) + (l.r * l.r + l.x * l.x) * cur;
    worst = std::max(worst, std::abs(volt(j) * volt(j) - v2));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("linear and nonlinear agree at light load") {
  const Network net = load_network_file(data_path("six_bus.net"));
  const SensitivityMatrices s = build_sensitivity(net);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    InjectionVector inj = InjectionVector::zeros(net.size());
    for (int i = 0; i < net.size(); ++i) {
      inj.p(i) = u(rng);
      inj.q(i) = u(rng);
    }
    const VoltageVector lin = solve_lindistflow(s, inj);
    const VoltageVector nl = solve_distflow_nonlinear(net, inj);
    worst = std::max(worst, (lin.v - nl.v).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 5e-3);
}

TEST_CASE("losses are nonnegative for pure consumption") {
  const Network net = load_network_file(data_path("feeder123.net"));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (int draw = 0; draw < 20; ++draw) {
    InjectionVector inj = InjectionVector::zeros(net.size());
    for (int i = 0; i < net.size(); ++i) {
      inj.p(i) = -u(rng);
      inj.q(i) = -u(rng);
    }
    const VoltageVector nl = solve_distflow_nonlinear(net, inj);
    const SlackPower lossy = slack_power(net, inj, nl, PowerFlowModel::kNonlinear);
    const SlackPower lossless = slack_power(net, inj, nl, PowerFlowModel::kLinear);
    CHECK(lossless.p0 == doctest::Approx(-inj.p.sum()));
    CHECK(lossy.p0 >= lossless.p0);
  }
}

TEST_CASE("sweep residual does not grow after the first iteration at nominal load") {
  for (const char* f : {"six_bus.net", "feeder123.net"}) {
    const Network net = load_network_file(data_path(f));
    const DistFlowSolution sol = solve_distflow(net, InjectionVector::base(net));
    REQUIRE(sol.residuals.size() >= 2);
    for (size_t k = 2; k < sol.residuals.size(); ++k) {
      CHECK(sol.residuals[k] <= sol.residuals[k - 1] * (1.0 + 1e-12));
    }
    CHECK(sol.residuals.back() < 1e-8);
    CHECK(sol.iterations == static_cast<int>(sol.residuals.size()));
  }
}

TEST_CASE("overload surfaces a convergence error with diagnostics") {
  const Network net = make_network({{0, 1, 0.02, 0.01}});
  try {
    solve_distflow(net, single(-50.0, -10.0));
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() >= 1);
    CHECK_FALSE(e.residuals().empty());
  }
  SolverOptions tight;
  tight.max_iter = 1;
  CHECK_THROWS_AS(solve_distflow(load_network_file(data_path("feeder123.net")),
                                 InjectionVector::base(load_network_file(data_path("feeder123.net"))),
                                 tight),
                  ConvergenceError);
}

TEST_CASE("solvers are deterministic") {
  const Network net = load_network_file(data_path("feeder123.net"));
  const InjectionVector inj = InjectionVector::base(net);
  const VoltageVector a = solve_distflow_nonlinear(net, inj);
  const VoltageVector b = solve_distflow_nonlinear(net, inj);
  CHECK((a.v.array() == b.v.array()).all());
}
