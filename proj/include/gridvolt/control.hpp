#pragma once

#include <stdexcept>

namespace gridvolt {

/// Gains and saturation limits of one controllable bus (p.u. throughout).
struct DroopParams {
  double k_p = 0.0;
  double k_q = 0.0;
  double p_lo = 0.0;
  double p_hi = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
  double alpha0 = 0.05;
  double alpha_max = 1.0;
  double gamma = 0.5;
  /// Use S <- p_ref - u_p instead of the cumulative backlog.
  bool literal_backlog = false;

  void validate() const;
};

struct ControllerState {
  double S = 0.0;  // unserved injection backlog, p.u. * steps
  double alpha = 0.05;
  double q_prev = 0.0;
  double p_out = 0.0;

  static ControllerState initial(const DroopParams& pr, double p_out, double q_out);
};

/// max(min(a, hi), lo). Throws std::invalid_argument when lo > hi.
double clamp(double a, double lo, double hi);

struct ActiveUpdate {
  double u_p;
  ControllerState state;
};

/// u_p = clamp(p_ref - k_p (v - 1) + alpha S, p_lo, p_hi), then
/// S <- S + (p_ref - u_p).
ActiveUpdate active_droop_update(const ControllerState& st, const DroopParams& pr, double v,
                                 double p_ref);

struct ReactiveUpdate {
  double u_q;
  ControllerState state;
};

/// u_q = clamp(q_prev - k_q (v - 1), q_lo, q_hi).
ReactiveUpdate reactive_droop_update(const ControllerState& st, const DroopParams& pr,
                                     double v);

/// alpha = min(alpha_max, alpha0 + gamma |S|).
double adapt_alpha(const ControllerState& st, const DroopParams& pr);

}  // namespace gridvolt
