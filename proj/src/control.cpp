#include "gridvolt/control.hpp"

#include <algorithm>
#include <cmath>

namespace gridvolt {

void DroopParams::validate() const {
  if (!(k_p >= 0.0) || !(k_q >= 0.0)) throw std::invalid_argument("droop gains must be >= 0");
  if (!(p_lo <= p_hi)) throw std::invalid_argument("p_lo must not exceed p_hi");
  if (!(q_lo <= q_hi)) throw std::invalid_argument("q_lo must not exceed q_hi");
  if (!(alpha0 >= 0.0 && alpha0 <= alpha_max)) {
    throw std::invalid_argument("need 0 <= alpha0 <= alpha_max");
  }
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
}

ControllerState ControllerState::initial(const DroopParams& pr, double p_out, double q_out) {
  ControllerState st;
  st.alpha = pr.alpha0;
  st.p_out = p_out;
  st.q_prev = clamp(q_out, pr.q_lo, pr.q_hi);
  return st;
}

double clamp(double a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp requires lo <= hi");
  return std::max(std::min(a, hi), lo);
}

ActiveUpdate active_droop_update(const ControllerState& st, const DroopParams& pr, double v,
                                 double p_ref) {
  ActiveUpdate out{0.0, st};
  out.u_p = clamp(p_ref - pr.k_p * (v - 1.0) + st.alpha * st.S, pr.p_lo, pr.p_hi);
  out.state.S = pr.literal_backlog ? p_ref - out.u_p : st.S + (p_ref - out.u_p);
  out.state.p_out = out.u_p;
  return out;
}

ReactiveUpdate reactive_droop_update(const ControllerState& st, const DroopParams& pr,
                                     double v) {
  ReactiveUpdate out{0.0, st};
  out.u_q = clamp(st.q_prev - pr.k_q * (v - 1.0), pr.q_lo, pr.q_hi);
  out.state.q_prev = out.u_q;
  return out;
}

double adapt_alpha(const ControllerState& st, const DroopParams& pr) {
  return std::min(pr.alpha_max, pr.alpha0 + pr.gamma * std::abs(st.S));
}

}  // namespace gridvolt
