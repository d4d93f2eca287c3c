#include "gridvolt/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gridvolt {

namespace {

std::string at_line(int lineno) { return "line " + std::to_string(lineno) + ": "; }

double parse_number(const std::string& token, int lineno) {
  double value = 0.0;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ParseError(at_line(lineno) + "malformed number '" + token + "'");
  }
  return value;
}

int parse_id(const std::string& token, int lineno) {
  int value = 0;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(at_line(lineno) + "malformed bus id '" + token + "'");
  }
  return value;
}

// Union-find over bus ids, used for the cycle check.
class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }
  size_t find(size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  bool unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[a] = b;
    return true;
  }

 private:
  std::vector<size_t> parent_;
};

}  // namespace

std::string_view to_string(BusRole role) {
  switch (role) {
    case BusRole::kFeeder: return "feeder";
    case BusRole::kPqLoad: return "pq";
    case BusRole::kInverter: return "inverter";
    case BusRole::kDataCenter: return "dc";
  }
  return "unknown";
}

BusRole parse_role(std::string_view token) {
  if (token == "feeder") return BusRole::kFeeder;
  if (token == "pq") return BusRole::kPqLoad;
  if (token == "inverter") return BusRole::kInverter;
  if (token == "dc") return BusRole::kDataCenter;
  throw ParseError("unknown bus role '" + std::string(token) + "'");
}

Network::Network(std::vector<Bus> buses, std::vector<Line> lines, double s_base_kva,
                 double v_base_kv)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      s_base_kva_(s_base_kva),
      v_base_kv_(v_base_kv) {
  if (!(s_base_kva_ > 0.0) || !(v_base_kv_ > 0.0) || !std::isfinite(s_base_kva_) ||
      !std::isfinite(v_base_kv_)) {
    throw ValidationError("bases must be positive and finite");
  }
  if (buses_.empty()) throw ValidationError("missing feeder");
  std::sort(buses_.begin(), buses_.end(),
            [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (size_t i = 0; i < buses_.size(); ++i) {
    const Bus& b = buses_[i];
    if (i > 0 && buses_[i - 1].id == b.id) {
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    }
    if (b.id != static_cast<int>(i)) {
      throw ValidationError("bus ids must be contiguous from 0; missing " +
                            std::to_string(i));
    }
    if ((b.role == BusRole::kFeeder) != (b.id == 0)) {
      throw ValidationError(b.id == 0 ? "missing feeder: bus 0 must have role feeder"
                                      : "bus " + std::to_string(b.id) +
                                            ": only bus 0 may be the feeder");
    }
    if (!std::isfinite(b.p_base) || !std::isfinite(b.q_base)) {
      throw ValidationError("bus " + std::to_string(b.id) + ": non-finite injection");
    }
    if (b.q_bounds) {
      if (b.role == BusRole::kPqLoad || b.role == BusRole::kFeeder) {
        throw ValidationError("bus " + std::to_string(b.id) +
                              ": reactive bounds only allowed on inverter/dc buses");
      }
      if (!(b.q_bounds->q_min <= b.q_bounds->q_max)) {
        throw ValidationError("bus " + std::to_string(b.id) + ": q_min > q_max");
      }
    }
  }

  const size_t n_bus = buses_.size();
  DisjointSets sets(n_bus);
  std::vector<std::vector<std::pair<int, int>>> adjacency(n_bus);  // (neighbour, line)
  for (size_t k = 0; k < lines_.size(); ++k) {
    const Line& l = lines_[k];
    const std::string tag = "line " + std::to_string(l.from) + "-" + std::to_string(l.to);
    if (l.from < 0 || l.to < 0 || l.from >= static_cast<int>(n_bus) ||
        l.to >= static_cast<int>(n_bus)) {
      throw ValidationError(tag + ": unknown bus");
    }
    if (l.from == l.to) throw ValidationError(tag + ": endpoints must differ");
    if (!(l.r > 0.0) || !(l.x > 0.0) || !std::isfinite(l.r) || !std::isfinite(l.x)) {
      throw ValidationError(tag + ": r and x must be positive and finite");
    }
    if (!sets.unite(static_cast<size_t>(l.from), static_cast<size_t>(l.to))) {
      throw ValidationError("not radial: " + tag + " closes a cycle");
    }
    adjacency[static_cast<size_t>(l.from)].emplace_back(l.to, static_cast<int>(k));
    adjacency[static_cast<size_t>(l.to)].emplace_back(l.from, static_cast<int>(k));
  }
  if (lines_.size() + 1 != n_bus) {
    throw ValidationError("not connected: " + std::to_string(n_bus) + " buses need " +
                          std::to_string(n_bus - 1) + " lines, got " +
                          std::to_string(lines_.size()));
  }

  // Orient the tree from the feeder (breadth first).
  parent_line_.assign(n_bus, -1);
  parent_.assign(n_bus, -1);
  children_.assign(n_bus, {});
  order_.clear();
  order_.reserve(n_bus);
  std::vector<bool> seen(n_bus, false);
  seen[0] = true;
  order_.push_back(0);
  for (size_t head = 0; head < order_.size(); ++head) {
    const int u = order_[head];
    for (auto [w, k] : adjacency[static_cast<size_t>(u)]) {
      if (seen[static_cast<size_t>(w)]) continue;
      seen[static_cast<size_t>(w)] = true;
      parent_[static_cast<size_t>(w)] = u;
      parent_line_[static_cast<size_t>(w)] = k;
      children_[static_cast<size_t>(u)].push_back(w);
      order_.push_back(w);
    }
  }
  if (order_.size() != n_bus) throw ValidationError("not connected");
}

Network Network::with_role(int bus_id, BusRole role,
                           std::optional<ReactiveBounds> bounds) const {
  if (bus_id <= 0 || bus_id > size()) {
    throw ValidationError("cannot re-assign role of bus " + std::to_string(bus_id));
  }
  std::vector<Bus> buses = buses_;
  buses[static_cast<size_t>(bus_id)].role = role;
  buses[static_cast<size_t>(bus_id)].q_bounds = bounds;
  return Network(std::move(buses), lines_, s_base_kva_, v_base_kv_);
}

Network load_network(std::string_view text) {
  struct RawBus {
    Bus bus;
    double p_kw, q_kvar;
    std::optional<std::pair<double, double>> q_kvar_bounds;
  };
  struct RawLine {
    int from, to;
    double r_ohm, x_ohm;
  };
  double s_base = Network::kDefaultSBaseKva;
  double v_base = Network::kDefaultVBaseKv;
  std::vector<RawBus> raw_buses;
  std::vector<RawLine> raw_lines;

  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    const std::string& kw = tok[0];
    if (kw == "BASE") {
      if (tok.size() != 3) throw ParseError(at_line(lineno) + "BASE expects 2 values");
      s_base = parse_number(tok[1], lineno);
      v_base = parse_number(tok[2], lineno);
    } else if (kw == "BUS") {
      if (tok.size() != 5 && tok.size() != 7) {
        throw ParseError(at_line(lineno) + "BUS expects 4 or 6 values");
      }
      RawBus rb;
      rb.bus.id = parse_id(tok[1], lineno);
      try {
        rb.bus.role = parse_role(tok[2]);
      } catch (const ParseError& e) {
        throw ParseError(at_line(lineno) + e.what());
      }
      rb.p_kw = parse_number(tok[3], lineno);
      rb.q_kvar = parse_number(tok[4], lineno);
      if (tok.size() == 7) {
        rb.q_kvar_bounds = std::pair{parse_number(tok[5], lineno),
                                     parse_number(tok[6], lineno)};
      }
      raw_buses.push_back(rb);
    } else if (kw == "LINE") {
      if (tok.size() != 5) throw ParseError(at_line(lineno) + "LINE expects 4 values");
      raw_lines.push_back({parse_id(tok[1], lineno), parse_id(tok[2], lineno),
                           parse_number(tok[3], lineno), parse_number(tok[4], lineno)});
    } else {
      throw ParseError(at_line(lineno) + "unknown record '" + kw + "'");
    }
  }
  if (!(s_base > 0.0) || !(v_base > 0.0)) {
    throw ValidationError("bases must be positive");
  }

  const double z_base = v_base * v_base * 1000.0 / s_base;
  std::vector<Bus> buses;
  buses.reserve(raw_buses.size());
  for (RawBus& rb : raw_buses) {
    rb.bus.p_base = rb.p_kw / s_base;
    rb.bus.q_base = rb.q_kvar / s_base;
    if (rb.q_kvar_bounds) {
      rb.bus.q_bounds = ReactiveBounds{rb.q_kvar_bounds->first / s_base,
                                       rb.q_kvar_bounds->second / s_base};
    }
    buses.push_back(rb.bus);
  }
  std::vector<Line> lines;
  lines.reserve(raw_lines.size());
  for (const RawLine& rl : raw_lines) {
    lines.push_back({rl.from, rl.to, rl.r_ohm / z_base, rl.x_ohm / z_base});
  }
  return Network(std::move(buses), std::move(lines), s_base, v_base);
}

Network load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_network(ss.str());
}

std::vector<std::vector<int>> root_paths(const Network& net) {
  const size_t n_bus = net.buses().size();
  std::vector<std::vector<int>> paths(n_bus);
  for (int bus : net.root_first_order()) {
    if (bus == 0) continue;
    const int parent = net.parent(bus);
    paths[static_cast<size_t>(bus)] = paths[static_cast<size_t>(parent)];
    paths[static_cast<size_t>(bus)].push_back(net.parent_line(bus));
  }
  return paths;
}

SensitivityMatrices build_sensitivity(const Network& net, SensitivityConvention convention) {
  const int n = net.size();
  const double scale = convention == SensitivityConvention::kSquared ? 2.0 : 1.0;
  SensitivityMatrices s;
  s.convention = convention;
  s.R = Eigen::MatrixXd::Zero(n, n);
  s.X = Eigen::MatrixXd::Zero(n, n);

  // Root-first walk: buses visited before j are never in j's subtree, so
  // path(j) ∩ path(k) = path(parent(j)) ∩ path(k) for all of them.
  const auto& order = net.root_first_order();
  for (size_t a = 1; a < order.size(); ++a) {
    const int j = order[a];
    const int p = net.parent(j);
    const Line& l = net.lines()[static_cast<size_t>(net.parent_line(j))];
    const int jj = j - 1;
    for (size_t b = 1; b < a; ++b) {
      const int k = order[b] - 1;
      const double rv = p == 0 ? 0.0 : s.R(p - 1, k);
      const double xv = p == 0 ? 0.0 : s.X(p - 1, k);
      s.R(jj, k) = s.R(k, jj) = rv;
      s.X(jj, k) = s.X(k, jj) = xv;
    }
    s.R(jj, jj) = (p == 0 ? 0.0 : s.R(p - 1, p - 1)) + scale * l.r;
    s.X(jj, jj) = (p == 0 ? 0.0 : s.X(p - 1, p - 1)) + scale * l.x;
  }
  if (!s.R.allFinite() || !s.X.allFinite()) {
    throw NumericError("sensitivity matrix has non-finite entries");
  }
  return s;
}

bool is_positive_definite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  return llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0;
}

}  // namespace gridvolt
