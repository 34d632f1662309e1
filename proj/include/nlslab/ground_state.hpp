#pragma once

// Positive radial ground state of -Laplacian Q + Q = Q^(1+4/d) in R^d,
// i.e. the radial ODE
//
//     Q'' + (d-1)/r Q' - Q + Q^(1+4/d) = 0,   Q'(0) = 0,   Q(r) -> 0,
//
// computed by shooting on Q(0). Too small a start turns back up (Q' > 0),
// too large a start crosses zero; bisection between the two classes converges
// to the zero-node solution. Once the two bracketing trajectories separate the
// table is continued with the decaying solution of the linearized equation
// -Q'' - (d-1)/r Q' + Q = 0, which is r^(1-d/2) K_{d/2-1}(r).

#include "nlslab/error.hpp"

#include <boost/numeric/odeint.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace nlslab {

struct RadialSample {
  double r = 0.0;
  double q = 0.0;
  double dq = 0.0;
};

/// |f(r)| <= scale * exp(-rate * r) on the tabulated range.
struct DecayBound {
  double scale = 0.0;
  double rate = 0.0;
};

struct GroundState {
  int dimension = 1;
  double initial_height = 0.0;
  std::vector<RadialSample> table;
  double l2_norm = 0.0;
  double grad_l2_norm = 0.0;
  DecayBound value_decay;
  DecayBound gradient_decay;
  /// Radius up to which the table comes from the nonlinear shooting.
  double shooting_radius = 0.0;
  /// Width of the final Q(0) bracket.
  double bracket_width = 0.0;

  double r_max() const { return table.back().r; }
  double nonlinear_power() const { return 4.0 / dimension; }
};

struct GroundStateOptions {
  /// Table spacing inside the shooting range.
  double core_spacing = 2e-3;
  /// Table spacing on the linear tail.
  double tail_spacing = 2e-2;
  double ode_rel_tol = 1e-13;
  double ode_abs_tol = 1e-15;
  /// Bracketing trajectories may differ by this relative amount before the
  /// tail takes over.
  double separation_tol = 1e-6;
  double bracket_low = 0.1;
  double bracket_high = 20.0;
  double radius_limit = 50.0;
  double tail_floor = 1e-14;
};

/// Area of the unit sphere S^{d-1}.
inline double unit_sphere_area(int d) {
  switch (d) {
  case 1: return 2.0;
  case 2: return 2.0 * std::numbers::pi;
  case 3: return 4.0 * std::numbers::pi;
  }
  fail(ErrorKind::invalid_argument, "dimension must be 1, 2 or 3");
}

namespace detail {

/// Decaying radial solution of the linearized equation and its derivative.
inline std::array<double, 2> linear_tail(int d, double r) {
  switch (d) {
  case 1: {
    const double e = std::exp(-r);
    return {e, -e};
  }
  case 2:
    return {std::cyl_bessel_k(0.0, r), -std::cyl_bessel_k(1.0, r)};
  default: {
    const double e = std::exp(-r);
    return {e / r, -e * (1.0 / r + 1.0 / (r * r))};
  }
  }
}

enum class ShotOutcome { undershoot = -1, unresolved = 0, overshoot = 1 };

struct Shot {
  ShotOutcome outcome = ShotOutcome::unresolved;
  std::vector<RadialSample> trace; // on the uniform core grid, up to the stop
};

/// Integrates outward from Q(0) = height until the trajectory classifies
/// itself, sampling (Q, Q') on the grid r = j * spacing.
inline Shot shoot(int d, double height, const GroundStateOptions &opt) {
  using State = std::array<double, 2>;
  const double p = 1.0 + 4.0 / d;
  auto rhs = [d, p](const State &y, State &dy, double r) {
    const double q = y[0];
    dy[0] = y[1];
    dy[1] = -(d - 1) / r * y[1] + q - std::pow(std::abs(q), p - 1.0) * q;
  };

  // Taylor start away from the r = 0 singularity.
  const double b = (height - std::pow(height, p)) / (2.0 * d);
  const double c = b * (1.0 - p * std::pow(height, p - 1.0)) / (4.0 * (d + 2));
  const double r0 = 1e-3;
  State y{height + b * r0 * r0 + c * std::pow(r0, 4),
          2.0 * b * r0 + 4.0 * c * std::pow(r0, 3)};

  Shot shot;
  shot.trace.push_back({0.0, height, 0.0});
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_dense_output(
      opt.ode_abs_tol, opt.ode_rel_tol, ode::runge_kutta_dopri5<State>());
  stepper.initialize(y, r0, 1e-4);
  std::size_t next = 1;
  while (true) {
    const auto [r_lo, r_hi] = stepper.do_step(rhs);
    while (next * opt.core_spacing <= r_hi) {
      const double r = next * opt.core_spacing;
      State s;
      if (r < r0) { // inside the Taylor region
        s = {height + b * r * r + c * std::pow(r, 4),
             2.0 * b * r + 4.0 * c * std::pow(r, 3)};
      } else {
        stepper.calc_state(r, s);
      }
      shot.trace.push_back({r, s[0], s[1]});
      ++next;
    }
    const State &cur = stepper.current_state();
    if (cur[0] < 0.0) {
      shot.outcome = ShotOutcome::overshoot;
      return shot;
    }
    if (cur[1] > 0.0) {
      shot.outcome = ShotOutcome::undershoot;
      return shot;
    }
    if (r_hi >= opt.radius_limit)
      return shot;
    (void)r_lo;
  }
}

/// Cubic Hermite interpolation of (q, dq) between two table samples.
inline std::array<double, 2> hermite(const RadialSample &a,
                                     const RadialSample &b, double r) {
  const double h = b.r - a.r;
  const double s = (r - a.r) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double q = h00 * a.q + h10 * h * a.dq + h01 * b.q + h11 * h * b.dq;
  const double g00 = (6 * s2 - 6 * s) / h, g10 = 3 * s2 - 4 * s + 1;
  const double g01 = (-6 * s2 + 6 * s) / h, g11 = 3 * s2 - 2 * s;
  const double dq = g00 * a.q + g10 * a.dq + g01 * b.q + g11 * b.dq;
  return {q, dq};
}

inline std::size_t interval_index(const std::vector<RadialSample> &table,
                                  double r) {
  auto it = std::upper_bound(
      table.begin(), table.end(), r,
      [](double x, const RadialSample &s) { return x < s.r; });
  std::size_t i = static_cast<std::size_t>(it - table.begin());
  i = std::clamp<std::size_t>(i, 1, table.size() - 1);
  return i - 1;
}

/// Least-squares slope of log(|f| r^((d-1)/2)) over the last decade of |f|,
/// clamped to the linear rate 1; the scale makes the bound hold on the table.
inline DecayBound fit_decay(const std::vector<RadialSample> &table, int d,
                            bool use_derivative) {
  auto value = [&](const RadialSample &s) {
    return std::abs(use_derivative ? s.dq : s.q);
  };
  const double last = value(table.back());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto &s : table) {
    const double v = value(s);
    if (s.r <= 0.0 || v <= 0.0 || v > 10.0 * last)
      continue;
    const double y = std::log(v) + 0.5 * (d - 1) * std::log(s.r);
    sx += s.r;
    sy += y;
    sxx += s.r * s.r;
    sxy += s.r * y;
    ++n;
  }
  require(n >= 2, ErrorKind::numerical, "decay fit needs at least two samples");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  DecayBound bound;
  bound.rate = std::min(-slope, 1.0);
  double scale = 0.0;
  for (const auto &s : table)
    scale = std::max(scale, value(s) * std::exp(bound.rate * s.r));
  bound.scale = scale * (1.0 + 1e-10);
  return bound;
}

} // namespace detail

inline double evaluate_Q(const GroundState &gs, double r) {
  require(r >= 0.0, ErrorKind::invalid_argument, "radius must be nonnegative");
  const auto &t = gs.table;
  if (r >= gs.r_max()) {
    const auto tail = detail::linear_tail(gs.dimension, r)[0];
    const auto ref = detail::linear_tail(gs.dimension, gs.r_max())[0];
    return t.back().q * (tail / ref);
  }
  const std::size_t i = detail::interval_index(t, r);
  const double q = detail::hermite(t[i], t[i + 1], r)[0];
  return std::clamp(q, std::min(t[i].q, t[i + 1].q),
                    std::max(t[i].q, t[i + 1].q));
}

inline double evaluate_Q_gradient(const GroundState &gs, double r) {
  require(r >= 0.0, ErrorKind::invalid_argument, "radius must be nonnegative");
  const auto &t = gs.table;
  if (r >= gs.r_max()) {
    const auto tail = detail::linear_tail(gs.dimension, r)[1];
    const auto ref = detail::linear_tail(gs.dimension, gs.r_max())[0];
    return t.back().q * (tail / ref);
  }
  const std::size_t i = detail::interval_index(t, r);
  return std::min(0.0, detail::hermite(t[i], t[i + 1], r)[1]);
}

/// Q'' from the ODE itself; at r = 0 the limit (Q0 - Q0^p)/d.
inline double evaluate_Q_second(const GroundState &gs, double r) {
  const int d = gs.dimension;
  const double p = 1.0 + 4.0 / d;
  if (r <= 0.0)
    return (gs.initial_height - std::pow(gs.initial_height, p)) / d;
  const double q = evaluate_Q(gs, r);
  return q - std::pow(q, p) - (d - 1) / r * evaluate_Q_gradient(gs, r);
}

/// Residual Q'' + (d-1)/r Q' - Q + Q^p with Q'' taken from a fourth-order
/// central difference of the tabulated Q'.
inline double ode_residual(const GroundState &gs, std::size_t i) {
  const auto &t = gs.table;
  require(i >= 2 && i + 2 < t.size(), ErrorKind::invalid_argument,
          "residual needs two neighbours on each side");
  const double h = t[i + 1].r - t[i].r;
  const double hm = t[i].r - t[i - 1].r;
  const int d = gs.dimension;
  const double p = 1.0 + 4.0 / d;
  double qpp;
  if (std::abs(h - hm) < 1e-12 * h && std::abs((t[i + 2].r - t[i + 1].r) - h) < 1e-12 * h &&
      std::abs((t[i - 1].r - t[i - 2].r) - h) < 1e-12 * h) {
    qpp = (-t[i + 2].dq + 8 * t[i + 1].dq - 8 * t[i - 1].dq + t[i - 2].dq) /
          (12 * h);
  } else {
    qpp = evaluate_Q_second(gs, t[i].r);
  }
  return qpp + (d - 1) / t[i].r * t[i].dq - t[i].q + std::pow(t[i].q, p);
}

/// Radial quadrature S_{d-1} int f(r) r^{d-1} dr with 4-point Gauss-Legendre
/// on every table interval of the Hermite interpolant.
template <class Integrand>
double radial_integral(const GroundState &gs, Integrand &&f) {
  static constexpr std::array<double, 4> x{-0.8611363115940526,
                                           -0.3399810435848563,
                                           0.3399810435848563,
                                           0.8611363115940526};
  static constexpr std::array<double, 4> w{0.3478548451374538,
                                           0.6521451548625461,
                                           0.6521451548625461,
                                           0.3478548451374538};
  const int d = gs.dimension;
  double total = 0.0;
  const auto &t = gs.table;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double a = t[i].r, b = t[i + 1].r;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int k = 0; k < 4; ++k) {
      const double r = mid + half * x[k];
      const auto v = detail::hermite(t[i], t[i + 1], r);
      total += w[k] * half * f(v[0], v[1]) * std::pow(r, d - 1);
    }
  }
  return unit_sphere_area(d) * total;
}

inline GroundState solve_ground_state(int d, double tol,
                                      const GroundStateOptions &opt = {}) {
  require(d >= 1 && d <= 3, ErrorKind::invalid_argument,
          "ground state dimension must be 1, 2 or 3");
  require(tol >= 1e-12 && tol <= 1e-4, ErrorKind::invalid_argument,
          "ground state tolerance must lie in [1e-12, 1e-4]");
  using detail::ShotOutcome;

  double lo = opt.bracket_low, hi = opt.bracket_high;
  auto shot_lo = detail::shoot(d, lo, opt);
  auto shot_hi = detail::shoot(d, hi, opt);
  require(shot_lo.outcome == ShotOutcome::undershoot &&
              shot_hi.outcome == ShotOutcome::overshoot,
          ErrorKind::numerical, "no ground state bracket");

  // Narrow to floating-point resolution: the tolerance is an upper bound on
  // the bracket, and every extra bit extends the usable shooting range.
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi)
      break;
    auto shot = detail::shoot(d, mid, opt);
    if (shot.outcome == ShotOutcome::overshoot) {
      hi = mid;
      shot_hi = std::move(shot);
    } else {
      // An unresolved shot ran to the radius limit without turning; treat
      // it as the lower side so the bracket keeps a certified overshoot.
      lo = mid;
      shot_lo = std::move(shot);
    }
  }
  require(hi - lo <= tol, ErrorKind::numerical,
          "ground state bracket did not reach the tolerance");

  const double height = 0.5 * (lo + hi);
  auto main = detail::shoot(d, height, opt);

  // Shooting range: the bracketing trajectories still agree and the main
  // trajectory is positive and decreasing.
  const std::size_t common = std::min(
      {shot_lo.trace.size(), shot_hi.trace.size(), main.trace.size()});
  std::size_t cut = 1;
  for (std::size_t i = 1; i < common; ++i) {
    const auto &m = main.trace[i];
    const double sep = std::abs(shot_hi.trace[i].q - shot_lo.trace[i].q);
    if (m.q <= 0.0 || m.dq >= 0.0 || sep > opt.separation_tol * m.q)
      break;
    cut = i;
  }
  require(cut >= 100, ErrorKind::numerical,
          "ground state shooting range is too short");

  GroundState gs;
  gs.dimension = d;
  gs.initial_height = height;
  gs.bracket_width = hi - lo;
  gs.table.assign(main.trace.begin(), main.trace.begin() + cut + 1);
  gs.shooting_radius = gs.table.back().r;

  const double rs = gs.shooting_radius;
  const double anchor = gs.table.back().q / detail::linear_tail(d, rs)[0];
  for (int j = 1;; ++j) {
    const double r = rs + j * opt.tail_spacing;
    if (r > opt.radius_limit)
      break;
    const auto tail = detail::linear_tail(d, r);
    gs.table.push_back({r, anchor * tail[0], anchor * tail[1]});
    if (anchor * tail[0] < opt.tail_floor)
      break;
  }

  gs.l2_norm = std::sqrt(
      radial_integral(gs, [](double q, double) { return q * q; }));
  gs.grad_l2_norm = std::sqrt(
      radial_integral(gs, [](double, double dq) { return dq * dq; }));
  gs.value_decay = detail::fit_decay(gs.table, d, false);
  gs.gradient_decay = detail::fit_decay(gs.table, d, true);
  return gs;
}

inline nlohmann::json to_json(const GroundState &gs) {
  nlohmann::json j;
  j["d"] = gs.dimension;
  j["Q0"] = gs.initial_height;
  j["norms"] = {{"l2", gs.l2_norm}, {"grad_l2", gs.grad_l2_norm}};
  j["decay"] = {{"C0", gs.value_decay.scale},
                {"D0", gs.value_decay.rate},
                {"C1", gs.gradient_decay.scale},
                {"D1", gs.gradient_decay.rate}};
  j["shooting_radius"] = gs.shooting_radius;
  j["bracket_width"] = gs.bracket_width;
  auto table = nlohmann::json::array();
  for (const auto &s : gs.table)
    table.push_back({s.r, s.q, s.dq});
  j["table"] = std::move(table);
  return j;
}

inline GroundState ground_state_from_json(const nlohmann::json &j) {
  try {
    GroundState gs;
    gs.dimension = j.at("d").get<int>();
    gs.initial_height = j.at("Q0").get<double>();
    gs.l2_norm = j.at("norms").at("l2").get<double>();
    gs.grad_l2_norm = j.at("norms").at("grad_l2").get<double>();
    gs.value_decay = {j.at("decay").at("C0").get<double>(),
                      j.at("decay").at("D0").get<double>()};
    gs.gradient_decay = {j.at("decay").at("C1").get<double>(),
                         j.at("decay").at("D1").get<double>()};
    gs.shooting_radius = j.value("shooting_radius", 0.0);
    gs.bracket_width = j.value("bracket_width", 0.0);
    for (const auto &row : j.at("table"))
      gs.table.push_back(
          {row.at(0).get<double>(), row.at(1).get<double>(),
           row.at(2).get<double>()});
    require(gs.table.size() >= 4, ErrorKind::io, "ground state table too short");
    return gs;
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::io, std::string("bad ground state JSON: ") + e.what());
  }
}

} // namespace nlslab
