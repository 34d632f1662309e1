#pragma once

// Blow-up diagnostics: local masses, total mass, measure pairings and the
// gradient rate, on grid fields and on the constructed profile r + u.
//
// The glued profile part is integrated radially around each point, so the
// quantities stay exact long after the bubble width drops below the grid
// spacing. The remainder enters through grid quadrature of h - r terms.

#include "nlslab/error.hpp"
#include "nlslab/fit.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/profile.hpp"
#include "nlslab/remainder_solver.hpp"
#include "nlslab/spectral_domain.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace nlslab {

/// A continuous test function psi with a label for reports.
struct TestFunction {
  std::string name;
  std::function<double(const Point &)> fn;

  Field sample(const DomainSpec &dom) const {
    return Field::sample(dom, 0.0, [&](const Point &x) { return fn(x); });
  }
};

/// exp(-|x - c|^2 / (2 w^2)).
inline TestFunction gaussian_test_function(const Point &c, double width, std::string name) {
  require(width > 0, ErrorKind::invalid_argument, "test function width must be positive");
  return {std::move(name), [c, width](const Point &x) {
            return std::exp(-distance(x, c) * distance(x, c) / (2 * width * width));
          }};
}

inline TestFunction constant_test_function(double v, std::string name) {
  return {std::move(name), [v](const Point &) { return v; }};
}

namespace detail {

inline void require_ball_inside(const DomainSpec &dom, const Point &c, double R) {
  require(std::isfinite(R) && R > 0, ErrorKind::invalid_argument, "ball radius must be positive");
  for (int i = 0; i < dom.dimension; ++i)
    require(c[i] - R >= 0 && c[i] + R <= dom.side_lengths[i], ErrorKind::geometry,
            "ball exits the domain");
}

} // namespace detail

/// Grid quadrature of |h|^2 over the closed ball B(center, R). Returns the
/// squared L2 norm on the ball.
inline double local_mass(const Field &h, const Point &center, double R) {
  detail::require_ball_inside(h.domain, center, R);
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (distance(h.domain.point(i), center) <= R)
      s += std::norm(h.values[i]);
  return s * h.domain.cell_volume();
}

/// Grid mass outside every ball; completes local_mass to the total.
inline double mass_outside_balls(const Field &h, const std::vector<Point> &centers, double R) {
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Point x = h.domain.point(i);
    bool inside = false;
    for (const auto &c : centers)
      inside = inside || distance(x, c) <= R;
    if (!inside)
      s += std::norm(h.values[i]);
  }
  return s * h.domain.cell_volume();
}

/// |‖h‖ - sqrt(p) ‖Q‖| / (sqrt(p) ‖Q‖).
inline double total_mass_identity(const Field &h, int p, const GroundState &gs) {
  require(p >= 1, ErrorKind::invalid_argument, "point count must be positive");
  const double target = std::sqrt(double(p)) * gs.l2_norm;
  return std::abs(l2_norm(h) - target) / target;
}

/// C0 exp(-D0 rho / (lambda T)), the ground-state tail bound at t = 0.
inline double ground_state_tail_bound(const GroundState &gs, double rho, double lambda,
                                      double blow_time) {
  return gs.value_decay.scale * std::exp(-gs.value_decay.rate * rho / (lambda * blow_time));
}

/// int |h|^2 psi by grid quadrature.
inline double pairing(const Field &h, const Field &psi) {
  h.check_same_grid(psi);
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    s += std::norm(h.values[i]) * psi.values[i].real();
  return s * h.domain.cell_volume();
}

/// ‖Q‖^2 sum_k psi(x_k).
inline double pairing_limit(const Field &psi, const std::vector<Point> &points,
                            const GroundState &gs) {
  double s = 0;
  for (const auto &x : points) {
    // psi is only known on the grid; read it at the nearest node.
    std::size_t flat = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < psi.size(); ++i) {
      const double dist = distance(psi.domain.point(i), x);
      if (dist < best) {
        best = dist;
        flat = i;
      }
    }
    s += psi.values[flat].real();
  }
  return gs.l2_norm * gs.l2_norm * s;
}

inline double pairing_limit(const TestFunction &psi, const std::vector<Point> &points,
                            const GroundState &gs) {
  double s = 0;
  for (const auto &x : points)
    s += psi.fn(x);
  return gs.l2_norm * gs.l2_norm * s;
}

/// |int |h(t)|^2 psi - ‖Q‖^2 sum_k psi(x_k)| for each field of the series.
inline std::vector<double> measure_convergence(const std::vector<Field> &series,
                                               const Field &psi,
                                               const std::vector<Point> &points,
                                               const GroundState &gs) {
  const double limit = pairing_limit(psi, points, gs);
  std::vector<double> err;
  for (const auto &h : series)
    err.push_back(std::abs(pairing(h, psi) - limit));
  return err;
}

/// True when the last `window` entries decrease, allowing `allowed`
/// increases. Increases that stay below `floor` do not count.
inline bool monotone_trend(const std::vector<double> &err, std::size_t window = 10,
                           int allowed = 1, double floor = 0) {
  require(err.size() >= 2, ErrorKind::invalid_argument, "trend needs at least two samples");
  const std::size_t start = err.size() > window ? err.size() - window : 0;
  int violations = 0;
  for (std::size_t i = start + 1; i < err.size(); ++i)
    if (err[i] > err[i - 1] && err[i] > floor)
      ++violations;
  return violations <= allowed;
}

struct GradientRateFit {
  double slope = 0;
  double r2 = 0;
  double predicted = 0;
  std::size_t samples = 0;

  double relative_error() const { return std::abs(slope - predicted) / predicted; }
};

/// lambda / (sqrt(p) ‖grad Q‖).
inline double predicted_gradient_slope(double lambda, int p, const GroundState &gs) {
  return lambda / (std::sqrt(double(p)) * gs.grad_l2_norm);
}

/// Fits 1/‖grad h‖ = slope (T - t) through the origin.
inline GradientRateFit gradient_rate_fit(const std::vector<double> &tau,
                                         const std::vector<double> &grad_l2, double lambda,
                                         int p, const GroundState &gs) {
  require(tau.size() == grad_l2.size(), ErrorKind::shape_mismatch,
          "time and gradient series differ in length");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < tau.size(); ++i)
    if (tau[i] > 0 && std::isfinite(grad_l2[i]) && grad_l2[i] > 0) {
      x.push_back(tau[i]);
      y.push_back(1 / grad_l2[i]);
    }
  require(x.size() >= 5, ErrorKind::invalid_argument,
          "gradient rate fit needs at least 5 usable samples");
  const auto f = fit_through_origin(x, y);
  return {f.slope, f.r2, predicted_gradient_slope(lambda, p, gs), x.size()};
}

inline std::vector<double> gradient_series(const std::vector<Field> &series) {
  std::vector<double> g;
  for (const auto &h : series)
    g.push_back(std::sqrt(gradient_norm_sq(h)));
  return g;
}

namespace detail {

/// Directions on the unit sphere with weights summing to its area.
inline std::vector<std::pair<Point, double>> sphere_rule(int d) {
  std::vector<std::pair<Point, double>> out;
  const double pi = std::numbers::pi;
  if (d == 1) {
    out.push_back({{1, 0, 0}, 1.0});
    out.push_back({{-1, 0, 0}, 1.0});
  } else if (d == 2) {
    const int n = 64;
    for (int j = 0; j < n; ++j) {
      const double a = 2 * pi * j / n;
      out.push_back({{std::cos(a), std::sin(a), 0}, 2 * pi / n});
    }
  } else {
    const auto &g = gauss16();
    const int n = 32;
    for (int i = 0; i < 16; ++i) {
      const double c = g[0][i], s = std::sqrt(1 - c * c);
      for (int j = 0; j < n; ++j) {
        const double a = 2 * pi * j / n;
        out.push_back({{s * std::cos(a), s * std::sin(a), c}, g[1][i] * 2 * pi / n});
      }
    }
  }
  return out;
}

/// int_0^zmax f(z) dz with panels no wider than `panel` and breaks at `cuts`.
template <class F>
double panel_integral(double zmax, double panel, std::vector<double> cuts, F &&f) {
  const auto &g = gauss16();
  cuts.push_back(0);
  cuts.push_back(zmax);
  std::sort(cuts.begin(), cuts.end());
  double s = 0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = std::max(0.0, cuts[c]), b = std::min(zmax, cuts[c + 1]);
    if (!(b > a))
      continue;
    const int n = std::max(1, int(std::ceil((b - a) / panel)));
    const double h = (b - a) / n;
    for (int k = 0; k < n; ++k) {
      const double mid = a + (k + 0.5) * h;
      for (int i = 0; i < 16; ++i)
        s += 0.5 * h * g[1][i] * f(mid + 0.5 * h * g[0][i]);
    }
  }
  return s;
}

} // namespace detail

/// The glued profile r(t) integrated radially around each point. Every
/// quantity is a one-dimensional integral in z = |x - x_k| / (lambda tau).
class GluedProfileQuadrature {
public:
  /// Q is treated as zero beyond this many widths.
  static constexpr double z_cap = 60.0;

  GluedProfileQuadrature(const BubbleConfig &cfg, const GroundState &gs)
      : cfg_(cfg), gs_(&gs), d_(gs.dimension), sphere_(detail::sphere_rule(gs.dimension)) {}

  /// int_{|x - x_k| <= R} |r(t)|^2. R must keep the ball away from the other
  /// cutoff supports.
  double local_mass(double t, int k, double R) const {
    check(t, k);
    for (int j = 0; j < cfg_.count(); ++j)
      require(j == k || distance(cfg_.points[j], cfg_.points[k]) >= R + 2 * cfg_.rho,
              ErrorKind::geometry, "ball reaches another cutoff support");
    return mass_radius(t, R);
  }

  /// ‖r(t)‖^2.
  double total_mass_sq(double t) const {
    check(t, 0);
    return cfg_.count() * mass_radius(t, 2 * cfg_.rho);
  }

  /// int |r(t)|^2 psi.
  double pairing(double t, const TestFunction &psi) const {
    check(t, 0);
    const double L = width(t);
    double s = 0;
    for (const auto &c : cfg_.points)
      s += radial(t, 2 * cfg_.rho, [&](double z, double phi) {
        double ang = 0;
        for (const auto &[w, wt] : sphere_) {
          Point x = c;
          for (int i = 0; i < d_; ++i)
            x[i] += L * z * w[i];
          ang += wt * psi.fn(x);
        }
        const double q = evaluate_Q(*gs_, z);
        return std::pow(z, d_ - 1) * phi * phi * q * q * ang;
      });
    return s;
  }

  /// ‖grad r(t)‖^2: the modulus part plus the chirp |x|^2 / (4 tau^2).
  double gradient_norm_sq(double t) const {
    check(t, 0);
    const double L = width(t);
    const double area = unit_sphere_area(d_);
    const double lam = cfg_.lambda;
    const double one = radial(t, 2 * cfg_.rho, [&](double z, double) {
      const auto e = cutoff_eta(L * z / cfg_.rho);
      const double q = evaluate_Q(*gs_, z), q1 = evaluate_Q_gradient(*gs_, z);
      const double m = e[0] * q1 + L * e[1] / cfg_.rho * q;
      const double chirp = 0.25 * lam * lam * L * L * z * z * e[0] * e[0] * q * q;
      return area * std::pow(z, d_ - 1) * (m * m + chirp);
    });
    return cfg_.count() * one / (L * L);
  }

  const BubbleConfig &config() const { return cfg_; }

private:
  double width(double t) const { return cfg_.lambda * (cfg_.blow_time - t); }

  void check(double t, int k) const {
    require(std::isfinite(t) && t < cfg_.blow_time, ErrorKind::invalid_argument,
            "post-blow-up evaluation (t >= T)");
    require(cfg_.count() > 0 && k >= 0 && k < cfg_.count(), ErrorKind::invalid_argument,
            "bubble index out of range");
  }

  double mass_radius(double t, double R) const {
    const double area = unit_sphere_area(d_);
    return radial(t, R, [&](double z, double phi) {
      const double q = evaluate_Q(*gs_, z);
      return area * std::pow(z, d_ - 1) * phi * phi * q * q;
    });
  }

  /// int_0^{R/L} f(z, phi(L z)) dz, truncated at z_cap.
  template <class F> double radial(double t, double R, F &&f) const {
    const double L = width(t);
    const double rho_z = cfg_.rho / L;
    const double zmax = std::min(R / L, z_cap);
    // Panels resolve Q on unit scale and the cutoff on its own scale.
    const double panel = std::min(0.25, 0.05 * rho_z);
    std::vector<double> cuts{rho_z, 2 * rho_z};
    if (rho_z < z_cap) {
      // The transition layer is thin in z only when rho_z is small.
      return detail::panel_integral(zmax, panel, cuts, [&](double z) {
        return f(z, cutoff_eta(L * z / cfg_.rho)[0]);
      });
    }
    return detail::panel_integral(zmax, 0.25, cuts, [&](double z) { return f(z, 1.0); });
  }

  BubbleConfig cfg_;
  const GroundState *gs_;
  int d_;
  std::vector<std::pair<Point, double>> sphere_;
};

/// h = r + u for a solved remainder problem. Times up to the last mesh node
/// must be nodes; past it the weighted remainder is below 1e-300 and u is
/// taken as 0. Without a trajectory the remainder is 0 everywhere.
class ConstructedProfile {
public:
  ConstructedProfile(const RemainderProblem &pb, const RemainderTrajectory *traj = nullptr)
      : pb_(&pb), traj_(traj), glued_(pb.bubbles, *pb.ground_state) {}

  const RemainderProblem &problem() const { return *pb_; }
  const GluedProfileQuadrature &glued() const { return glued_; }

  /// h(t) on the grid.
  Field field(double t) const {
    const auto m = node(t);
    if (!m)
      return glued_profile(pb_->bubbles, *pb_->ground_state, t, pb_->domain);
    Field h = pb_->profile[*m];
    if (traj_)
      h += traj_->state(*pb_, *m);
    return h;
  }

  double local_mass(double t, int k, double R) const {
    return glued_.local_mass(t, k, R) + correction(t, [&](const Field &f) {
             return nlslab::local_mass(f, pb_->bubbles.points[k], R);
           });
  }

  double total_mass_sq(double t) const {
    return glued_.total_mass_sq(t) + correction(t, [](const Field &f) {
             return l2_norm_sq(f);
           });
  }

  double pairing(double t, const TestFunction &psi) const {
    return glued_.pairing(t, psi) + correction(t, [&](const Field &f) {
             return nlslab::pairing(f, psi.sample(f.domain));
           });
  }

  double gradient_l2(double t) const {
    return std::sqrt(glued_.gradient_norm_sq(t) + correction(t, [](const Field &f) {
                       return nlslab::gradient_norm_sq(f);
                     }));
  }

private:
  std::optional<std::size_t> node(double t) const {
    if (t > pb_->mesh.nodes.back())
      return std::nullopt;
    return pb_->mesh.index_of(t);
  }

  /// Q(r + u) - Q(r) on the grid; 0 when u vanishes.
  template <class F> double correction(double t, F &&q) const {
    const auto m = node(t);
    if (!traj_ || !m)
      return 0;
    const Field u = traj_->state(*pb_, *m);
    if (linf_norm(u) == 0)
      return 0;
    const Field &r = pb_->profile[*m];
    return q(r + u) - q(r);
  }

  const RemainderProblem *pb_;
  const RemainderTrajectory *traj_;
  GluedProfileQuadrature glued_;
};

struct BlowupReport {
  int dimension = 2;
  int point_count = 0;
  double lambda = 0;
  double blow_time = 0;
  double R = 0;
  /// ‖Q‖^2, the local mass limit.
  double mass_limit = 0;
  std::vector<double> times;
  /// local_masses[k][i] at point k, time i.
  std::vector<std::vector<double>> local_masses;
  /// ‖h(t_i)‖_L2.
  std::vector<double> total_mass;
  std::vector<std::string> psi_names;
  std::vector<double> psi_limits;
  /// pairings[j][i] for test function j.
  std::vector<std::vector<double>> pairings;
  std::vector<double> gradient_l2;
  GradientRateFit gradient_fit;
  /// Local masses at the last time for each radius in `radius_sweep`.
  std::vector<double> radius_sweep;
  std::vector<std::vector<double>> sweep_local_masses;

  void check() const {
    for (std::size_t i = 1; i < times.size(); ++i)
      require(times[i] > times[i - 1], ErrorKind::invalid_argument,
              "report times must increase");
    auto finite = [](const std::vector<double> &v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    bool ok = finite(total_mass) && finite(gradient_l2);
    for (const auto &v : local_masses)
      ok = ok && finite(v);
    for (const auto &v : pairings)
      ok = ok && finite(v);
    require(ok, ErrorKind::numerical, "report series are not finite");
  }

  /// Per-time errors against the limits.
  std::vector<double> local_mass_error(int k) const {
    std::vector<double> e;
    for (double v : local_masses.at(k))
      e.push_back(std::abs(v - mass_limit));
    return e;
  }
  std::vector<double> pairing_error(std::size_t j) const {
    std::vector<double> e;
    for (double v : pairings.at(j))
      e.push_back(std::abs(v - psi_limits.at(j)));
    return e;
  }
};

/// Evaluates one time index of a report; the two sources (constructed profile,
/// stored fields) supply these callbacks.
struct ReportSource {
  std::vector<double> times;
  std::function<double(std::size_t, int, double)> local_mass;
  std::function<double(std::size_t)> total_mass_sq;
  std::function<double(std::size_t, const TestFunction &)> pairing;
  std::function<double(std::size_t)> gradient_l2;
};

inline BlowupReport build_report(const ReportSource &src, const BubbleConfig &cfg,
                                 const GroundState &gs, double R,
                                 const std::vector<TestFunction> &psis) {
  BlowupReport rep;
  rep.dimension = gs.dimension;
  rep.point_count = cfg.count();
  rep.lambda = cfg.lambda;
  rep.blow_time = cfg.blow_time;
  rep.R = R;
  rep.mass_limit = gs.l2_norm * gs.l2_norm;
  rep.times = src.times;
  const std::size_t n = src.times.size();
  rep.local_masses.assign(cfg.count(), std::vector<double>(n));
  rep.pairings.assign(psis.size(), std::vector<double>(n));
  for (const auto &psi : psis) {
    rep.psi_names.push_back(psi.name);
    rep.psi_limits.push_back(pairing_limit(psi, cfg.points, gs));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < cfg.count(); ++k)
      rep.local_masses[k][i] = src.local_mass(i, k, R);
    rep.total_mass.push_back(std::sqrt(src.total_mass_sq(i)));
    for (std::size_t j = 0; j < psis.size(); ++j)
      rep.pairings[j][i] = src.pairing(i, psis[j]);
    rep.gradient_l2.push_back(src.gradient_l2(i));
  }
  std::vector<double> tau;
  for (double t : rep.times)
    tau.push_back(cfg.blow_time - t);
  if (n >= 5)
    rep.gradient_fit = gradient_rate_fit(tau, rep.gradient_l2, cfg.lambda, cfg.count(), gs);
  if (n > 0) {
    rep.radius_sweep = {cfg.rho / 2, cfg.rho, 2 * cfg.rho};
    for (double r : rep.radius_sweep) {
      std::vector<double> row;
      for (int k = 0; k < cfg.count(); ++k)
        row.push_back(src.local_mass(n - 1, k, r));
      rep.sweep_local_masses.push_back(row);
    }
  }
  rep.check();
  return rep;
}

/// Report of a constructed profile at `times`.
inline BlowupReport report_constructed(const ConstructedProfile &h,
                                       const std::vector<double> &times, double R,
                                       const std::vector<TestFunction> &psis) {
  ReportSource src;
  src.times = times;
  src.local_mass = [&](std::size_t i, int k, double r) { return h.local_mass(times[i], k, r); };
  src.total_mass_sq = [&](std::size_t i) { return h.total_mass_sq(times[i]); };
  src.pairing = [&](std::size_t i, const TestFunction &p) { return h.pairing(times[i], p); };
  src.gradient_l2 = [&](std::size_t i) { return h.gradient_l2(times[i]); };
  const auto &pb = h.problem();
  return build_report(src, pb.bubbles, *pb.ground_state, R, psis);
}

/// Report from stored grid fields, all by grid quadrature.
inline BlowupReport report_from_fields(const std::vector<Field> &series,
                                       const BubbleConfig &cfg, const GroundState &gs,
                                       double R, const std::vector<TestFunction> &psis) {
  ReportSource src;
  for (const auto &f : series)
    src.times.push_back(f.time_stamp);
  src.local_mass = [&](std::size_t i, int k, double r) {
    return local_mass(series[i], cfg.points[k], r);
  };
  src.total_mass_sq = [&](std::size_t i) { return l2_norm_sq(series[i]); };
  src.pairing = [&](std::size_t i, const TestFunction &p) {
    return pairing(series[i], p.sample(series[i].domain));
  };
  src.gradient_l2 = [&](std::size_t i) { return std::sqrt(gradient_norm_sq(series[i])); };
  return build_report(src, cfg, gs, R, psis);
}

inline nlohmann::json to_json(const BlowupReport &r) {
  nlohmann::json j;
  j["dimension"] = r.dimension;
  j["point_count"] = r.point_count;
  j["lambda"] = r.lambda;
  j["T"] = r.blow_time;
  j["R"] = r.R;
  j["mass_limit"] = r.mass_limit;
  j["times"] = r.times;
  j["local_masses"] = r.local_masses;
  j["total_mass"] = r.total_mass;
  j["test_functions"] = r.psi_names;
  j["pairing_limits"] = r.psi_limits;
  j["pairings"] = r.pairings;
  j["gradient_l2"] = r.gradient_l2;
  j["gradient_fit"] = {{"slope", r.gradient_fit.slope},
                       {"r2", r.gradient_fit.r2},
                       {"predicted", r.gradient_fit.predicted},
                       {"samples", r.gradient_fit.samples}};
  j["radius_sweep"] = r.radius_sweep;
  j["sweep_local_masses"] = r.sweep_local_masses;
  return j;
}

/// Whitespace table: t, T - t, local masses, total mass, pairings, gradient.
inline std::string report_table(const BlowupReport &r) {
  std::string out = "# t tau";
  for (int k = 0; k < r.point_count; ++k)
    out += " local_mass_" + std::to_string(k);
  out += " total_mass";
  for (const auto &n : r.psi_names)
    out += " pairing_" + n;
  out += " grad_l2\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    out += buf;
  };
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", r.times[i]);
    out += buf;
    put(r.blow_time - r.times[i]);
    for (const auto &v : r.local_masses)
      put(v[i]);
    put(r.total_mass[i]);
    for (const auto &v : r.pairings)
      put(v[i]);
    put(r.gradient_l2[i]);
    out += "\n";
  }
  return out;
}

/// Four-panel gnuplot script reading the table written by report_table.
inline std::string gnuplot_script(const BlowupReport &r, const std::string &table_file) {
  const int nk = r.point_count, nj = int(r.psi_names.size());
  const int col_total = 3 + nk, col_grad = col_total + nj + 1;
  char buf[256];
  std::string s;
  s += "set terminal pngcairo size 1200,900\n";
  s += "set output 'blowup.png'\n";
  s += "set multiplot layout 2,2\n";
  s += "set logscale x\nset xlabel 'T - t'\n";
  std::snprintf(buf, sizeof buf, "Qm = %.17g\n", r.mass_limit);
  s += buf;
  s += "set title 'local mass'\nplot ";
  for (int k = 0; k < nk; ++k) {
    std::snprintf(buf, sizeof buf, "'%s' using 2:%d with linespoints title 'x_%d', ",
                  table_file.c_str(), 3 + k, k);
    s += buf;
  }
  s += "Qm title '|Q|^2'\n";
  std::snprintf(buf, sizeof buf,
                "set title 'total mass'\nplot '%s' using 2:%d with linespoints title '|h|', "
                "sqrt(%d*Qm) title 'sqrt(p)|Q|'\n",
                table_file.c_str(), col_total, nk);
  s += buf;
  s += "set title 'pairings'\nplot ";
  for (int j = 0; j < nj; ++j) {
    std::snprintf(buf, sizeof buf, "'%s' using 2:%d with linespoints title '%s', %.17g notitle%s",
                  table_file.c_str(), col_total + 1 + j, r.psi_names[j].c_str(),
                  r.psi_limits[j], j + 1 < nj ? ", " : "");
    s += buf;
  }
  if (nj == 0)
    s += "0 notitle";
  s += "\n";
  std::snprintf(buf, sizeof buf,
                "set title 'gradient rate'\nset logscale y\n"
                "plot '%s' using 2:(1/$%d) with linespoints title '1/|grad h|', "
                "%.17g*x title 'fit'\n",
                table_file.c_str(), col_grad, r.gradient_fit.slope);
  s += buf;
  s += "unset multiplot\n";
  return s;
}

} // namespace nlslab
