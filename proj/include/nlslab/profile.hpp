#pragma once

// Pseudo-conformal bubbles, smooth cutoffs, the glued profile and the source
// terms of the remainder equation.
//
// With tau = T - t and L = lambda tau, bubble k is
//
//     r^k(t,x) = L^(-d/2) exp(i/(lambda^2 tau) - i|x-x_k|^2/(4 tau)) Q(|x-x_k|/L),
//
// an exact solution of i u_t + Laplacian u = -|u|^(4/d) u on R^d. The glued
// profile r = sum_k phi_k r^k vanishes near the boundary; h = r + u solves the
// equation iff
//
//     (i d_t + Laplacian) u = S0 + S(u),
//     S0   = -|r|^a r - sum_k (r^k Lap phi_k + 2 grad phi_k . grad r^k - phi_k |r^k|^a r^k),
//     S(u) = |r|^a r - |u + r|^a (u + r),      a = 4/d.

#include "nlslab/error.hpp"
#include "nlslab/fit.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/parallel.hpp"
#include "nlslab/spectral_domain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace nlslab {

struct BubbleConfig {
  std::vector<Point> points;
  double lambda = 1.0;
  double blow_time = 1.0;
  /// Inner cutoff radius rho; phi_k = 1 on B(x_k, rho), 0 outside B(x_k, 2 rho).
  double rho = 0.1;

  int count() const { return static_cast<int>(points.size()); }
  double outer_radius() const { return 2.0 * rho; }
};

/// min(min_{j != k} |x_j - x_k|, 2 min_k dist(x_k, boundary)) / 5.
inline double default_rho(const std::vector<Point> &points, const DomainSpec &dom) {
  require(!points.empty(), ErrorKind::invalid_argument,
          "default rho needs at least one point");
  double sep = std::numeric_limits<double>::infinity();
  double wall = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < points.size(); ++k) {
    wall = std::min(wall, dom.distance_to_boundary(points[k]));
    for (std::size_t j = k + 1; j < points.size(); ++j)
      sep = std::min(sep, distance(points[j], points[k]));
  }
  const double rho = std::min(sep, 2.0 * wall) / 5.0;
  require(std::isfinite(rho) && rho > 0, ErrorKind::geometry,
          "cutoff geometry infeasible: cannot derive a finite rho");
  return rho;
}

/// Checks the bubble parameters against the domain. The empty configuration
/// (no points) is valid and describes r = 0.
inline void validate(const BubbleConfig &cfg, const DomainSpec &dom) {
  require(std::isfinite(cfg.lambda) && cfg.lambda > 0, ErrorKind::invalid_argument,
          "lambda must be positive");
  require(std::isfinite(cfg.blow_time) && cfg.blow_time > 0,
          ErrorKind::invalid_argument, "blow-up time must be positive");
  require(std::isfinite(cfg.rho) && cfg.rho > 0, ErrorKind::invalid_argument,
          "rho must be positive");
  for (std::size_t k = 0; k < cfg.points.size(); ++k) {
    const auto &x = cfg.points[k];
    for (int i = dom.dimension; i < 3; ++i)
      require(x[i] == 0.0, ErrorKind::geometry,
              "blow-up point has coordinates beyond the domain dimension");
    for (int i = 0; i < dom.dimension; ++i)
      require(x[i] > 0 && x[i] < dom.side_lengths[i], ErrorKind::geometry,
              "blow-up point outside the domain");
    require(dom.distance_to_boundary(x) > 2 * cfg.rho, ErrorKind::geometry,
            "cutoff geometry infeasible: support of phi_" + std::to_string(k + 1) +
                " reaches the boundary");
    for (std::size_t j = k + 1; j < cfg.points.size(); ++j)
      require(distance(x, cfg.points[j]) > 4 * cfg.rho, ErrorKind::geometry,
              "cutoff geometry infeasible: supports of phi_" + std::to_string(k + 1) +
                  " and phi_" + std::to_string(j + 1) + " overlap");
  }
}

namespace detail {

/// g(s) = exp(-1/s) for s > 0 with its first two derivatives.
inline std::array<double, 3> bump_g(double s) {
  if (s <= 0)
    return {0, 0, 0};
  const double g = std::exp(-1.0 / s);
  const double s2 = s * s;
  return {g, g / s2, g * (1.0 / (s2 * s2) - 2.0 / (s2 * s))};
}

} // namespace detail

/// eta(s) = g(2-s) / (g(2-s) + g(s-1)) and its first two derivatives.
inline std::array<double, 3> cutoff_eta(double s) {
  if (s <= 1)
    return {1, 0, 0};
  if (s >= 2)
    return {0, 0, 0};
  const auto a = detail::bump_g(2 - s);
  const auto b = detail::bump_g(s - 1);
  const double A = a[0], A1 = -a[1], A2 = a[2];
  const double B1 = b[1], B2 = b[2];
  const double D = A + b[0], D1 = A1 + B1, D2 = A2 + B2;
  const double eta = A / D;
  const double eta1 = (A1 * D - A * D1) / (D * D);
  const double eta2 = (A2 * D - A * D2) / (D * D) - 2 * D1 * eta1 / D;
  return {eta, eta1, eta2};
}

/// Value, gradient and Laplacian of phi(x) = eta(|x - c|/rho) in d dimensions.
struct CutoffJet {
  double value = 0;
  std::array<double, 3> grad{0, 0, 0};
  double laplacian = 0;
};

inline CutoffJet cutoff_jet(const Point &x, const Point &c, double rho, int d) {
  CutoffJet j;
  std::array<double, 3> y{x[0] - c[0], x[1] - c[1], x[2] - c[2]};
  const double r = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
  const auto e = cutoff_eta(r / rho);
  j.value = e[0];
  if (e[1] == 0 && e[2] == 0)
    return j;
  const double d1 = e[1] / rho, d2 = e[2] / (rho * rho);
  for (int i = 0; i < d; ++i)
    j.grad[i] = d1 * y[i] / r;
  j.laplacian = d2 + (d - 1) * d1 / r;
  return j;
}

/// The cutoffs phi_k sampled on the grid (real, stored as complex fields).
struct CutoffFamily {
  std::vector<Field> phi;
};

inline CutoffFamily build_cutoffs(const BubbleConfig &cfg, const DomainSpec &dom) {
  validate(cfg, dom);
  CutoffFamily fam;
  for (const auto &c : cfg.points)
    fam.phi.push_back(Field::sample(dom, 0.0, [&](const Point &x) {
      return cutoff_jet(x, c, cfg.rho, dom.dimension).value;
    }));
  return fam;
}

/// Value, gradient and Hessian of one bubble at a point.
struct BubbleJet {
  Complex value;
  std::array<Complex, 3> grad{};
  std::array<std::array<Complex, 3>, 3> hess{};
  Complex laplacian;
};

namespace detail {

inline void require_before_blowup(const BubbleConfig &cfg, double t) {
  require(std::isfinite(t) && t < cfg.blow_time, ErrorKind::invalid_argument,
          "post-blow-up evaluation (t >= T)");
}

} // namespace detail

/// Bubble k at (t, x). With order 0 only `value` is filled; order 1 adds the
/// gradient; order 2 adds the Hessian and Laplacian.
inline BubbleJet bubble_jet(const BubbleConfig &cfg, const GroundState &gs, int k,
                            double t, const Point &x, int order = 2) {
  const int d = gs.dimension;
  const double tau = cfg.blow_time - t;
  const double L = cfg.lambda * tau;
  const Point &c = cfg.points[k];
  std::array<double, 3> y{x[0] - c[0], x[1] - c[1], x[2] - c[2]};
  const double r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
  const double r = std::sqrt(r2);
  const double s = r / L;
  const double amp = std::pow(L, -0.5 * d);
  const double theta = 1.0 / (cfg.lambda * cfg.lambda * tau) - r2 / (4 * tau);
  const Complex e = std::polar(1.0, theta);
  const double q = evaluate_Q(gs, s);
  BubbleJet j;
  j.value = amp * q * e;
  if (order < 1)
    return j;

  // r^k = a(|y|) e^{i theta}, a(rad) = amp Q(rad/L), grad theta = -y/(2 tau).
  const double q1 = evaluate_Q_gradient(gs, s);
  const double a = amp * q;
  const double a1 = amp * q1 / L; // da/d|y|
  const Complex I(0, 1);
  std::array<double, 3> th{};
  for (int i = 0; i < d; ++i)
    th[i] = -y[i] / (2 * tau);
  // a1 * y_i/r; the ratio tends to a''(0) y_i which is 0 at the center.
  std::array<double, 3> ga{};
  for (int i = 0; i < d; ++i)
    ga[i] = r > 0 ? a1 * y[i] / r : 0.0;
  for (int i = 0; i < d; ++i)
    j.grad[i] = e * (ga[i] + I * a * th[i]);
  if (order < 2)
    return j;

  // a'' in |y| and a'/|y|, both finite at the center.
  const double p = 1.0 + 4.0 / d;
  double a2, a1_over_r;
  if (s > 1e-8) {
    a2 = amp * evaluate_Q_second(gs, s) / (L * L);
    a1_over_r = a1 / r;
  } else {
    const double q2 = (gs.initial_height - std::pow(gs.initial_height, p)) / d;
    a2 = amp * q2 / (L * L);
    a1_over_r = a2;
  }
  for (int i = 0; i < d; ++i) {
    for (int l = 0; l < d; ++l) {
      const double yy = r > 0 ? y[i] * y[l] / r2 : 0.0;
      const double kron = i == l ? 1.0 : 0.0;
      const double haa = r > 0 ? a2 * yy + a1_over_r * (kron - yy) : a2 * kron;
      const double thth = -kron / (2 * tau);
      j.hess[i][l] = e * (haa + I * (ga[i] * th[l] + ga[l] * th[i]) +
                          I * a * thth - a * th[i] * th[l]);
    }
    j.laplacian += j.hess[i][i];
  }
  return j;
}

inline Field bubble(const BubbleConfig &cfg, const GroundState &gs, int k, double t,
                    const DomainSpec &dom) {
  detail::require_before_blowup(cfg, t);
  require(k >= 0 && k < cfg.count(), ErrorKind::invalid_argument,
          "bubble index out of range");
  require(gs.dimension == dom.dimension, ErrorKind::shape_mismatch,
          "ground state and domain dimensions differ");
  Field f(dom, t);
  parallel_for(f.size(), [&](std::size_t i) {
    f.values[i] = bubble_jet(cfg, gs, k, t, dom.point(i), 0).value;
  });
  return f;
}

/// r(t) = sum_k phi_k r^k(t); exactly zero outside the cutoff supports.
inline Field glued_profile(const BubbleConfig &cfg, const GroundState &gs, double t,
                           const DomainSpec &dom) {
  detail::require_before_blowup(cfg, t);
  require(gs.dimension == dom.dimension, ErrorKind::shape_mismatch,
          "ground state and domain dimensions differ");
  validate(cfg, dom);
  Field f(dom, t);
  parallel_for(f.size(), [&](std::size_t i) {
    const Point x = dom.point(i);
    Complex v{};
    for (int k = 0; k < cfg.count(); ++k) {
      const double phi = cutoff_jet(x, cfg.points[k], cfg.rho, dom.dimension).value;
      if (phi > 0)
        v += phi * bubble_jet(cfg, gs, k, t, x, 0).value;
    }
    f.values[i] = v;
  });
  return f;
}

/// |z|^a z.
inline Complex power_nonlinearity(Complex z, double a) {
  const double m = std::abs(z);
  return m > 0 ? std::pow(m, a) * z : Complex{};
}

/// Gluing source S0(t), evaluated from the analytic derivatives of phi_k and
/// r^k; zero wherever every phi_k is locally constant.
inline Field source_S0(const BubbleConfig &cfg, const GroundState &gs, double t,
                       const DomainSpec &dom) {
  detail::require_before_blowup(cfg, t);
  require(gs.dimension == dom.dimension, ErrorKind::shape_mismatch,
          "ground state and domain dimensions differ");
  validate(cfg, dom);
  const int d = dom.dimension;
  const double a = 4.0 / d;
  Field f(dom, t);
  parallel_for(f.size(), [&](std::size_t i) {
    const Point x = dom.point(i);
    Complex glued{}, sum{};
    for (int k = 0; k < cfg.count(); ++k) {
      const auto cj = cutoff_jet(x, cfg.points[k], cfg.rho, d);
      if (cj.value == 0)
        continue;
      const bool flat = cj.laplacian == 0 && cj.grad == std::array<double, 3>{};
      const auto bj = bubble_jet(cfg, gs, k, t, x, flat ? 0 : 1);
      glued += cj.value * bj.value;
      Complex term = -cj.value * power_nonlinearity(bj.value, a);
      if (!flat) {
        term += bj.value * cj.laplacian;
        for (int l = 0; l < d; ++l)
          term += 2.0 * cj.grad[l] * bj.grad[l];
      }
      sum += term;
    }
    f.values[i] = -power_nonlinearity(glued, a) - sum;
  });
  return f;
}

/// (N(z + eps w) - N(z)) / eps for N(z) = |z|^a z without cancellation; the
/// limit eps -> 0 is the linearisation at z.
inline Complex scaled_nonlinear_difference(Complex z, Complex w, double eps, double a) {
  const double mz = std::abs(z);
  const Complex v = z + eps * w;
  const double mv = std::abs(v);
  if (mz == 0)
    return eps == 0 ? Complex{} : std::pow(eps, a) * std::pow(std::abs(w), a) * w;
  // |v| - |z| = eps * dm
  const double dm = (2 * (std::conj(z) * w).real() + eps * std::norm(w)) / (mv + mz);
  const double x = eps * dm / mz;
  double dmod; // (|v|^a - |z|^a)/eps
  if (!(x <= 1)) {
    dmod = (std::pow(mv, a) - std::pow(mz, a)) / eps;
  } else {
    double g; // ((1+x)^a - 1)/x
    if (std::abs(x) < 1e-5)
      g = a + a * (a - 1) / 2 * x + a * (a - 1) * (a - 2) / 6 * x * x;
    else
      g = std::expm1(a * std::log1p(x)) / x;
    dmod = std::pow(mz, a - 1) * g * dm;
  }
  return dmod * z + std::pow(mv, a) * w;
}

/// S(u) = |r|^a r - |u + r|^a (u + r) for a precomputed glued profile r.
inline Field source_S(const Field &r, const Field &u) {
  r.check_same_grid(u);
  const double a = 4.0 / r.domain.dimension;
  Field f(r.domain, u.time_stamp);
  parallel_for(f.size(), [&](std::size_t i) {
    f.values[i] = -scaled_nonlinear_difference(r.values[i], u.values[i], 1.0, a);
  });
  return f;
}

inline Field source_S(const BubbleConfig &cfg, const GroundState &gs, double t,
                      const Field &u) {
  if (cfg.count() == 0)
    return source_S(Field(u.domain, t), u);
  return source_S(glued_profile(cfg, gs, t, u.domain), u);
}

/// Exponential rate of the gluing source: ln ||S0(t)||_H2 regressed on
/// 1/(lambda (T - t)) for t in [t_min, t_max], sampled uniformly in that
/// variable. `delta` is minus the slope. The window defaults to
/// [T/2, T - min(1e-3, T/20)], shortened where S0 would underflow.
struct SourceDecayFit {
  double delta = 0;
  double r2 = 0;
  std::vector<double> inverse_scale; // 1/(lambda tau)
  std::vector<double> h2_norm;
};

inline SourceDecayFit fit_source_decay(const BubbleConfig &cfg, const GroundState &gs,
                                       const DomainSpec &dom, int samples = 16,
                                       double t_min = -1, double t_max = -1) {
  const double T = cfg.blow_time;
  if (t_min < 0)
    t_min = T / 2;
  if (t_max < 0) {
    // Stop before D0 rho / (lambda tau) = 200, where S0 underflows.
    const double tau_floor = gs.value_decay.rate * cfg.rho / (200 * cfg.lambda);
    t_max = T - std::max(std::min(1e-3, T / 20), tau_floor);
  }
  require(samples >= 3 && t_min < t_max && t_max < T, ErrorKind::invalid_argument,
          "source decay fit needs at least 3 samples on a nonempty window before T");
  const double x0 = 1 / (cfg.lambda * (T - t_min));
  const double x1 = 1 / (cfg.lambda * (T - t_max));
  SourceDecayFit fit;
  std::vector<double> logs;
  for (int i = 0; i < samples; ++i) {
    const double x = x0 + (x1 - x0) * i / (samples - 1);
    const double t = T - 1 / (cfg.lambda * x);
    const double n = norms(source_S0(cfg, gs, t, dom)).h2;
    require(n > 0 && std::isfinite(n), ErrorKind::numerical,
            "source norm underflowed; shorten the fit window");
    fit.inverse_scale.push_back(x);
    fit.h2_norm.push_back(n);
    logs.push_back(std::log(n));
  }
  const auto line = fit_line(fit.inverse_scale, logs);
  fit.delta = -line.slope;
  fit.r2 = line.r2;
  return fit;
}

/// |u|^a u applied pointwise.
inline Field apply_nonlinearity(const Field &u) {
  const double a = 4.0 / u.domain.dimension;
  Field f(u.domain, u.time_stamp);
  for (std::size_t i = 0; i < f.size(); ++i)
    f.values[i] = power_nonlinearity(u.values[i], a);
  return f;
}

/// First and second partial derivatives of |u|^a u expanded by the chain rule
/// in u, conj(u) and spectral derivatives of u. `second` is row-major d x d.
struct NonlinearityDerivatives {
  std::vector<Field> first;
  std::vector<Field> second;
};

inline constexpr double small_modulus = 1e-30;

inline NonlinearityDerivatives nonlinearity_derivatives(const Field &u) {
  const DomainSpec &dom = u.domain;
  const int d = dom.dimension;
  const double a = 4.0 / d, h = a / 2;
  std::vector<Field> du(d);
  std::vector<Field> ddu(d * d);
  for (int i = 0; i < d; ++i) {
    std::array<int, 3> o{0, 0, 0};
    o[i] = 1;
    du[i] = derivative(u, o);
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      std::array<int, 3> o{0, 0, 0};
      o[i] += 1;
      o[j] += 1;
      ddu[i * d + j] = derivative(u, o);
      ddu[j * d + i] = ddu[i * d + j];
    }

  NonlinearityDerivatives out;
  out.first.assign(d, Field(dom, u.time_stamp));
  out.second.assign(d * d, Field(dom, u.time_stamp));
  parallel_for(u.size(), [&](std::size_t n) {
    const Complex z = u.values[n];
    const double m = std::abs(z);
    // |z|^a, |z|^(a-2) z^2, |z|^(a-2) z, |z|^(a-2) zb, |z|^(a-4) z^3; the
    // last four are set to 0 below the regularisation threshold.
    const double ma = m > 0 ? std::pow(m, a) : 0.0;
    Complex w2{}, w1{}, w1b{}, w3{};
    if (m >= small_modulus) {
      const Complex ph = z / m;
      w2 = ma * ph * ph;
      w1 = std::pow(m, a - 1) * ph;
      w1b = std::conj(w1);
      w3 = ma * ph * ph * ph / m;
    }
    for (int i = 0; i < d; ++i) {
      const Complex ui = du[i].values[n];
      out.first[i].values[n] = (h + 1) * ma * ui + h * w2 * std::conj(ui);
    }
    for (int i = 0; i < d; ++i) {
      const Complex ui = du[i].values[n], uib = std::conj(ui);
      for (int j = 0; j < d; ++j) {
        const Complex uj = du[j].values[n], ujb = std::conj(uj);
        const Complex uij = ddu[i * d + j].values[n];
        // d_j of (h+1)|z|^a u_i + h |z|^(a-2) z^2 conj(u_i)
        const Complex t1 = (h + 1) * (h * (w1b * uj + w1 * ujb) * ui + ma * uij);
        const Complex t2 = h * ((h + 1) * w1 * uj * uib + (h - 1) * w3 * ujb * uib +
                                w2 * std::conj(uij));
        out.second[i * d + j].values[n] = t1 + t2;
      }
    }
  });
  return out;
}

/// Left-hand sides of the three nonlinearity estimates divided by their
/// right-hand sides without the constant:
///   i:   || N(u)-N(v) ||_L2 / (||u-v||_L2 (||u||_inf + ||v||_inf)^a)
///   ii:  || N(u)-N(v) ||_H1 / (||u-v||_H2 (||u||_H2 + ||v||_H2)^a)
///   iii: || N(u) ||_H2 / ||u||_H2^(1+a)
struct Lemma1Ratios {
  double ratio_i = 0;
  double ratio_ii = 0;
  double ratio_iii = 0;
};

namespace detail {
inline double safe_ratio(double lhs, double rhs, const char *which) {
  if (rhs == 0) {
    require(lhs == 0, ErrorKind::numerical,
            std::string("estimate ratio ") + which + " has a zero denominator");
    return 0;
  }
  return lhs / rhs;
}
} // namespace detail

inline Lemma1Ratios check_lemma1(const Field &u, const Field &v) {
  u.check_same_grid(v);
  const double a = 4.0 / u.domain.dimension;
  const Field nu = apply_nonlinearity(u), nv = apply_nonlinearity(v);
  const Field dn = nu - nv, duv = u - v;
  const auto nu_norms = norms(u), nv_norms = norms(v), d_norms = norms(duv);
  const auto dn_norms = norms(dn);
  Lemma1Ratios r;
  r.ratio_i = detail::safe_ratio(
      dn_norms.l2, d_norms.l2 * std::pow(nu_norms.linf + nv_norms.linf, a), "i");
  r.ratio_ii = detail::safe_ratio(
      dn_norms.h1, d_norms.h2 * std::pow(nu_norms.h2 + nv_norms.h2, a), "ii");
  r.ratio_iii = detail::safe_ratio(norms(nu).h2, std::pow(nu_norms.h2, 1 + a), "iii");
  return r;
}

} // namespace nlslab
