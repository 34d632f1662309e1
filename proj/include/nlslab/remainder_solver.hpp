#pragma once

// Duhamel quadrature and the Picard iteration for the remainder
//
//     u(t) = i int_t^T exp(i(t-s) Laplacian) (S0(s) + S(u)(s)) ds.
//
// Write sigma(t) = 1/(lambda (T - t)). Trajectories are stored in weighted
// form w(t) = exp(delta sigma(t)) u(t): the weight is exactly the factor in
// the distance of the weighted space, and u itself underflows long before
// the mesh ends. The integrand is treated the same way. On each mesh
// interval the interaction-picture source
//
//     g(s) = exp(-i s Laplacian) exp(-i omega(s)) e^{kappa sigma(s)} F(s),
//
// is interpolated by a Lagrange polynomial through neighbouring nodes (six by
// default), and the remaining scalar factor exp(-kappa sigma(s) + i omega(s))
// is integrated against the Lagrange basis by Gauss-Legendre quadrature. The
// optional carrier omega(s) = 1/(lambda^2 (T - s)) is the common phase of all
// bubbles.

#include "nlslab/error.hpp"
#include "nlslab/fit.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/parallel.hpp"
#include "nlslab/profile.hpp"
#include "nlslab/spectral_domain.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace nlslab {

/// Midpoint of the admissible interval (0, min(1, 4/d - 1)).
inline double default_alpha(int d) {
  return std::min(1.0, 4.0 / d - 1.0) / 2.0;
}

struct WeightedSpaceParams {
  double delta = 0.1;
  double alpha = 0.5;
  double beta = 0.75;
  double lambda = 1.0;
  double blow_time = 1.0;

  /// sigma(t) = 1/(lambda (T - t)).
  double inverse_scale(double t) const { return 1.0 / (lambda * (blow_time - t)); }

  void validate(int d) const {
    require(d >= 1 && d <= 3, ErrorKind::invalid_argument, "dimension must be 1, 2 or 3");
    const double hi = std::min(1.0, 4.0 / d - 1.0);
    require(std::isfinite(delta) && delta > 0, ErrorKind::invalid_argument,
            "delta must be positive");
    require(alpha > 0 && alpha < hi, ErrorKind::invalid_argument,
            "alpha must lie strictly inside (0, min(1, 4/d - 1))");
    require(beta > alpha && beta < 1, ErrorKind::invalid_argument,
            "beta must lie in (alpha, 1)");
    require(std::isfinite(lambda) && lambda > 0 && std::isfinite(blow_time) && blow_time > 0,
            ErrorKind::invalid_argument, "lambda and T must be positive");
  }
};

/// Parameters with alpha = default_alpha(d) and beta = (1 + alpha)/2.
inline WeightedSpaceParams make_weighted_params(int d, double delta, double lambda,
                                                double blow_time) {
  WeightedSpaceParams p;
  p.delta = delta;
  p.alpha = default_alpha(d);
  p.beta = (1 + p.alpha) / 2;
  p.lambda = lambda;
  p.blow_time = blow_time;
  p.validate(d);
  return p;
}

/// delta_fit capped at the asymptotic decay rate D0 rho of the gluing
/// source. The fit window sees the extra decay from the flat inner edge of
/// the cutoff, so delta_fit alone can exceed the true rate and the weighted
/// source then grows without bound toward T.
inline double default_delta(const SourceDecayFit &fit, const GroundState &gs, double rho) {
  return std::min(fit.delta, gs.value_decay.rate * rho);
}

/// exp(x) * v computed in steps so that a huge weight times an underflowed
/// value gives 0 rather than inf * 0.
inline double scaled_exp(double x, double v) {
  if (v == 0)
    return 0;
  while (x > 600) {
    v *= std::exp(600.0);
    x -= 600;
    if (!std::isfinite(v))
      return v;
  }
  return v * std::exp(x);
}

/// Nodes 0 = s_0 < s_1 < ... < s_M < T with T - s_n shrinking geometrically.
/// The last node is the cutoff exp(-alpha delta sigma) = 1e-300; the state
/// there and the integral beyond it are taken to be 0.
struct TimeMesh {
  std::vector<double> nodes;
  double blow_time = 1.0;
  double grading_ratio = 0.9;

  std::size_t size() const { return nodes.size(); }
  std::size_t last() const { return nodes.size() - 1; }
  double tau(std::size_t m) const { return blow_time - nodes[m]; }

  std::size_t index_of(double t) const {
    const double tol = 1e-13 * blow_time;
    auto it = std::lower_bound(nodes.begin(), nodes.end(), t - tol);
    require(it != nodes.end() && std::abs(*it - t) <= tol, ErrorKind::invalid_argument,
            "time " + std::to_string(t) + " is not a mesh node");
    return static_cast<std::size_t>(it - nodes.begin());
  }

  static double cutoff_tau(const WeightedSpaceParams &p) {
    return p.alpha * p.delta / (p.lambda * std::log(1e300));
  }

  /// Ratio-graded mesh; the ratio is raised slightly so the cutoff is hit
  /// exactly. `extra` times in (0, T - cutoff) are inserted as nodes.
  static TimeMesh graded(const WeightedSpaceParams &p, double ratio,
                         const std::vector<double> &extra = {}) {
    require(ratio > 0 && ratio < 1, ErrorKind::invalid_argument,
            "grading ratio must lie in (0, 1)");
    const double tc = cutoff_tau(p);
    require(tc < p.blow_time, ErrorKind::invalid_argument,
            "cutoff lies before t = 0; increase lambda T");
    const int M = std::max(3, static_cast<int>(std::ceil(std::log(tc / p.blow_time) /
                                                         std::log(ratio))));
    return with_size(p, M, extra);
  }

  static TimeMesh with_size(const WeightedSpaceParams &p, int M,
                            const std::vector<double> &extra = {}) {
    require(M >= 3, ErrorKind::invalid_argument, "time mesh needs at least 3 intervals");
    const double T = p.blow_time, tc = cutoff_tau(p);
    require(tc < T, ErrorKind::invalid_argument, "cutoff lies before t = 0; increase lambda T");
    TimeMesh mesh;
    mesh.blow_time = T;
    mesh.grading_ratio = std::pow(tc / T, 1.0 / M);
    for (int n = 0; n <= M; ++n)
      mesh.nodes.push_back(n == M ? T - tc : T - T * std::pow(mesh.grading_ratio, n));
    mesh.nodes[0] = 0.0;
    for (double t : extra) {
      require(t > 0 && t < T - tc, ErrorKind::invalid_argument,
              "extra mesh time outside (0, T - cutoff)");
      auto it = std::lower_bound(mesh.nodes.begin(), mesh.nodes.end(), t);
      // An interior node closer than a quarter interval is moved onto t, so
      // the interpolation stencils never see nearly coincident nodes.
      auto near = std::abs(*it - t) < std::abs(*(it - 1) - t) ? it : it - 1;
      const double gap = std::abs(*near - t);
      const double width = *it - *(it - 1);
      const bool interior = near != mesh.nodes.begin() && near + 1 != mesh.nodes.end();
      if (gap <= 1e-13 * T)
        continue;
      if (interior && gap < 0.25 * width)
        *near = t;
      else
        mesh.nodes.insert(it, t);
    }
    return mesh;
  }
};

namespace detail {

inline const std::array<std::array<double, 16>, 2> &gauss16() {
  static const std::array<std::array<double, 16>, 2> g = [] {
    std::array<std::array<double, 16>, 2> out{};
    // Newton iteration on Legendre P_16.
    const int n = 16;
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        const double dp = n * (x * p1 - p0) / (x * x - 1);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16)
          break;
      }
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1);
      out[0][i] = x;
      out[1][i] = 2 / ((1 - x * x) * dp * dp);
    }
    return out;
  }();
  return g;
}

} // namespace detail

/// Quadrature for the weighted Duhamel integral on a fixed mesh.
///
/// apply_all(source) returns, for every node m,
///     out_m = e^{kappa sigma_m} i int_{s_m}^{s_M} e^{i(s_m - s) Laplacian} F(s) ds,
/// where source(l) must return e^{kappa sigma_l} F(s_l).
class DuhamelQuadrature {
public:
  /// `points` is the interpolation stencil width (even, 2 to 8).
  DuhamelQuadrature(TimeMesh mesh, double kappa, double lambda, bool carrier, int points = 6)
      : mesh_(std::move(mesh)), kappa_(kappa), lambda_(lambda), carrier_(carrier),
        points_(points) {
    require(points_ >= 2 && points_ <= 8 && points_ % 2 == 0, ErrorKind::invalid_argument,
            "stencil width must be 2, 4, 6 or 8");
    require(mesh_.size() > static_cast<std::size_t>(points_), ErrorKind::invalid_argument, "mesh too small for quadrature");
    require(kappa_ >= 0 && lambda_ > 0, ErrorKind::invalid_argument,
            "quadrature needs kappa >= 0 and lambda > 0");
    build_weights();
  }

  const TimeMesh &mesh() const { return mesh_; }
  double kappa() const { return kappa_; }
  bool carrier() const { return carrier_; }

  double sigma(double s) const { return 1.0 / (lambda_ * (mesh_.blow_time - s)); }
  double omega(double s) const {
    return carrier_ ? 1.0 / (lambda_ * lambda_ * (mesh_.blow_time - s)) : 0.0;
  }

  int points() const { return points_; }

  /// First node of the stencil used on interval j.
  std::size_t stencil_start(std::size_t j) const {
    const std::size_t M = mesh_.last(), back = points_ / 2 - 1;
    const std::size_t s = j < back ? 0 : j - back;
    return std::min(s, M + 1 - points_);
  }

  template <class Source>
  std::vector<Field> apply_all(Source &&source, const DomainSpec &dom) const {
    return run(std::forward<Source>(source), dom, 0);
  }

  /// Same as apply_all but only node m is returned; sources for nodes
  /// before the stencil of interval m are never requested.
  template <class Source>
  Field apply_at(std::size_t m, Source &&source, const DomainSpec &dom) const {
    require(m < mesh_.size(), ErrorKind::invalid_argument, "mesh index out of range");
    auto all = run(std::forward<Source>(source), dom, m);
    return std::move(all[m]);
  }

  /// Scalar weights: integral over [s_m, T) of f(s) for weighted samples
  /// f_l e^{kappa sigma_l}; used by tests of the quadrature itself.
  std::vector<Complex> scalar_integrals(const std::vector<Complex> &weighted) const {
    const std::size_t M = mesh_.last();
    std::vector<Complex> out(M + 1);
    Complex acc{};
    for (std::size_t jj = M; jj-- > 0;) {
      acc *= decay_[jj];
      const std::size_t s0 = stencil_start(jj);
      for (int l = 0; l < points_; ++l)
        acc += weights_[jj][l] * weighted[s0 + l] * std::polar(1.0, -omega(mesh_.nodes[s0 + l]));
      out[jj] = acc;
    }
    return out;
  }

private:
  TimeMesh mesh_;
  double kappa_, lambda_;
  bool carrier_;
  int points_;
  // weights_[j][l] = int_{s_j}^{s_j+1} L_l(s) e^{-kappa (sigma(s) - sigma_j) + i omega(s)} ds
  std::vector<std::array<Complex, 8>> weights_;
  // e^{-kappa (sigma_{j+1} - sigma_j)}
  std::vector<double> decay_;

  void build_weights() {
    const auto &s = mesh_.nodes;
    const std::size_t M = mesh_.last();
    weights_.assign(M, {});
    decay_.assign(M, 0.0);
    const auto &g = detail::gauss16();
    for (std::size_t j = 0; j < M; ++j) {
      const double a = s[j], b = s[j + 1];
      const double sa = sigma(a), sb = sigma(b);
      decay_[j] = std::exp(-kappa_ * (sb - sa));
      const std::size_t s0 = stencil_start(j);
      std::array<double, 8> xs{};
      for (int l = 0; l < points_; ++l)
        xs[l] = s[s0 + l];
      const double variation = kappa_ * (sb - sa) + std::abs(omega(b) - omega(a));
      const int pieces = 1 + static_cast<int>(std::ceil(variation / 2.0));
      std::array<Complex, 8> w{};
      for (int p = 0; p < pieces; ++p) {
        const double pa = a + (b - a) * p / pieces, pb = a + (b - a) * (p + 1) / pieces;
        const double mid = 0.5 * (pa + pb), half = 0.5 * (pb - pa);
        for (int q = 0; q < 16; ++q) {
          const double x = mid + half * g[0][q];
          const double env = std::exp(-kappa_ * (sigma(x) - sa));
          if (env == 0)
            continue;
          const Complex f = half * g[1][q] * env * std::polar(1.0, omega(x));
          for (int l = 0; l < points_; ++l) {
            double basis = 1;
            for (int k = 0; k < points_; ++k)
              if (k != l)
                basis *= (x - xs[k]) / (xs[l] - xs[k]);
            w[l] += basis * f;
          }
        }
      }
      weights_[j] = w;
    }
  }

  template <class Source>
  std::vector<Field> run(Source &&source, const DomainSpec &dom, std::size_t first) const {
    const std::size_t M = mesh_.last();
    const auto mu = laplacian_eigenvalues(dom);
    std::vector<Field> out(M + 1);
    out[M] = Field(dom, mesh_.nodes[M]);
    // Interaction-picture coefficients of the sources, computed lazily from
    // the end of the mesh and dropped once no stencil needs them.
    std::map<std::size_t, std::vector<Complex>> cache;
    auto coefficients = [&](std::size_t l) -> const std::vector<Complex> & {
      auto it = cache.find(l);
      if (it != cache.end())
        return it->second;
      Field f = source(l);
      require(f.domain == dom, ErrorKind::shape_mismatch, "source on the wrong grid");
      const double sl = mesh_.nodes[l];
      if (carrier_)
        f *= std::polar(1.0, -omega(sl));
      auto c = transform(f);
      for (std::size_t k = 0; k < mu.size(); ++k)
        c.coefficients[k] *= std::polar(1.0, sl * mu[k]);
      return cache.emplace(l, std::move(c.coefficients)).first->second;
    };
    std::vector<Complex> acc(dom.size(), Complex{});
    for (std::size_t j = M; j-- > first;) {
      const double dj = decay_[j];
      for (auto &z : acc)
        z *= dj;
      const std::size_t s0 = stencil_start(j);
      for (int l = 0; l < points_; ++l) {
        const auto &c = coefficients(s0 + l);
        const Complex w = weights_[j][l];
        for (std::size_t k = 0; k < acc.size(); ++k)
          acc[k] += w * c[k];
      }
      for (auto it = cache.begin(); it != cache.end();) {
        if (it->first >= s0 + points_)
          it = cache.erase(it);
        else
          ++it;
      }
      const double sj = mesh_.nodes[j];
      SpectralCoefficients c{dom, acc};
      for (std::size_t k = 0; k < mu.size(); ++k)
        c.coefficients[k] *= Complex(0, 1) * std::polar(1.0, -sj * mu[k]);
      out[j] = inverse_transform(c, sj);
    }
    for (std::size_t j = 0; j < first; ++j)
      out[j] = Field(dom, mesh_.nodes[j]);
    return out;
  }
};

/// Plain Duhamel integral i int_t^T e^{i(t-s) Laplacian} F(s) ds at a mesh
/// node, with unweighted sources and no carrier.
inline Field duhamel(const std::function<Field(double)> &source_at, double t,
                     const TimeMesh &mesh, const DomainSpec &dom) {
  const std::size_t m = mesh.index_of(t);
  DuhamelQuadrature q(mesh, 0.0, 1.0, false);
  return q.apply_at(m, [&](std::size_t l) { return source_at(mesh.nodes[l]); }, dom);
}

/// Precomputed profile samples for the remainder problem on one mesh.
struct RemainderProblem {
  BubbleConfig bubbles;
  const GroundState *ground_state = nullptr;
  WeightedSpaceParams params;
  DomainSpec domain;
  TimeMesh mesh;
  std::vector<Field> profile;        // r(s_m)
  std::vector<Field> weighted_s0;    // e^{delta sigma_m} S0(s_m)
  std::vector<double> sigma;         // 1/(lambda (T - s_m))

  static RemainderProblem build(const BubbleConfig &cfg, const GroundState &gs,
                                const WeightedSpaceParams &params, const TimeMesh &mesh,
                                const DomainSpec &dom) {
    require(std::abs(cfg.lambda - params.lambda) <= 1e-15 * params.lambda &&
                std::abs(cfg.blow_time - params.blow_time) <= 1e-15 * params.blow_time &&
                std::abs(mesh.blow_time - params.blow_time) <= 1e-15 * params.blow_time,
            ErrorKind::invalid_argument, "bubble, weight and mesh parameters disagree");
    params.validate(dom.dimension);
    validate(cfg, dom);
    RemainderProblem pb;
    pb.bubbles = cfg;
    pb.ground_state = &gs;
    pb.params = params;
    pb.domain = dom;
    pb.mesh = mesh;
    const std::size_t n = mesh.size();
    pb.profile.resize(n);
    pb.weighted_s0.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
      const double s = mesh.nodes[m];
      const double sig = params.inverse_scale(s);
      pb.sigma.push_back(sig);
      if (cfg.count() == 0) {
        pb.profile[m] = Field(dom, s);
        pb.weighted_s0[m] = Field(dom, s);
        continue;
      }
      pb.profile[m] = glued_profile(cfg, gs, s, dom);
      Field s0 = source_S0(cfg, gs, s, dom);
      for (auto &z : s0.values)
        z = Complex(scaled_exp(params.delta * sig, z.real()),
                    scaled_exp(params.delta * sig, z.imag()));
      require(s0.all_finite(), ErrorKind::numerical,
              "weighted gluing source overflowed: delta exceeds its decay rate");
      pb.weighted_s0[m] = std::move(s0);
    }
    return pb;
  }
};

/// Weighted trajectory w_m = e^{delta sigma_m} u(s_m) with its diagnostics.
struct RemainderTrajectory {
  std::vector<Field> weighted;
  /// sup_m e^{delta sigma_m} ||u(s_m)||_L2
  double weighted_sup_l2 = 0;
  /// sup_m e^{alpha delta sigma_m} ||u(s_m)||_H2
  double weighted_sup_h2 = 0;
  /// Slope of -ln ||u||_H2 against sigma.
  double gamma_fit = 0;
  double gamma_r2 = 0;
  /// ln ||u(s_m)||_L2 and ln ||u(s_m)||_H2 (-inf where u = 0).
  std::vector<double> log_l2;
  std::vector<double> log_h2;

  bool in_E_T() const { return weighted_sup_l2 + weighted_sup_h2 <= 1.0; }

  /// u(s_m) itself; may underflow to 0 late in the mesh.
  Field state(const RemainderProblem &pb, std::size_t m) const {
    Field f = weighted[m];
    const double sig = pb.sigma[m];
    for (auto &z : f.values)
      z = Complex(scaled_exp(-pb.params.delta * sig, z.real()),
                  scaled_exp(-pb.params.delta * sig, z.imag()));
    return f;
  }
};

inline RemainderTrajectory zero_trajectory(const RemainderProblem &pb) {
  RemainderTrajectory u;
  for (double s : pb.mesh.nodes)
    u.weighted.emplace_back(pb.domain, s);
  u.log_l2.assign(pb.mesh.size(), -std::numeric_limits<double>::infinity());
  u.log_h2 = u.log_l2;
  return u;
}

/// Fills the weighted sups, per-node log norms and the gamma fit.
inline void measure(const RemainderProblem &pb, RemainderTrajectory &u) {
  const std::size_t n = u.weighted.size();
  u.log_l2.assign(n, -std::numeric_limits<double>::infinity());
  u.log_h2 = u.log_l2;
  u.weighted_sup_l2 = u.weighted_sup_h2 = 0;
  std::vector<double> xs, ys;
  const double dl = pb.params.delta, al = pb.params.alpha;
  for (std::size_t m = 0; m < n; ++m) {
    const auto nm = norms(u.weighted[m]);
    const double sig = pb.sigma[m];
    u.weighted_sup_l2 = std::max(u.weighted_sup_l2, nm.l2);
    if (nm.h2 > 0)
      u.weighted_sup_h2 =
          std::max(u.weighted_sup_h2, scaled_exp((al - 1) * dl * sig, nm.h2));
    if (nm.l2 > 0) {
      u.log_l2[m] = std::log(nm.l2) - dl * sig;
      u.log_h2[m] = std::log(nm.h2) - dl * sig;
      if (m + 1 < n) {
        xs.push_back(sig);
        ys.push_back(u.log_h2[m]);
      }
    }
  }
  if (xs.size() >= 2) {
    const auto f = fit_line(xs, ys);
    u.gamma_fit = -f.slope;
    u.gamma_r2 = f.r2;
  } else {
    u.gamma_fit = 0;
    u.gamma_r2 = 0;
  }
}

/// Phi(u) for a weighted trajectory u on the problem's mesh.
inline RemainderTrajectory apply_Phi(const RemainderTrajectory &u, const RemainderProblem &pb,
                                     const DuhamelQuadrature &quad) {
  require(u.weighted.size() == pb.mesh.size(), ErrorKind::shape_mismatch,
          "trajectory and mesh differ in length");
  const double a = 4.0 / pb.domain.dimension;
  auto source = [&](std::size_t l) {
    const double eps = std::exp(-pb.params.delta * pb.sigma[l]);
    Field f = pb.weighted_s0[l];
    const Field &r = pb.profile[l];
    const Field &w = u.weighted[l];
    parallel_for(f.size(), [&](std::size_t i) {
      if (w.values[i] != Complex{})
        f.values[i] -= scaled_nonlinear_difference(r.values[i], w.values[i], eps, a);
    });
    return f;
  };
  RemainderTrajectory out;
  out.weighted = quad.apply_all(source, pb.domain);
  measure(pb, out);
  return out;
}

/// d(u, v) = sup_m e^{delta sigma_m} ||u(s_m) - v(s_m)||_L2.
inline double weighted_distance(const RemainderTrajectory &u, const RemainderTrajectory &v) {
  require(u.weighted.size() == v.weighted.size(), ErrorKind::shape_mismatch,
          "trajectories live on different meshes");
  double d = 0;
  for (std::size_t m = 0; m < u.weighted.size(); ++m) {
    require(u.weighted[m].time_stamp == v.weighted[m].time_stamp, ErrorKind::shape_mismatch,
            "trajectories live on different meshes");
    d = std::max(d, l2_norm(u.weighted[m] - v.weighted[m]));
  }
  return d;
}

struct FixedPointResult {
  RemainderTrajectory trajectory;
  double contraction_factor = 0;
  int iterations = 0;
  /// d(u^{n+1}, u^n) for every iteration.
  std::vector<double> distances;
  /// weighted_sup_l2 + weighted_sup_h2 of every iterate.
  std::vector<double> membership;
  /// First iterate outside the unit ball of the weighted space, or -1.
  int left_E_T_at = -1;
  /// d(u, Phi(u)) for the returned u.
  double residual = 0;
};

inline FixedPointResult fixed_point(const RemainderProblem &pb, double tol, int max_iter,
                                    const std::function<void(int, double)> &progress = {},
                                    int quadrature_points = 6) {
  require(tol >= 1e-12 && tol <= 1e-4, ErrorKind::invalid_argument,
          "fixed point tolerance must lie in [1e-12, 1e-4]");
  require(max_iter >= 1, ErrorKind::invalid_argument, "max_iter must be positive");
  const DuhamelQuadrature quad(pb.mesh, pb.params.delta, pb.params.lambda, true,
                               quadrature_points);
  FixedPointResult res;
  RemainderTrajectory u = zero_trajectory(pb);
  int growing = 0;
  for (int n = 1; n <= max_iter; ++n) {
    RemainderTrajectory next = apply_Phi(u, pb, quad);
    const double d = weighted_distance(next, u);
    require(std::isfinite(d), ErrorKind::numerical, "Picard iterate is not finite");
    res.distances.push_back(d);
    res.membership.push_back(next.weighted_sup_l2 + next.weighted_sup_h2);
    if (res.left_E_T_at < 0 && !next.in_E_T())
      res.left_E_T_at = n;
    res.iterations = n;
    if (progress)
      progress(n, d);
    if (res.distances.size() >= 2) {
      const double prev = res.distances[res.distances.size() - 2];
      res.contraction_factor = prev > 0 ? d / prev : 0;
      growing = res.contraction_factor >= 1 ? growing + 1 : 0;
      if (growing >= 3)
        fail(ErrorKind::numerical, "not contracting: increase lambda or decrease T");
    }
    u = std::move(next);
    if (d < tol)
      break;
  }
  require(res.distances.back() < tol, ErrorKind::numerical,
          "Picard iteration did not reach the tolerance within max_iter");
  const RemainderTrajectory check = apply_Phi(u, pb, quad);
  res.residual = weighted_distance(check, u);
  res.trajectory = std::move(u);
  return res;
}

inline nlohmann::json remainder_report(const RemainderProblem &pb, const FixedPointResult &r) {
  nlohmann::json j;
  j["delta"] = pb.params.delta;
  j["alpha"] = pb.params.alpha;
  j["beta"] = pb.params.beta;
  j["lambda"] = pb.params.lambda;
  j["T"] = pb.params.blow_time;
  j["contraction_factor"] = r.contraction_factor;
  j["gamma_fit"] = r.trajectory.gamma_fit;
  j["gamma_r2"] = r.trajectory.gamma_r2;
  j["weighted_sups"] = {{"l2", r.trajectory.weighted_sup_l2},
                        {"h2", r.trajectory.weighted_sup_h2}};
  j["in_E_T"] = r.trajectory.in_E_T();
  j["left_E_T_at"] = r.left_E_T_at;
  j["iterations"] = r.iterations;
  j["distances"] = r.distances;
  j["residual"] = r.residual;
  j["mesh"] = {{"nodes", pb.mesh.size()}, {"grading_ratio", pb.mesh.grading_ratio}};
  return j;
}

} // namespace nlslab
