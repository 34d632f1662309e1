#pragma once

// Grids, grid functions and the trigonometric machinery behind them.
//
// A Dirichlet rectangle (0,L_1)x...x(0,L_d) is sampled at the interior points
// x_j = j L/(n+1), j = 1..n, and expanded in the sine eigenbasis of the
// Dirichlet Laplacian:
//
//     f(x) = sum_k c_k prod_i sin(pi k_i x_i / L_i),   k_i = 1..n_i.
//
// The periodic torus is sampled at x_j = j L/n and expanded in exp(2 pi i k x/L).
// Quadrature is the grid Riemann sum, for which the discrete bases are exactly
// orthogonal, so Parseval holds to roundoff:
//
//     ||f||^2 = h_1...h_d sum_j |f_j|^2 = W sum_k |c_k|^2,
//
// with W = prod L_i/2 (Dirichlet) or W = vol (torus).

#include "nlslab/error.hpp"
#include "nlslab/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace nlslab {

using Complex = std::complex<double>;
using Point = std::array<double, 3>;

enum class BoundaryKind { dirichlet_rectangle, periodic_torus };

inline std::string to_string(BoundaryKind kind) {
  return kind == BoundaryKind::dirichlet_rectangle ? "dirichlet_rectangle"
                                                   : "periodic_torus";
}

inline BoundaryKind boundary_kind_from_string(const std::string &s) {
  if (s == "dirichlet_rectangle")
    return BoundaryKind::dirichlet_rectangle;
  if (s == "periodic_torus")
    return BoundaryKind::periodic_torus;
  fail(ErrorKind::invalid_argument, "unknown domain kind '" + s + "'");
}

namespace detail {
inline bool has_small_prime_factors(int m) {
  for (int p : {2, 3, 5, 7})
    while (m > 1 && m % p == 0)
      m /= p;
  return m == 1;
}
} // namespace detail

/// Axis-aligned rectangle (or flat torus) with its sampling grid.
/// Unused axes carry side length 1 and a single grid point.
struct DomainSpec {
  int dimension = 1;
  BoundaryKind kind = BoundaryKind::dirichlet_rectangle;
  std::array<double, 3> side_lengths{1.0, 1.0, 1.0};
  std::array<int, 3> grid_points{1, 1, 1};

  static DomainSpec make(BoundaryKind kind, std::span<const double> lengths,
                         std::span<const int> points) {
    require(lengths.size() == points.size(), ErrorKind::shape_mismatch,
            "side_lengths and grid_points must have the same length");
    require(lengths.size() >= 1 && lengths.size() <= 3,
            ErrorKind::invalid_argument, "dimension must be 1, 2 or 3");
    DomainSpec dom;
    dom.dimension = static_cast<int>(lengths.size());
    dom.kind = kind;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      dom.side_lengths[i] = lengths[i];
      dom.grid_points[i] = points[i];
    }
    dom.validate();
    return dom;
  }

  static DomainSpec dirichlet(std::initializer_list<double> lengths,
                              std::initializer_list<int> points) {
    return make(BoundaryKind::dirichlet_rectangle,
                std::span(lengths.begin(), lengths.size()),
                std::span(points.begin(), points.size()));
  }

  static DomainSpec torus(std::initializer_list<double> lengths,
                          std::initializer_list<int> points) {
    return make(BoundaryKind::periodic_torus,
                std::span(lengths.begin(), lengths.size()),
                std::span(points.begin(), points.size()));
  }

  void validate() const {
    require(dimension >= 1 && dimension <= 3, ErrorKind::invalid_argument,
            "dimension must be 1, 2 or 3");
    for (int i = 0; i < dimension; ++i) {
      require(std::isfinite(side_lengths[i]) && side_lengths[i] > 0,
              ErrorKind::invalid_argument, "side lengths must be positive");
      const int n = grid_points[i];
      require(n >= 8, ErrorKind::invalid_argument,
              "each axis needs at least 8 grid points");
      const int m = is_dirichlet() ? n + 1 : n;
      require(detail::has_small_prime_factors(m), ErrorKind::invalid_argument,
              "grid size " + std::to_string(n) + (is_dirichlet() ? "+1" : "") +
                  " must factor into 2, 3, 5, 7");
    }
    for (int i = dimension; i < 3; ++i)
      require(grid_points[i] == 1, ErrorKind::invalid_argument,
              "unused axes must have a single grid point");
  }

  bool is_dirichlet() const { return kind == BoundaryKind::dirichlet_rectangle; }

  std::size_t size() const {
    return static_cast<std::size_t>(grid_points[0]) * grid_points[1] *
           grid_points[2];
  }

  double spacing(int axis) const {
    return side_lengths[axis] /
           (is_dirichlet() ? grid_points[axis] + 1 : grid_points[axis]);
  }

  double coordinate(int axis, int j) const {
    return is_dirichlet() ? (j + 1) * spacing(axis) : j * spacing(axis);
  }

  double cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < dimension; ++i)
      v *= spacing(i);
    return v;
  }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < dimension; ++i)
      v *= side_lengths[i];
    return v;
  }

  /// W in ||f||^2 = W sum |c_k|^2.
  double coefficient_weight() const {
    double w = 1.0;
    for (int i = 0; i < dimension; ++i)
      w *= is_dirichlet() ? side_lengths[i] / 2 : side_lengths[i];
    return w;
  }

  std::array<int, 3> unflatten(std::size_t flat) const {
    const int j2 = static_cast<int>(flat % grid_points[2]);
    flat /= grid_points[2];
    const int j1 = static_cast<int>(flat % grid_points[1]);
    const int j0 = static_cast<int>(flat / grid_points[1]);
    return {j0, j1, j2};
  }

  Point point(std::size_t flat) const {
    const auto j = unflatten(flat);
    Point x{0.0, 0.0, 0.0};
    for (int i = 0; i < dimension; ++i)
      x[i] = coordinate(i, j[i]);
    return x;
  }

  /// Distance from x to the boundary of the rectangle (infinite on a torus).
  double distance_to_boundary(const Point &x) const {
    if (!is_dirichlet())
      return std::numeric_limits<double>::infinity();
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dimension; ++i)
      d = std::min({d, x[i], side_lengths[i] - x[i]});
    return d;
  }

  bool operator==(const DomainSpec &) const = default;
};

inline double distance(const Point &a, const Point &b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Complex grid function. Dirichlet fields store interior values only.
struct Field {
  DomainSpec domain;
  double time_stamp = 0.0;
  std::vector<Complex> values;

  Field() = default;
  Field(DomainSpec dom, double t)
      : domain(dom), time_stamp(t), values(dom.size(), Complex{}) {}
  Field(DomainSpec dom, double t, std::vector<Complex> v)
      : domain(dom), time_stamp(t), values(std::move(v)) {
    require(values.size() == domain.size(), ErrorKind::shape_mismatch,
            "field value count does not match the grid");
  }

  static Field zeros(const DomainSpec &dom, double t = 0.0) {
    return Field(dom, t);
  }

  template <class Fn>
  static Field sample(const DomainSpec &dom, double t, Fn &&fn) {
    Field f(dom, t);
    parallel_for(f.values.size(), [&](std::size_t i) {
      f.values[i] = Complex(fn(dom.point(i)));
    });
    return f;
  }

  std::size_t size() const { return values.size(); }
  Complex &operator[](std::size_t i) { return values[i]; }
  const Complex &operator[](std::size_t i) const { return values[i]; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](const Complex &z) {
      return std::isfinite(z.real()) && std::isfinite(z.imag());
    });
  }

  Field &operator+=(const Field &o) {
    check_same_grid(o);
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] += o.values[i];
    return *this;
  }
  Field &operator-=(const Field &o) {
    check_same_grid(o);
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] -= o.values[i];
    return *this;
  }
  Field &operator*=(Complex a) {
    for (auto &v : values)
      v *= a;
    return *this;
  }

  friend Field operator+(Field a, const Field &b) { return a += b; }
  friend Field operator-(Field a, const Field &b) { return a -= b; }
  friend Field operator*(Complex s, Field a) { return a *= s; }
  friend Field operator*(Field a, Complex s) { return a *= s; }

  void check_same_grid(const Field &o) const {
    require(domain == o.domain, ErrorKind::shape_mismatch,
            "fields live on different grids");
  }
};

/// Mode amplitudes. Dirichlet: index k_i - 1 row-major. Torus: FFT order.
struct SpectralCoefficients {
  DomainSpec domain;
  std::vector<Complex> coefficients;
};

struct Norms {
  double l2 = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  double linf = 0.0;
};

namespace detail {

inline std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanKey {
  int tag; // 0: r2r, 1: dft forward, 2: dft backward
  int rank;
  std::array<int, 3> n;
  std::array<int, 3> kinds;
  auto tie() const { return std::tie(tag, rank, n, kinds); }
  bool operator<(const PlanKey &o) const { return tie() < o.tie(); }
};

/// Plans are created once per shape under a lock and then executed through the
/// thread-safe new-array interface.
inline fftw_plan cached_plan(const PlanKey &key) {
  std::lock_guard lock(fftw_planner_mutex());
  static std::map<PlanKey, fftw_plan> plans;
  if (auto it = plans.find(key); it != plans.end())
    return it->second;
  std::size_t total = 1;
  for (int i = 0; i < key.rank; ++i)
    total *= static_cast<std::size_t>(key.n[i]);
  std::vector<Complex> scratch(total);
  auto *data = reinterpret_cast<double *>(scratch.data());
  fftw_plan plan = nullptr;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  if (key.tag == 0) {
    std::array<fftw_r2r_kind, 3> kinds{};
    for (int i = 0; i < key.rank; ++i)
      kinds[i] = static_cast<fftw_r2r_kind>(key.kinds[i]);
    // Real and imaginary parts are two interleaved real transforms.
    plan = fftw_plan_many_r2r(key.rank, key.n.data(), 2, data, nullptr, 2, 1,
                              data, nullptr, 2, 1, kinds.data(), flags);
  } else {
    auto *c = reinterpret_cast<fftw_complex *>(scratch.data());
    plan = fftw_plan_many_dft(key.rank, key.n.data(), 1, c, nullptr, 1, 0, c,
                              nullptr, 1, 0,
                              key.tag == 1 ? FFTW_FORWARD : FFTW_BACKWARD,
                              flags);
  }
  require(plan != nullptr, ErrorKind::numerical, "FFTW planning failed");
  plans.emplace(key, plan);
  return plan;
}

inline void r2r_inplace(std::vector<Complex> &buf, int rank,
                        std::array<int, 3> n, std::array<int, 3> kinds) {
  fftw_plan p = cached_plan(PlanKey{0, rank, n, kinds});
  auto *data = reinterpret_cast<double *>(buf.data());
  fftw_execute_r2r(p, data, data);
}

inline void dft_inplace(std::vector<Complex> &buf, int rank,
                        std::array<int, 3> n, bool forward) {
  fftw_plan p = cached_plan(PlanKey{forward ? 1 : 2, rank, n, {0, 0, 0}});
  auto *c = reinterpret_cast<fftw_complex *>(buf.data());
  fftw_execute_dft(p, c, c);
}

/// Signed wavenumber index of FFT bin j on an n-point periodic axis.
inline int torus_wavenumber(int j, int n) { return j <= n / 2 ? j : j - n; }

/// Physical wavenumber of mode index j along an axis.
inline double axis_wavenumber(const DomainSpec &dom, int axis, int j) {
  const double L = dom.side_lengths[axis];
  if (dom.is_dirichlet())
    return std::numbers::pi * (j + 1) / L;
  return 2.0 * std::numbers::pi * torus_wavenumber(j, dom.grid_points[axis]) /
         L;
}

template <class Fn> void for_each_mode(const DomainSpec &dom, Fn &&fn) {
  const auto &n = dom.grid_points;
  std::size_t flat = 0;
  for (int a = 0; a < n[0]; ++a)
    for (int b = 0; b < n[1]; ++b)
      for (int c = 0; c < n[2]; ++c, ++flat)
        fn(flat, std::array<int, 3>{a, b, c});
}

} // namespace detail

/// Eigenvalue mu_k of -Laplacian for every stored mode.
inline std::vector<double> laplacian_eigenvalues(const DomainSpec &dom) {
  std::vector<double> mu(dom.size());
  detail::for_each_mode(dom, [&](std::size_t flat, std::array<int, 3> j) {
    double s = 0.0;
    for (int i = 0; i < dom.dimension; ++i) {
      const double k = detail::axis_wavenumber(dom, i, j[i]);
      s += k * k;
    }
    mu[flat] = s;
  });
  return mu;
}

inline SpectralCoefficients transform(const Field &f) {
  const DomainSpec &dom = f.domain;
  require(f.values.size() == dom.size(), ErrorKind::shape_mismatch,
          "field does not match its domain");
  SpectralCoefficients out{dom, f.values};
  const int d = dom.dimension;
  double scale = 1.0;
  if (dom.is_dirichlet()) {
    detail::r2r_inplace(out.coefficients, d, dom.grid_points,
                        {FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00});
    for (int i = 0; i < d; ++i)
      scale /= dom.grid_points[i] + 1;
  } else {
    detail::dft_inplace(out.coefficients, d, dom.grid_points, true);
    scale /= static_cast<double>(dom.size());
  }
  for (auto &c : out.coefficients)
    c *= scale;
  return out;
}

inline Field inverse_transform(const SpectralCoefficients &c,
                               double time_stamp = 0.0) {
  const DomainSpec &dom = c.domain;
  require(c.coefficients.size() == dom.size(), ErrorKind::shape_mismatch,
          "coefficient count does not match the domain");
  std::vector<Complex> v = c.coefficients;
  const int d = dom.dimension;
  if (dom.is_dirichlet()) {
    detail::r2r_inplace(v, d, dom.grid_points,
                        {FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00});
    const double scale = std::pow(0.5, d);
    for (auto &z : v)
      z *= scale;
  } else {
    detail::dft_inplace(v, d, dom.grid_points, false);
  }
  return Field(dom, time_stamp, std::move(v));
}

/// W sum |c_k|^2 w_k, the quadrature-consistent weighted coefficient sum.
inline double coefficient_norm_sq(const SpectralCoefficients &c) {
  double s = 0.0;
  for (const auto &z : c.coefficients)
    s += std::norm(z);
  return s * c.domain.coefficient_weight();
}

/// Multiplies every mode by exp(-i dt mu_k), i.e. applies exp(i dt Laplacian).
inline void propagate_coefficients(SpectralCoefficients &c, double dt) {
  require(std::isfinite(dt), ErrorKind::invalid_argument,
          "propagation time must be finite");
  if (dt == 0.0)
    return;
  const auto mu = laplacian_eigenvalues(c.domain);
  for (std::size_t i = 0; i < mu.size(); ++i)
    c.coefficients[i] *= std::polar(1.0, -dt * mu[i]);
}

/// Exact free Schroedinger flow exp(i dt Laplacian) f.
inline Field propagate(const Field &f, double dt) {
  require(std::isfinite(dt), ErrorKind::invalid_argument,
          "propagation time must be finite");
  if (dt == 0.0) {
    Field g = f;
    return g;
  }
  auto c = transform(f);
  propagate_coefficients(c, dt);
  return inverse_transform(c, f.time_stamp + dt);
}

/// Grid function with mixed partial derivative of the given order per axis
/// (each 0, 1 or 2), evaluated spectrally at the grid points.
inline Field derivative(const Field &f, std::array<int, 3> orders) {
  const DomainSpec &dom = f.domain;
  const int d = dom.dimension;
  for (int i = 0; i < 3; ++i)
    require(orders[i] >= 0 && orders[i] <= 2 && (i < d || orders[i] == 0),
            ErrorKind::invalid_argument, "derivative orders must be 0..2");
  auto c = transform(f);

  if (!dom.is_dirichlet()) {
    detail::for_each_mode(dom, [&](std::size_t flat, std::array<int, 3> j) {
      Complex factor = 1.0;
      for (int i = 0; i < d; ++i) {
        if (orders[i] == 0)
          continue;
        const int n = dom.grid_points[i];
        const bool nyquist = n % 2 == 0 && j[i] == n / 2;
        const double k = detail::axis_wavenumber(dom, i, j[i]);
        if (orders[i] == 1)
          factor *= nyquist ? Complex{} : Complex(0.0, k);
        else
          factor *= -k * k;
      }
      c.coefficients[flat] *= factor;
    });
    return inverse_transform(c, f.time_stamp);
  }

  // Odd orders turn sin into cos along that axis. The cosine sum at the
  // interior points is a REDFT00 of size n+2 with zero end coefficients.
  std::array<int, 3> padded = dom.grid_points;
  std::array<int, 3> kinds{FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00};
  std::array<int, 3> shift{0, 0, 0};
  for (int i = 0; i < d; ++i) {
    if (orders[i] % 2 == 1) {
      padded[i] += 2;
      kinds[i] = FFTW_REDFT00;
      shift[i] = 1;
    }
  }
  const std::size_t total =
      static_cast<std::size_t>(padded[0]) * padded[1] * padded[2];
  std::vector<Complex> buf(total, Complex{});
  auto padded_index = [&](std::array<int, 3> j) {
    return (static_cast<std::size_t>(j[0] + shift[0]) * padded[1] +
            (j[1] + shift[1])) *
               padded[2] +
           (j[2] + shift[2]);
  };
  detail::for_each_mode(dom, [&](std::size_t flat, std::array<int, 3> j) {
    double factor = 1.0;
    for (int i = 0; i < d; ++i) {
      const double k = detail::axis_wavenumber(dom, i, j[i]);
      if (orders[i] == 1)
        factor *= k;
      else if (orders[i] == 2)
        factor *= -k * k;
    }
    buf[padded_index(j)] = c.coefficients[flat] * factor;
  });
  detail::r2r_inplace(buf, d, padded, kinds);
  Field out(dom, f.time_stamp);
  const double scale = std::pow(0.5, d);
  detail::for_each_mode(dom, [&](std::size_t flat, std::array<int, 3> j) {
    out.values[flat] = buf[padded_index(j)] * scale;
  });
  return out;
}

inline std::vector<Field> gradient(const Field &f) {
  std::vector<Field> g;
  for (int i = 0; i < f.domain.dimension; ++i) {
    std::array<int, 3> o{0, 0, 0};
    o[i] = 1;
    g.push_back(derivative(f, o));
  }
  return g;
}

inline Field laplacian(const Field &f) {
  auto c = transform(f);
  const auto mu = laplacian_eigenvalues(f.domain);
  for (std::size_t i = 0; i < mu.size(); ++i)
    c.coefficients[i] *= -mu[i];
  return inverse_transform(c, f.time_stamp);
}

inline double l2_norm_sq(const Field &f) {
  double s = 0.0;
  for (const auto &z : f.values)
    s += std::norm(z);
  return s * f.domain.cell_volume();
}

inline double l2_norm(const Field &f) { return std::sqrt(l2_norm_sq(f)); }

/// Grid quadrature of conj(f) g.
inline Complex l2_inner(const Field &f, const Field &g) {
  f.check_same_grid(g);
  Complex s{};
  for (std::size_t i = 0; i < f.size(); ++i)
    s += std::conj(f.values[i]) * g.values[i];
  return s * f.domain.cell_volume();
}

inline double linf_norm(const Field &f) {
  double m = 0.0;
  for (const auto &z : f.values)
    m = std::max(m, std::abs(z));
  return m;
}

inline double gradient_norm_sq(const Field &f) {
  const auto c = transform(f);
  const auto mu = laplacian_eigenvalues(f.domain);
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s += mu[i] * std::norm(c.coefficients[i]);
  return s * f.domain.coefficient_weight();
}

/// l2, h1 = (||f||^2 + ||grad f||^2)^(1/2), h2 = ||f|| + ||D^2 f|| and linf.
/// In both bases the Hessian's Frobenius L2 norm equals ||Laplacian f||.
inline Norms norms(const Field &f) {
  const auto c = transform(f);
  const auto mu = laplacian_eigenvalues(f.domain);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double a = std::norm(c.coefficients[i]);
    s0 += a;
    s1 += mu[i] * a;
    s2 += mu[i] * mu[i] * a;
  }
  const double w = f.domain.coefficient_weight();
  Norms n;
  n.l2 = std::sqrt(l2_norm_sq(f));
  n.h1 = std::sqrt(n.l2 * n.l2 + s1 * w);
  n.h2 = n.l2 + std::sqrt(s2 * w);
  n.linf = linf_norm(f);
  return n;
}

/// Fraction of L2 energy in the outer third of the spectrum along any axis.
inline double spectral_tail_fraction(const Field &f) {
  const auto c = transform(f);
  const DomainSpec &dom = f.domain;
  double total = 0.0, tail = 0.0;
  detail::for_each_mode(dom, [&](std::size_t flat, std::array<int, 3> j) {
    const double a = std::norm(c.coefficients[flat]);
    total += a;
    bool outer = false;
    for (int i = 0; i < dom.dimension; ++i) {
      const int n = dom.grid_points[i];
      if (dom.is_dirichlet())
        outer = outer || 3 * (j[i] + 1) > 2 * n;
      else
        outer = outer || 3 * std::abs(detail::torus_wavenumber(j[i], n)) > n;
    }
    if (outer)
      tail += a;
  });
  return total > 0.0 ? tail / total : 0.0;
}

/// Spectral interpolation onto another grid of the same rectangle: shared
/// modes are copied, the rest are zero.
inline Field resample(const Field &f, const DomainSpec &target) {
  const DomainSpec &src = f.domain;
  require(src.dimension == target.dimension && src.kind == target.kind &&
              src.side_lengths == target.side_lengths,
          ErrorKind::shape_mismatch, "resample needs the same rectangle");
  if (src == target)
    return f;
  const auto c = transform(f);
  SpectralCoefficients out{target,
                           std::vector<Complex>(target.size(), Complex{})};
  detail::for_each_mode(target, [&](std::size_t flat, std::array<int, 3> j) {
    std::array<int, 3> js{0, 0, 0};
    for (int i = 0; i < target.dimension; ++i) {
      const int ns = src.grid_points[i];
      const int nt = target.grid_points[i];
      if (target.is_dirichlet()) {
        if (j[i] >= ns)
          return;
        js[i] = j[i];
      } else {
        const int k = detail::torus_wavenumber(j[i], nt);
        if (2 * std::abs(k) >= ns || 2 * std::abs(k) >= nt)
          return; // drop Nyquist and unshared modes
        js[i] = k >= 0 ? k : k + ns;
      }
    }
    const std::size_t sflat =
        (static_cast<std::size_t>(js[0]) * src.grid_points[1] + js[1]) *
            src.grid_points[2] +
        js[2];
    out.coefficients[flat] = c.coefficients[sflat];
  });
  return inverse_transform(out, f.time_stamp);
}

} // namespace nlslab
