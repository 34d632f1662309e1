#pragma once

// Direct O(n^2) trigonometric sums, used as the reference for the FFT-backed
// transforms in the library.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using Complex = std::complex<double>;

/// Sine coefficients of interior samples f_j = f(j L/(n+1)), j = 1..n.
inline std::vector<Complex> sine_coefficients_1d(const std::vector<Complex> &f) {
  const int n = static_cast<int>(f.size());
  std::vector<Complex> c(n);
  for (int k = 1; k <= n; ++k) {
    Complex s{};
    for (int j = 1; j <= n; ++j)
      s += f[j - 1] * std::sin(std::numbers::pi * k * j / (n + 1));
    c[k - 1] = 2.0 * s / static_cast<double>(n + 1);
  }
  return c;
}

inline std::vector<Complex> sine_synthesis_1d(const std::vector<Complex> &c) {
  const int n = static_cast<int>(c.size());
  std::vector<Complex> f(n);
  for (int j = 1; j <= n; ++j) {
    Complex s{};
    for (int k = 1; k <= n; ++k)
      s += c[k - 1] * std::sin(std::numbers::pi * k * j / (n + 1));
    f[j - 1] = s;
  }
  return f;
}

} // namespace oracle
