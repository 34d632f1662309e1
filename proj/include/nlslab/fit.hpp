#pragma once

// Least-squares line fits used by the rate diagnostics.

#include "nlslab/error.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace nlslab {

struct LineFit {
  double slope = 0;
  double intercept = 0;
  /// Coefficient of determination.
  double r2 = 0;
};

inline LineFit fit_line(const std::vector<double> &x, const std::vector<double> &y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::invalid_argument,
          "line fit needs at least two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, ErrorKind::numerical, "line fit abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

/// y = slope x with no offset; r2 is the uncentered coefficient of
/// determination 1 - SS_res / sum y^2.
inline LineFit fit_through_origin(const std::vector<double> &x,
                                  const std::vector<double> &y) {
  require(x.size() == y.size() && !x.empty(), ErrorKind::invalid_argument,
          "fit needs paired samples");
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  require(sxx > 0, ErrorKind::numerical, "fit abscissae are all zero");
  LineFit f;
  f.slope = sxy / sxx;
  double res = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    res += std::pow(y[i] - f.slope * x[i], 2);
  f.r2 = syy > 0 ? 1 - res / syy : 1.0;
  return f;
}

} // namespace nlslab
