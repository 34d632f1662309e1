#pragma once

// Strang split-step integrator for i u_t + Laplacian u = -|u|^{4/d} u.

#include "nlslab/error.hpp"
#include "nlslab/parallel.hpp"
#include "nlslab/spectral_domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace nlslab {

struct EvolutionConfig {
  double dt_safety = 0.1;
  double dt_max = 1e-3;
  double t_end = 1.0;
  double resolution_guard = 1e-3;

  void validate() const {
    require(dt_safety > 0 && dt_safety <= 1, ErrorKind::invalid_argument,
            "dt_safety must lie in (0, 1]");
    require(std::isfinite(dt_max) && dt_max > 0, ErrorKind::invalid_argument,
            "dt_max must be positive");
    require(std::isfinite(t_end), ErrorKind::invalid_argument, "t_end must be finite");
    require(resolution_guard > 0 && resolution_guard < 0.5, ErrorKind::invalid_argument,
            "resolution_guard must lie in (0, 0.5)");
  }
};

namespace detail {

inline void nonlinear_phase(Field &u, double dt) {
  const double a = 4.0 / u.domain.dimension;
  parallel_for(u.size(), [&](std::size_t i) {
    const double m = std::abs(u.values[i]);
    if (m > 0)
      u.values[i] *= std::polar(1.0, dt * std::pow(m, a));
  });
}

inline Field strang(const Field &u, double dt) {
  Field v = u;
  nonlinear_phase(v, dt / 2);
  v = propagate(v, dt);
  nonlinear_phase(v, dt / 2);
  require(v.all_finite(), ErrorKind::numerical, "numerical blow-up reached");
  v.time_stamp = u.time_stamp + dt;
  return v;
}

} // namespace detail

/// One Strang step of length dt > 0.
inline Field step(const Field &u, double dt) {
  require(std::isfinite(dt) && dt > 0, ErrorKind::invalid_argument, "step needs dt > 0");
  return detail::strang(u, dt);
}

/// Adjoint step: undoes step(., dt) up to roundoff.
inline Field step_backward(const Field &u, double dt) {
  require(std::isfinite(dt) && dt > 0, ErrorKind::invalid_argument, "step needs dt > 0");
  return detail::strang(u, -dt);
}

struct ConservedQuantities {
  double mass = 0;
  double energy = 0;
};

/// M = ||u||_L2 and E = 1/2 ||grad u||^2 - d/(4+2d) int |u|^{(4+2d)/d}.
inline ConservedQuantities conserved_quantities(const Field &u) {
  const int d = u.domain.dimension;
  const double q = (4.0 + 2.0 * d) / d;
  double potential = 0;
  for (const auto &z : u.values)
    potential += std::pow(std::abs(z), q);
  potential *= u.domain.cell_volume();
  return {l2_norm(u), 0.5 * gradient_norm_sq(u) - d / (4.0 + 2.0 * d) * potential};
}

struct EvolutionRecord {
  double t = 0;
  double mass = 0;
  double energy = 0;
  double grad_l2 = 0;
  double linf = 0;
  double tail_fraction = 0;
  double dt = 0;
};

enum class HaltReason { t_end, resolution_guard, numerical_blowup };

inline std::string to_string(HaltReason r) {
  switch (r) {
  case HaltReason::t_end:
    return "t_end";
  case HaltReason::resolution_guard:
    return "resolution_guard";
  case HaltReason::numerical_blowup:
    return "numerical_blowup";
  }
  return "unknown";
}

struct EvolutionResult {
  Field final_state;
  std::vector<EvolutionRecord> records;
  HaltReason halt = HaltReason::t_end;
  double initial_h2 = 0;
  double final_h2 = 0;
};

inline EvolutionRecord make_record(const Field &u, double dt) {
  const auto cq = conserved_quantities(u);
  return {u.time_stamp, cq.mass, cq.energy, std::sqrt(gradient_norm_sq(u)), linf_norm(u),
          spectral_tail_fraction(u), dt};
}

/// Adaptive step dt = min(dt_max, c / ||u||_inf^{4/d}).
inline double adaptive_dt(const Field &u, const EvolutionConfig &cfg) {
  const double m = linf_norm(u);
  if (m == 0)
    return cfg.dt_max;
  return std::min(cfg.dt_max, cfg.dt_safety / std::pow(m, 4.0 / u.domain.dimension));
}

struct EvolveOptions {
  /// Times that the step sequence must land on exactly; `on_stop` is called
  /// with the state there.
  std::vector<double> stop_times;
  std::function<void(const Field &)> on_stop;
  /// Called after every accepted step.
  std::function<void(const Field &, const EvolutionRecord &)> on_step;
};

/// Integrates from u0.time_stamp to cfg.t_end. The state that breached the
/// guard is the final state; a non-finite step leaves the last finite one.
inline EvolutionResult evolve(const Field &u0, const EvolutionConfig &cfg,
                              const EvolveOptions &opt = {}) {
  cfg.validate();
  require(u0.all_finite(), ErrorKind::invalid_argument, "initial data is not finite");
  require(cfg.t_end >= u0.time_stamp, ErrorKind::invalid_argument,
          "t_end lies before the initial time");
  std::vector<double> stops = opt.stop_times;
  std::sort(stops.begin(), stops.end());
  std::size_t next_stop = 0;
  while (next_stop < stops.size() && stops[next_stop] < u0.time_stamp)
    ++next_stop;

  EvolutionResult res;
  Field u = u0;
  res.initial_h2 = norms(u).h2;
  res.records.push_back(make_record(u, 0.0));
  auto hit_stops = [&](const Field &f) {
    while (next_stop < stops.size() && stops[next_stop] <= f.time_stamp) {
      if (opt.on_stop)
        opt.on_stop(f);
      ++next_stop;
    }
  };
  hit_stops(u);
  if (res.records.back().tail_fraction > cfg.resolution_guard) {
    res.halt = HaltReason::resolution_guard;
  } else {
    while (u.time_stamp < cfg.t_end) {
      double dt = adaptive_dt(u, cfg);
      double target = cfg.t_end;
      if (next_stop < stops.size())
        target = std::min(target, stops[next_stop]);
      bool land = false;
      if (target - u.time_stamp <= dt * (1 + 1e-12)) {
        dt = target - u.time_stamp;
        land = true;
      }
      if (!(dt > 0)) {
        // The step size collapsed under the adaptive law.
        if (!land)
          res.halt = HaltReason::numerical_blowup;
        break;
      }
      Field v;
      try {
        v = step(u, dt);
      } catch (const Error &e) {
        if (e.kind() != ErrorKind::numerical)
          throw;
        res.halt = HaltReason::numerical_blowup;
        break;
      }
      if (land)
        v.time_stamp = target;
      u = std::move(v);
      res.records.push_back(make_record(u, dt));
      if (opt.on_step)
        opt.on_step(u, res.records.back());
      hit_stops(u);
      if (res.records.back().tail_fraction > cfg.resolution_guard) {
        res.halt = HaltReason::resolution_guard;
        break;
      }
    }
  }
  res.final_h2 = norms(u).h2;
  res.final_state = std::move(u);
  return res;
}

inline std::string records_csv(const std::vector<EvolutionRecord> &records) {
  std::string out = "t,mass,energy,grad_l2,linf,tail_fraction,dt\n";
  char buf[256];
  for (const auto &r : records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.mass,
                  r.energy, r.grad_l2, r.linf, r.tail_fraction, r.dt);
    out += buf;
  }
  return out;
}

} // namespace nlslab
