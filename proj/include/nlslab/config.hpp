#pragma once

// ExperimentConfig: one JSON document with domain, bubbles, weighted_space,
// evolution and output sections. Unknown keys are rejected.

#include "nlslab/error.hpp"
#include "nlslab/evolution.hpp"
#include "nlslab/profile.hpp"
#include "nlslab/remainder_solver.hpp"
#include "nlslab/snapshot.hpp"
#include "nlslab/spectral_domain.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>

namespace nlslab {

struct WeightedSpaceConfig {
  /// Empty means "fit": min(delta_fit, D0 rho).
  std::optional<double> delta;
  /// Empty means min(1, 4/d - 1)/2.
  std::optional<double> alpha;
  double tolerance = 1e-8;
  int max_iter = 60;
  /// Empty means graded by `grading_ratio`.
  std::optional<int> mesh_size;
  double grading_ratio = 0.9;
  int quadrature_points = 6;
};

struct OutputConfig {
  std::string directory = "nlslab_out";
  int snapshot_stride = 10;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  DomainSpec domain = DomainSpec::dirichlet({1.0, 1.0}, {255, 255});
  BubbleConfig bubbles;
  /// rho was "auto" in the document.
  bool rho_auto = false;
  WeightedSpaceConfig weighted;
  EvolutionConfig evolution;
  OutputConfig output;
  /// Ball radius for the local masses; empty means rho.
  std::optional<double> diagnostics_radius;

  /// Two points on the unit square, lambda = 160 and lambda T = 0.04.
  static ExperimentConfig defaults() {
    ExperimentConfig c;
    c.bubbles.points = {{0.3, 0.5, 0.0}, {0.7, 0.5, 0.0}};
    c.bubbles.lambda = 160;
    c.bubbles.blow_time = 2.5e-4;
    c.bubbles.rho = 0.08;
    c.evolution.dt_max = 1.0;
    c.evolution.dt_safety = 0.05;
    c.evolution.t_end = c.bubbles.blow_time;
    return c;
  }

  double radius() const { return diagnostics_radius.value_or(bubbles.rho); }

  void validate() const {
    domain.validate();
    validate_bubbles();
    const auto &w = weighted;
    require(w.tolerance >= 1e-12 && w.tolerance <= 1e-4, ErrorKind::config,
            "weighted_space.tolerance must lie in [1e-12, 1e-4]");
    require(w.max_iter >= 1, ErrorKind::config, "weighted_space.max_iter must be positive");
    require(!w.mesh_size || *w.mesh_size >= 3, ErrorKind::config,
            "weighted_space.mesh_size must be at least 3");
    require(w.grading_ratio > 0 && w.grading_ratio < 1, ErrorKind::config,
            "weighted_space.grading_ratio must lie in (0, 1)");
    require(w.quadrature_points >= 2 && w.quadrature_points <= 8 &&
                w.quadrature_points % 2 == 0,
            ErrorKind::config, "weighted_space.quadrature_points must be 2, 4, 6 or 8");
    require(!w.delta || (std::isfinite(*w.delta) && *w.delta > 0), ErrorKind::config,
            "weighted_space.delta must be positive");
    if (w.alpha) {
      auto p = make_weighted_params(domain.dimension, 1.0, bubbles.lambda, bubbles.blow_time);
      p.alpha = *w.alpha;
      p.beta = (1 + p.alpha) / 2;
      try {
        p.validate(domain.dimension);
      } catch (const Error &e) {
        fail(ErrorKind::config, std::string("weighted_space.alpha: ") + e.what());
      }
    }
    try {
      evolution.validate();
    } catch (const Error &e) {
      fail(ErrorKind::config, std::string("evolution: ") + e.what());
    }
    require(output.snapshot_stride >= 1, ErrorKind::config,
            "output.snapshot_stride must be positive");
    require(!output.directory.empty(), ErrorKind::config, "output.directory is empty");
    if (diagnostics_radius) {
      require(*diagnostics_radius > 0 && *diagnostics_radius <= 2 * bubbles.rho,
              ErrorKind::config, "diagnostics.radius must lie in (0, 2 rho]");
    }
  }

private:
  void validate_bubbles() const {
    try {
      nlslab::validate(bubbles, domain);
    } catch (const Error &e) {
      fail(ErrorKind::config, std::string("bubbles: ") + e.what());
    }
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json &j, const std::string &section,
                           std::initializer_list<const char *> keys) {
  require(j.is_object(), ErrorKind::config, section + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrorKind::config,
            "unknown key " + section + "." + it.key());
}

template <class T>
void read_if(const nlohmann::json &j, const char *key, T &out) {
  if (j.contains(key))
    out = j.at(key).get<T>();
}

template <class T>
void read_optional(const nlohmann::json &j, const char *key, std::optional<T> &out) {
  if (j.contains(key) && !j.at(key).is_null())
    out = j.at(key).get<T>();
}

} // namespace detail

/// Missing sections and keys keep the defaults; "rho": "auto" and
/// "delta": "fit" select the derived values.
inline ExperimentConfig parse_config(const nlohmann::json &j) {
  ExperimentConfig c = ExperimentConfig::defaults();
  bool t_end_given = false;
  try {
    detail::reject_unknown(j, "config",
                           {"domain", "bubbles", "weighted_space", "evolution", "output",
                            "diagnostics"});
    if (j.contains("domain")) {
      detail::reject_unknown(j["domain"], "domain",
                             {"dimension", "kind", "side_lengths", "grid_points"});
      c.domain = domain_from_json(j["domain"]);
    }
    if (j.contains("bubbles")) {
      const auto &b = j["bubbles"];
      detail::reject_unknown(b, "bubbles", {"points", "lambda", "blow_time", "rho"});
      if (b.contains("points")) {
        c.bubbles.points.clear();
        for (const auto &p : b.at("points")) {
          const auto v = p.get<std::vector<double>>();
          require(int(v.size()) == c.domain.dimension, ErrorKind::config,
                  "bubbles.points entries must have one coordinate per dimension");
          Point x{0, 0, 0};
          for (std::size_t i = 0; i < v.size(); ++i)
            x[i] = v[i];
          c.bubbles.points.push_back(x);
        }
      }
      detail::read_if(b, "lambda", c.bubbles.lambda);
      detail::read_if(b, "blow_time", c.bubbles.blow_time);
      if (b.contains("rho")) {
        if (b["rho"].is_string()) {
          require(b["rho"] == "auto", ErrorKind::config, "bubbles.rho must be a number or \"auto\"");
          c.rho_auto = true;
        } else {
          c.bubbles.rho = b["rho"].get<double>();
        }
      }
    }
    if (j.contains("weighted_space")) {
      const auto &w = j["weighted_space"];
      detail::reject_unknown(w, "weighted_space",
                             {"delta", "alpha", "tolerance", "max_iter", "mesh_size",
                              "grading_ratio", "quadrature_points"});
      if (w.contains("delta")) {
        if (w["delta"].is_string())
          require(w["delta"] == "fit", ErrorKind::config,
                  "weighted_space.delta must be a number or \"fit\"");
        else
          c.weighted.delta = w["delta"].get<double>();
      }
      detail::read_optional(w, "alpha", c.weighted.alpha);
      detail::read_if(w, "tolerance", c.weighted.tolerance);
      detail::read_if(w, "max_iter", c.weighted.max_iter);
      detail::read_optional(w, "mesh_size", c.weighted.mesh_size);
      detail::read_if(w, "grading_ratio", c.weighted.grading_ratio);
      detail::read_if(w, "quadrature_points", c.weighted.quadrature_points);
    }
    if (j.contains("evolution")) {
      const auto &e = j["evolution"];
      detail::reject_unknown(e, "evolution",
                             {"dt_safety", "dt_max", "t_end", "resolution_guard"});
      detail::read_if(e, "dt_safety", c.evolution.dt_safety);
      detail::read_if(e, "dt_max", c.evolution.dt_max);
      t_end_given = e.contains("t_end");
      detail::read_if(e, "t_end", c.evolution.t_end);
      detail::read_if(e, "resolution_guard", c.evolution.resolution_guard);
    }
    if (j.contains("output")) {
      const auto &o = j["output"];
      detail::reject_unknown(o, "output", {"directory", "snapshot_stride", "seed"});
      detail::read_if(o, "directory", c.output.directory);
      detail::read_if(o, "snapshot_stride", c.output.snapshot_stride);
      detail::read_if(o, "seed", c.output.seed);
    }
    if (j.contains("diagnostics")) {
      detail::reject_unknown(j["diagnostics"], "diagnostics", {"radius"});
      detail::read_optional(j["diagnostics"], "radius", c.diagnostics_radius);
    }
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::config, std::string("malformed config: ") + e.what());
  } catch (const Error &e) {
    if (e.kind() == ErrorKind::config)
      throw;
    fail(ErrorKind::config, e.what());
  }
  if (c.rho_auto) {
    try {
      c.bubbles.rho = default_rho(c.bubbles.points, c.domain);
    } catch (const Error &e) {
      fail(ErrorKind::config, std::string("bubbles: ") + e.what());
    }
  }
  if (!t_end_given)
    c.evolution.t_end = c.bubbles.blow_time;
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// The fully resolved document; parse_config(to_json(c)) reproduces c.
inline nlohmann::json to_json(const ExperimentConfig &c) {
  nlohmann::json j;
  j["domain"] = domain_to_json(c.domain);
  nlohmann::json pts = nlohmann::json::array();
  for (const auto &x : c.bubbles.points)
    pts.push_back(std::vector<double>(x.begin(), x.begin() + c.domain.dimension));
  j["bubbles"] = {{"points", pts},
                  {"lambda", c.bubbles.lambda},
                  {"blow_time", c.bubbles.blow_time},
                  {"rho", c.bubbles.rho}};
  const auto &w = c.weighted;
  j["weighted_space"] = {{"delta", w.delta ? nlohmann::json(*w.delta) : nlohmann::json("fit")},
                         {"alpha", w.alpha ? nlohmann::json(*w.alpha) : nlohmann::json()},
                         {"tolerance", w.tolerance},
                         {"max_iter", w.max_iter},
                         {"mesh_size", w.mesh_size ? nlohmann::json(*w.mesh_size) : nlohmann::json()},
                         {"grading_ratio", w.grading_ratio},
                         {"quadrature_points", w.quadrature_points}};
  j["evolution"] = {{"dt_safety", c.evolution.dt_safety},
                    {"dt_max", c.evolution.dt_max},
                    {"t_end", c.evolution.t_end},
                    {"resolution_guard", c.evolution.resolution_guard}};
  j["output"] = {{"directory", c.output.directory},
                 {"snapshot_stride", c.output.snapshot_stride},
                 {"seed", c.output.seed}};
  j["diagnostics"] = {{"radius", c.diagnostics_radius ? nlohmann::json(*c.diagnostics_radius)
                                                      : nlohmann::json()}};
  return j;
}

/// 64-bit FNV-1a, used for cache keys.
inline std::uint64_t fnv1a64(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Weighted-space parameters for a config, given delta (fit or override).
inline WeightedSpaceParams weighted_params(const ExperimentConfig &c, double delta) {
  auto p = make_weighted_params(c.domain.dimension, delta, c.bubbles.lambda,
                                c.bubbles.blow_time);
  if (c.weighted.alpha) {
    p.alpha = *c.weighted.alpha;
    p.beta = (1 + p.alpha) / 2;
  }
  p.validate(c.domain.dimension);
  return p;
}

inline TimeMesh time_mesh(const ExperimentConfig &c, const WeightedSpaceParams &p,
                          const std::vector<double> &extra = {}) {
  return c.weighted.mesh_size ? TimeMesh::with_size(p, *c.weighted.mesh_size, extra)
                              : TimeMesh::graded(p, c.weighted.grading_ratio, extra);
}

} // namespace nlslab
