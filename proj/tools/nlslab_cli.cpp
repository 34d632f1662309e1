// nlslab: ground states, glued profiles, remainder solves, evolution and
// blow-up diagnostics from one JSON config.

#include "nlslab/nlslab.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nlslab;

namespace {

constexpr const char *tool_version = "1.0.0";

enum Exit { ok = 0, config_error = 2, numerical_failure = 3, acceptance_failure = 4 };

struct Options {
  std::string config_path;
  std::string output;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  // evolve
  std::string initial = "profile";
  // diagnose
  std::string input;
  // verify
  std::vector<int> criteria;
  bool skip_verify = false;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  fs::path cache;
  std::map<int, GroundState> gs;
  /// Directory of the stage in progress, for labelling failures.
  fs::path active;
};

json module_versions() {
  return {{"spectral_domain", 1}, {"ground_state", 1}, {"profile", 1},  {"remainder_solver", 1},
          {"evolution", 1},       {"diagnostics", 1},  {"cli", 1}};
}

std::string csv_line(std::initializer_list<double> v) {
  std::string s;
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    s += (s.empty() ? "" : ",") + std::string(buf);
  }
  return s + "\n";
}

std::string numbered(const std::string &stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.nlsfld", stem.c_str(), i);
  return buf;
}

/// Output directory of one subcommand; always labelled by manifest.json.
class Stage {
public:
  Stage(Context &ctx, const std::string &name) : ctx_(ctx), name_(name), dir_(ctx.out / name) {
    fs::create_directories(dir_);
    ctx.active = dir_;
    write_manifest("running");
  }
  ~Stage() {
    if (!done_)
      write_manifest("failed");
  }

  const fs::path &dir() const { return dir_; }

  void write(const std::string &file, const std::string &bytes) {
    write_file_atomic(dir_ / file, bytes);
    artifacts_.push_back(file);
  }
  void write_json(const std::string &file, const json &j) { write(file, j.dump(2) + "\n"); }
  void snapshot(const std::string &file, const Field &f) { write(file, encode_snapshot(f)); }

  void finish(json summary = {}) {
    summary_ = std::move(summary);
    write_manifest("complete");
    done_ = true;
    ctx_.active.clear();
  }

private:
  void write_manifest(const std::string &status) {
    json m = {{"tool", "nlslab"},
              {"version", tool_version},
              {"subcommand", name_},
              {"status", status},
              {"config", to_json(ctx_.cfg)},
              {"modules", module_versions()},
              {"artifacts", artifacts_}};
    if (!summary_.is_null())
      m["summary"] = summary_;
    write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  }

  Context &ctx_;
  std::string name_;
  fs::path dir_;
  std::vector<std::string> artifacts_;
  json summary_;
  bool done_ = false;
};

fs::path cache_directory(const fs::path &out) {
  if (const char *env = std::getenv("NLSLAB_CACHE"); env && *env)
    return env;
  if (const char *xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg)
    return fs::path(xdg) / "nlslab";
  if (const char *home = std::getenv("HOME"); home && *home)
    return fs::path(home) / ".cache" / "nlslab";
  return out / ".cache";
}

constexpr double gs_tolerance = 1e-8;

/// Q for dimension d, from the cache when the key matches.
const GroundState &ground_state(Context &ctx, int d) {
  if (auto it = ctx.gs.find(d); it != ctx.gs.end())
    return it->second;
  const json key = {{"dimension", d}, {"tolerance", gs_tolerance}, {"ground_state", 1}};
  const fs::path file = ctx.cache / ("ground_state_" + hex64(fnv1a64(key.dump())) + ".json");
  if (fs::exists(file)) {
    try {
      const auto j = json::parse(read_file(file));
      if (j.at("key") == key)
        return ctx.gs.emplace(d, ground_state_from_json(j.at("ground_state"))).first->second;
    } catch (const std::exception &) {
      // Unreadable entries are recomputed and overwritten.
    }
  }
  GroundState gs = solve_ground_state(d, gs_tolerance);
  try {
    write_file_atomic(file, json{{"key", key}, {"ground_state", to_json(gs)}}.dump() + "\n");
  } catch (const std::exception &) {
    // A read-only cache only costs recomputation.
  }
  return ctx.gs.emplace(d, std::move(gs)).first->second;
}

int run_ground_state(Context &ctx) {
  Stage st(ctx, "ground_state");
  const int d = ctx.cfg.domain.dimension;
  const auto &gs = ground_state(ctx, d);
  st.write_json("ground_state_d" + std::to_string(d) + ".json", to_json(gs));
  std::string csv = "r,Q,Qp\n";
  for (const auto &s : gs.table)
    csv += csv_line({s.r, s.q, s.dq});
  st.write("profile_d" + std::to_string(d) + ".csv", csv);
  st.finish({{"Q0", gs.initial_height}, {"mass_sq", gs.l2_norm * gs.l2_norm}});
  std::cout << "ground state d=" << d << ": Q(0) = " << gs.initial_height
            << ", |Q|^2 = " << gs.l2_norm * gs.l2_norm << "\n";
  return ok;
}

struct DeltaChoice {
  double delta = 0;
  std::string source;
  std::optional<SourceDecayFit> fit;
};

DeltaChoice choose_delta(Context &ctx) {
  const auto &c = ctx.cfg;
  const auto &gs = ground_state(ctx, c.domain.dimension);
  const double cap = gs.value_decay.rate * c.bubbles.rho;
  if (c.weighted.delta)
    return {*c.weighted.delta, "config", std::nullopt};
  try {
    auto fit = fit_source_decay(c.bubbles, gs, c.domain);
    return {default_delta(fit, gs, c.bubbles.rho), "fit", fit};
  } catch (const Error &e) {
    // No usable fit window (T too short for lambda); fall back to the tail rate.
    std::cerr << "note: " << e.what() << "; using D0 rho = " << cap << "\n";
    return {cap, "D0_rho", std::nullopt};
  }
}

int run_build_profile(Context &ctx) {
  Stage st(ctx, "profile");
  const auto &c = ctx.cfg;
  const auto &gs = ground_state(ctx, c.domain.dimension);
  const auto dc = choose_delta(ctx);
  json j = {{"delta", dc.delta},
            {"source", dc.source},
            {"D0_rho", gs.value_decay.rate * c.bubbles.rho}};
  if (dc.fit) {
    j["delta_fit"] = dc.fit->delta;
    j["r2"] = dc.fit->r2;
    std::string csv = "inverse_scale,source_h2\n";
    for (std::size_t i = 0; i < dc.fit->inverse_scale.size(); ++i)
      csv += csv_line({dc.fit->inverse_scale[i], dc.fit->h2_norm[i]});
    st.write("delta_fit.csv", csv);
  }
  st.write_json("delta.json", j);
  const auto p = weighted_params(c, dc.delta);
  const auto mesh = time_mesh(c, p);
  std::string index = "node,t,file\n";
  for (std::size_t m = 0; m < mesh.size(); m += c.output.snapshot_stride) {
    const auto name = numbered("r", m);
    st.snapshot(name, glued_profile(c.bubbles, gs, mesh.nodes[m], c.domain));
    std::string line = csv_line({double(m), mesh.nodes[m]});
    line.back() = ',';
    index += line + name + "\n";
  }
  st.snapshot("S0_0000.nlsfld", source_S0(c.bubbles, gs, 0.0, c.domain));
  st.write("profile_index.csv", index);
  st.finish(j);
  std::cout << "delta = " << dc.delta << " (" << dc.source << ")\n";
  return ok;
}

int run_remainder(Context &ctx) {
  Stage st(ctx, "remainder");
  const auto &c = ctx.cfg;
  const auto &gs = ground_state(ctx, c.domain.dimension);
  const auto dc = choose_delta(ctx);
  const auto p = weighted_params(c, dc.delta);
  if (TimeMesh::cutoff_tau(p) >= c.bubbles.blow_time) {
    // Every node would sit past the underflow cutoff of the weight.
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "not contracting: lambda T = %.3g leaves no time node before the weight "
                  "cutoff; increase lambda",
                  c.bubbles.lambda * c.bubbles.blow_time);
    throw Error(ErrorKind::numerical, buf);
  }
  const auto mesh = time_mesh(c, p);
  const auto pb = RemainderProblem::build(c.bubbles, gs, p, mesh, c.domain);
  const auto res = fixed_point(
      pb, c.weighted.tolerance, c.weighted.max_iter,
      [](int n, double d) { std::cerr << "  picard " << n << ": d = " << d << "\n"; },
      c.weighted.quadrature_points);
  json rep = remainder_report(pb, res);
  rep["delta_source"] = dc.source;
  st.write_json("remainder.json", rep);
  std::string dist = "iteration,distance,membership\n";
  for (std::size_t n = 0; n < res.distances.size(); ++n)
    dist += std::to_string(n + 1) + "," + csv_line({res.distances[n], res.membership[n]});
  st.write("picard.csv", dist);
  std::string norms_csv = "node,t,log_l2,log_h2\n";
  for (std::size_t m = 0; m < mesh.size(); ++m)
    norms_csv += std::to_string(m) + "," +
                 csv_line({mesh.nodes[m], res.trajectory.log_l2[m], res.trajectory.log_h2[m]});
  st.write("remainder_norms.csv", norms_csv);
  for (std::size_t m = 0; m < mesh.size(); m += c.output.snapshot_stride) {
    const Field u = res.trajectory.state(pb, m);
    Field h = pb.profile[m];
    h += u;
    st.snapshot(numbered("u", m), u);
    st.snapshot(numbered("h", m), h);
  }
  st.finish({{"contraction_factor", res.contraction_factor}, {"iterations", res.iterations}});
  std::cout << "remainder: " << res.iterations << " iterations, contraction "
            << res.contraction_factor << "\n";
  return ok;
}

Field initial_data(Context &ctx, const std::string &initial) {
  const auto &c = ctx.cfg;
  if (initial == "profile")
    return glued_profile(c.bubbles, ground_state(ctx, c.domain.dimension), 0.0, c.domain);
  if (initial == "constructed") {
    const auto file = ctx.out / "remainder" / numbered("h", 0);
    require(fs::exists(file), ErrorKind::config,
            "no constructed solution at " + file.string() + "; run `remainder` first");
    return read_snapshot(file);
  }
  return read_snapshot(initial);
}

int run_evolve(Context &ctx, const Options &o) {
  Stage st(ctx, "evolve");
  const auto &c = ctx.cfg;
  const Field u0 = initial_data(ctx, o.initial);
  require(u0.domain.dimension == c.domain.dimension &&
              u0.domain.grid_points == c.domain.grid_points,
          ErrorKind::config, "initial data does not live on the configured grid");
  std::size_t step = 0;
  EvolveOptions opt;
  opt.on_step = [&](const Field &u, const EvolutionRecord &) {
    if (++step % c.output.snapshot_stride == 0)
      st.snapshot(numbered("u", step), u);
  };
  st.snapshot(numbered("u", 0), u0);
  const auto res = evolve(u0, c.evolution, opt);
  st.snapshot("final.nlsfld", res.final_state);
  st.write("records.csv", records_csv(res.records));
  const json summary = {{"halt", to_string(res.halt)},
                        {"steps", res.records.size() - 1},
                        {"t_final", res.final_state.time_stamp},
                        {"h2_growth", res.final_h2 / res.initial_h2},
                        {"initial", o.initial}};
  st.write_json("evolve.json", summary);
  st.finish(summary);
  std::cout << "evolve: " << res.records.size() - 1 << " steps, halted by "
            << to_string(res.halt) << " at t = " << res.final_state.time_stamp << "\n";
  return ok;
}

int run_diagnose(Context &ctx, const Options &o) {
  Stage st(ctx, "diagnose");
  const auto &c = ctx.cfg;
  const fs::path in = o.input.empty() ? ctx.out / "remainder" : fs::path(o.input);
  require(fs::is_directory(in), ErrorKind::config, "no snapshot directory " + in.string());
  std::vector<fs::path> files;
  for (const auto &e : fs::directory_iterator(in)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".nlsfld" && name.rfind("u_", 0) != 0 && name.rfind("S0", 0) != 0)
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Field> series;
  for (const auto &f : files) {
    Field h = read_snapshot(f);
    if (h.time_stamp < c.bubbles.blow_time)
      series.push_back(std::move(h));
  }
  std::sort(series.begin(), series.end(),
            [](const Field &a, const Field &b) { return a.time_stamp < b.time_stamp; });
  require(!series.empty(), ErrorKind::config, "no snapshots before T in " + in.string());
  const auto &gs = ground_state(ctx, c.domain.dimension);
  const auto rep = report_from_fields(series, c.bubbles, gs, c.radius(),
                                      standard_test_functions(c.bubbles, c.domain));
  st.write_json("report.json", to_json(rep));
  st.write("report.dat", report_table(rep));
  st.write("report.gp", gnuplot_script(rep, "report.dat"));
  st.finish({{"snapshots", series.size()}, {"input", in.string()}});
  std::cout << "diagnose: " << series.size() << " snapshots from " << in.string() << "\n";
  return ok;
}

int run_verify(Context &ctx, const Options &o) {
  Stage st(ctx, "verify");
  Verifier::Options vo;
  vo.seed = ctx.cfg.output.seed;
  vo.log = [](const std::string &s) { std::cerr << "  .. " << s << "\n"; };
  Verifier v(vo);
  using Check = CriterionResult (Verifier::*)();
  const Check checks[] = {&Verifier::ground_state_regression, &Verifier::exact_solution_tracking,
                          &Verifier::constructed_consistency, &Verifier::total_mass,
                          &Verifier::concentration,           &Verifier::gradient_rate,
                          &Verifier::weighted_machinery,      &Verifier::property_suites};
  json results = json::array();
  int failed = 0;
  for (int id = 1; id <= 8; ++id) {
    if (!o.criteria.empty() && std::find(o.criteria.begin(), o.criteria.end(), id) == o.criteria.end())
      continue;
    CriterionResult r;
    try {
      r = (v.*checks[id - 1])();
    } catch (const Error &e) {
      r.id = id;
      r.name = "criterion " + std::to_string(id);
      r.summary = std::string("error: ") + e.what();
    }
    std::cout << format_line(r) << std::endl;
    failed += !r.passed;
    results.push_back(to_json(r));
  }
  st.write_json("verify.json", results);
  st.finish({{"failed", failed}, {"run", results.size()}});
  return failed ? acceptance_failure : ok;
}

int run_all(Context &ctx, const Options &o) {
  for (auto f : {run_ground_state, run_build_profile, run_remainder})
    if (int rc = f(ctx))
      return rc;
  Options evo = o;
  evo.initial = "constructed";
  if (int rc = run_evolve(ctx, evo))
    return rc;
  if (int rc = run_diagnose(ctx, o))
    return rc;
  return o.skip_verify ? ok : run_verify(ctx, o);
}

ExperimentConfig load_config(const Options &o) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  if (!o.config_path.empty()) {
    std::string text;
    try {
      text = read_file(o.config_path);
    } catch (const Error &e) {
      throw Error(ErrorKind::config, e.what());
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception &e) {
      throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
    }
    // A manifest from an earlier run carries the resolved config.
    if (j.is_object() && j.contains("tool") && j.contains("config"))
      j = j["config"];
    cfg = parse_config(j);
  }
  if (!o.output.empty())
    cfg.output.directory = o.output;
  if (o.seed)
    cfg.output.seed = *o.seed;
  cfg.validate();
  return cfg;
}

void report_error(ErrorKind kind, const std::string &what, int code) {
  std::cerr << json{{"error", {{"kind", std::string(to_string(kind))},
                               {"message", what},
                               {"exit_code", code}}}}
                   .dump()
            << std::endl;
}

void label_failure(const Context &ctx, const std::string &what) {
  if (ctx.active.empty())
    return;
  try {
    const auto file = ctx.active / "manifest.json";
    auto m = json::parse(read_file(file));
    m["status"] = "failed";
    m["error"] = what;
    write_file_atomic(file, m.dump(2) + "\n");
  } catch (const std::exception &) {
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Blow-up profiles for the mass-critical NLS"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON config (or a manifest.json)");
  app.add_option("--output", o.output, "Output directory (overrides the config)");
  app.add_option("--threads", o.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", o.seed, "Seed for randomized corpora (overrides the config)");

  auto *gs = app.add_subcommand("ground-state", "Compute or load Q for the configured dimension");
  auto *bp = app.add_subcommand("build-profile", "Glued profile snapshots and delta_fit");
  auto *rm = app.add_subcommand("remainder", "Solve for the remainder by Picard iteration");
  auto *ev = app.add_subcommand("evolve", "Split-step evolution from chosen initial data");
  ev->add_option("--initial", o.initial, "profile, constructed, or an NLSFLD1 file");
  auto *dg = app.add_subcommand("diagnose", "Blow-up report from stored snapshots");
  dg->add_option("--input", o.input, "Snapshot directory (default: OUTPUT/remainder)");
  auto *vf = app.add_subcommand("verify", "Run the acceptance checks");
  vf->add_option("--criteria", o.criteria, "Only these criterion ids")->delimiter(',');
  auto *al = app.add_subcommand("all", "ground-state, build-profile, remainder, evolve, diagnose, verify");
  al->add_flag("--skip-verify", o.skip_verify, "Stop after diagnose");
  al->add_option("--criteria", o.criteria, "Only these criterion ids")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    report_error(ErrorKind::config, e.what(), config_error);
    return config_error;
  }

  Context ctx;
  try {
    set_threads(o.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                               : static_cast<unsigned>(o.threads));
    ctx.cfg = load_config(o);
    ctx.out = ctx.cfg.output.directory;
    ctx.cache = cache_directory(ctx.out);
    if (gs->parsed())
      return run_ground_state(ctx);
    if (bp->parsed())
      return run_build_profile(ctx);
    if (rm->parsed())
      return run_remainder(ctx);
    if (ev->parsed())
      return run_evolve(ctx, o);
    if (dg->parsed())
      return run_diagnose(ctx, o);
    if (vf->parsed())
      return run_verify(ctx, o);
    if (al->parsed())
      return run_all(ctx, o);
  } catch (const Error &e) {
    const int code = e.kind() == ErrorKind::config ? config_error : numerical_failure;
    label_failure(ctx, e.what());
    report_error(e.kind(), e.what(), code);
    return code;
  } catch (const std::exception &e) {
    label_failure(ctx, e.what());
    report_error(ErrorKind::io, e.what(), numerical_failure);
    return numerical_failure;
  }
  return ok;
}
