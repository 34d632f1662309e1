#include "nlslab/remainder_solver.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlslab;
using testing_support::random_smooth_field;
using testing_support::relative_l2;

namespace {

const GroundState &gs2() {
  static const GroundState gs = solve_ground_state(2, 1e-8);
  return gs;
}

BubbleConfig two_points(double lambda, double T) {
  BubbleConfig cfg;
  cfg.points = {{0.3, 0.5, 0.0}, {0.7, 0.5, 0.0}};
  cfg.lambda = lambda;
  cfg.blow_time = T;
  cfg.rho = 0.08;
  return cfg;
}

WeightedSpaceParams params_for(const BubbleConfig &cfg) {
  return make_weighted_params(2, gs2().value_decay.rate * cfg.rho, cfg.lambda, cfg.blow_time);
}

struct Solved {
  RemainderProblem problem;
  FixedPointResult result;
};

// lambda = 160, lambda T = 0.02 on 127^2: inside the contraction region.
const Solved &solved() {
  static const Solved s = [] {
    const auto cfg = two_points(160, 1.25e-4);
    const auto p = params_for(cfg);
    const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {127, 127});
    Solved out{RemainderProblem::build(cfg, gs2(), p, TimeMesh::graded(p, 0.9), dom), {}};
    out.result = fixed_point(out.problem, 1e-8, 40);
    return out;
  }();
  return s;
}

} // namespace

TEST(WeightedSpaceParams, Validation) {
  EXPECT_NO_THROW(make_weighted_params(2, 0.1, 2, 1));
  EXPECT_DOUBLE_EQ(default_alpha(2), 0.5);
  EXPECT_DOUBLE_EQ(default_alpha(3), 1.0 / 6);
  auto p = make_weighted_params(3, 0.1, 2, 1);
  p.alpha = 0.4; // above 4/3 - 1
  EXPECT_THROW(p.validate(3), Error);
  p = make_weighted_params(2, 0.1, 2, 1);
  p.beta = 0.2;
  EXPECT_THROW(p.validate(2), Error);
  p.beta = 0.75;
  p.delta = -1;
  EXPECT_THROW(p.validate(2), Error);
}

TEST(TimeMesh, GradedTowardBlowUpWithCutoff) {
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::graded(p, 0.9);
  ASSERT_GE(mesh.size(), 5u);
  EXPECT_EQ(mesh.nodes.front(), 0.0);
  EXPECT_GE(mesh.grading_ratio, 0.9);
  EXPECT_LT(mesh.grading_ratio, 0.91);
  for (std::size_t m = 1; m < mesh.size(); ++m)
    EXPECT_GT(mesh.nodes[m], mesh.nodes[m - 1]);
  for (std::size_t m = 1; m + 1 < mesh.size(); ++m)
    EXPECT_NEAR(mesh.tau(m + 1) / mesh.tau(m), mesh.grading_ratio, 1e-9);
  const double weight = p.alpha * p.delta * p.inverse_scale(mesh.nodes.back());
  EXPECT_NEAR(weight, std::log(1e300), 1e-9);
  EXPECT_LT(mesh.nodes.back(), p.blow_time);
}

TEST(TimeMesh, ExtraNodesAndLookup) {
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto base = TimeMesh::with_size(p, 50);
  const double mid = 0.5 * (base.nodes[10] + base.nodes[11]);
  const double near = base.nodes[20] + 0.01 * (base.nodes[21] - base.nodes[20]);
  const auto mesh = TimeMesh::with_size(p, 50, {mid, near});
  // The midpoint is inserted; the near time replaces node 20.
  EXPECT_EQ(mesh.size(), 52u);
  EXPECT_EQ(mesh.nodes[mesh.index_of(mid)], mid);
  EXPECT_EQ(mesh.nodes[mesh.index_of(near)], near);
  EXPECT_THROW(mesh.index_of(base.nodes[20]), Error);
  for (std::size_t m = 1; m < mesh.size(); ++m)
    EXPECT_GT(mesh.nodes[m], mesh.nodes[m - 1]);
  EXPECT_THROW(TimeMesh::with_size(p, 2), Error);
  EXPECT_THROW(TimeMesh::graded(p, 1.0), Error);
}

TEST(Duhamel, ZeroSourceGivesZero) {
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 20);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  const Field u = duhamel([&](double s) { return Field(dom, s); }, 0.0, mesh, dom);
  EXPECT_EQ(linf_norm(u), 0.0);
}

TEST(Duhamel, StationaryInInteractionPicture) {
  std::mt19937_64 rng(1);
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 40);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {31, 31});
  const Field g = random_smooth_field(dom, rng);
  const double sM = mesh.nodes.back();
  for (std::size_t m : {std::size_t{0}, std::size_t{10}, std::size_t{35}}) {
    const double t = mesh.nodes[m];
    const Field u = duhamel([&](double s) { return propagate(g, s); }, t, mesh, dom);
    // The integral stops at the cutoff node s_M.
    Field expect = propagate(g, t);
    expect *= Complex(0, sM - t);
    EXPECT_LT(relative_l2(u, expect), 1e-12) << "node " << m;
  }
}

TEST(Duhamel, RejectsTimesOffTheMesh) {
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 20);
  const auto dom = DomainSpec::dirichlet({1.0}, {15});
  EXPECT_THROW(duhamel([&](double s) { return Field(dom, s); }, 1e-4, mesh, dom), Error);
}

TEST(Duhamel, ScalarWeightIdentity) {
  // int_t^{s_M} e^{-delta sigma(s)} (T-s)^{-2} ds = (lambda/delta)(e^{-delta sigma_t} - e^{-delta sigma_M})
  for (double lambda : {1.0, 4.0, 40.0}) {
    const auto p = make_weighted_params(2, 0.08, lambda, 0.02 / lambda);
    const auto mesh = TimeMesh::with_size(p, 200);
    const DuhamelQuadrature q(mesh, p.delta, p.lambda, false);
    std::vector<Complex> w(mesh.size());
    for (std::size_t l = 0; l < mesh.size(); ++l)
      w[l] = 1.0 / (mesh.tau(l) * mesh.tau(l));
    const auto I = q.scalar_integrals(w);
    const double sM = p.inverse_scale(mesh.nodes.back());
    for (std::size_t m = 0; m + 1 < mesh.size(); ++m) {
      const double sm = p.inverse_scale(mesh.nodes[m]);
      const double exact = (p.lambda / p.delta) * -std::expm1(-p.delta * (sM - sm));
      ASSERT_LT(std::abs(I[m] - exact) / exact, 1e-6) << "lambda " << lambda << " node " << m;
    }
  }
}

TEST(Duhamel, FieldQuadratureMatchesScalarIdentity) {
  std::mt19937_64 rng(3);
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 200);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  const Field g = random_smooth_field(dom, rng);
  const DuhamelQuadrature q(mesh, p.delta, p.lambda, false);
  // weighted source e^{delta sigma} F with F = e^{-delta sigma} tau^{-2} e^{is Laplacian} g
  const auto out = q.apply_all(
      [&](std::size_t l) {
        Field f = propagate(g, mesh.nodes[l]);
        f *= Complex(1.0 / (mesh.tau(l) * mesh.tau(l)));
        return f;
      },
      dom);
  const double sM = p.inverse_scale(mesh.nodes.back());
  for (std::size_t m = 0; m + 1 < mesh.size(); m += 7) {
    const double sm = p.inverse_scale(mesh.nodes[m]);
    Field expect = propagate(g, mesh.nodes[m]);
    expect *= Complex(0, (p.lambda / p.delta) * -std::expm1(-p.delta * (sM - sm)));
    EXPECT_LT(relative_l2(out[m], expect), 1e-6) << "node " << m;
  }
}

TEST(Duhamel, QuadratureConvergesWithStencilWidth) {
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 200);
  std::vector<Complex> w(mesh.size());
  for (std::size_t l = 0; l < mesh.size(); ++l)
    w[l] = 1.0 / (mesh.tau(l) * mesh.tau(l));
  const double sM = p.inverse_scale(mesh.nodes.back());
  double prev = 1;
  for (int points : {2, 4, 6}) {
    const auto I = DuhamelQuadrature(mesh, p.delta, p.lambda, false, points).scalar_integrals(w);
    double worst = 0;
    for (std::size_t m = 0; m + 1 < mesh.size(); ++m) {
      const double exact =
          (p.lambda / p.delta) * -std::expm1(-p.delta * (sM - p.inverse_scale(mesh.nodes[m])));
      worst = std::max(worst, std::abs(I[m] - exact) / exact);
    }
    EXPECT_LT(worst, prev / 30) << points << " points";
    prev = worst;
  }
}

TEST(Duhamel, LinearInTheSource) {
  std::mt19937_64 rng(5);
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 30);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  std::vector<Field> f, g;
  for (double s : mesh.nodes) {
    f.push_back(random_smooth_field(dom, rng));
    g.push_back(random_smooth_field(dom, rng));
    f.back().time_stamp = g.back().time_stamp = s;
  }
  const DuhamelQuadrature q(mesh, p.delta, p.lambda, true);
  const Complex a(0.7, -1.3), b(-2.1, 0.4);
  const auto uf = q.apply_all([&](std::size_t l) { return f[l]; }, dom);
  const auto ug = q.apply_all([&](std::size_t l) { return g[l]; }, dom);
  const auto uc = q.apply_all(
      [&](std::size_t l) {
        Field x = f[l];
        x *= a;
        Field y = g[l];
        y *= b;
        return x + y;
      },
      dom);
  for (std::size_t m = 0; m + 1 < mesh.size(); ++m) {
    Field x = uf[m];
    x *= a;
    Field y = ug[m];
    y *= b;
    EXPECT_LT(relative_l2(uc[m], x + y), 1e-12);
  }
}

TEST(Duhamel, SingleNodeAgreesWithFullSweep) {
  std::mt19937_64 rng(6);
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 30);
  const auto dom = DomainSpec::dirichlet({1.0}, {31});
  std::vector<Field> f;
  for (double s : mesh.nodes) {
    f.push_back(random_smooth_field(dom, rng));
    f.back().time_stamp = s;
  }
  const DuhamelQuadrature q(mesh, p.delta, p.lambda, true);
  auto src = [&](std::size_t l) { return f[l]; };
  const auto all = q.apply_all(src, dom);
  EXPECT_EQ(q.apply_at(12, src, dom).values, all[12].values);
}

TEST(NonlinearDifference, MatchesDirectFormAndLinearLimit) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (double a : {4.0, 2.0, 4.0 / 3}) {
    for (int k = 0; k < 200; ++k) {
      const Complex z(n(rng), n(rng)), w(n(rng), n(rng));
      const Complex direct = power_nonlinearity(z + w, a) - power_nonlinearity(z, a);
      EXPECT_LT(std::abs(scaled_nonlinear_difference(z, w, 1.0, a) - direct),
                1e-12 * (1 + std::abs(direct)));
      // eps -> 0 gives dN(z)[w] = (a/2+1)|z|^a w + (a/2)|z|^{a-2} z^2 conj(w)
      const double m = std::abs(z);
      const Complex lin = (a / 2 + 1) * std::pow(m, a) * w +
                          (a / 2) * std::pow(m, a - 2) * z * z * std::conj(w);
      EXPECT_LT(std::abs(scaled_nonlinear_difference(z, w, 0.0, a) - lin),
                1e-12 * (1 + std::abs(lin)));
      EXPECT_LT(std::abs(scaled_nonlinear_difference(z, w, 1e-200, a) - lin),
                1e-12 * (1 + std::abs(lin)));
    }
  }
}

TEST(NonlinearDifference, FiniteForTinyProfile) {
  for (double z : {0.0, 1e-310, 1e-200, 1e-30})
    for (double eps : {0.0, 1e-300, 1e-10, 1.0}) {
      const Complex d = scaled_nonlinear_difference(Complex(z, 0), Complex(0.3, -0.2), eps, 2.0);
      EXPECT_TRUE(std::isfinite(d.real()) && std::isfinite(d.imag())) << z << " " << eps;
    }
}

TEST(ApplyPhi, ZeroTrajectoryGivesGluingIntegral) {
  const auto cfg = two_points(160, 1.25e-4);
  const auto p = params_for(cfg);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  const auto mesh = TimeMesh::graded(p, 0.9);
  const auto pb = RemainderProblem::build(cfg, gs2(), p, mesh, dom);
  const DuhamelQuadrature q(mesh, p.delta, p.lambda, true);
  const auto phi0 = apply_Phi(zero_trajectory(pb), pb, q);
  const auto i0 = q.apply_all([&](std::size_t l) { return pb.weighted_s0[l]; }, dom);
  for (std::size_t m = 0; m < mesh.size(); ++m)
    EXPECT_EQ(phi0.weighted[m].values, i0[m].values);
  EXPECT_GT(phi0.weighted_sup_l2, 0.0);
  // ||I0(t)||_H2 e^{delta sigma} / T stays bounded along the mesh.
  double cmax = 0;
  for (std::size_t m = 0; m + 1 < mesh.size(); ++m)
    cmax = std::max(cmax, norms(phi0.weighted[m]).h2 / cfg.blow_time);
  EXPECT_TRUE(std::isfinite(cmax));
  EXPECT_LE(cmax, norms(phi0.weighted[0]).h2 / cfg.blow_time * 100);
}

TEST(ApplyPhi, BoundShrinksWhenLambdaDoublesAndTScalesAsCube) {
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {20.0, 40.0, 80.0}) {
    const double T = 2.5e-4 * std::pow(20.0 / lambda, 3);
    const auto cfg = two_points(lambda, T);
    const auto p = params_for(cfg);
    const auto mesh = TimeMesh::graded(p, 0.9);
    const auto pb = RemainderProblem::build(cfg, gs2(), p, mesh, dom);
    const auto v = apply_Phi(zero_trajectory(pb), pb,
                             DuhamelQuadrature(mesh, p.delta, p.lambda, true));
    const double bound = v.weighted_sup_l2 + v.weighted_sup_h2;
    EXPECT_LT(bound, prev) << "lambda " << lambda;
    prev = bound;
  }
}

TEST(FixedPoint, NoBubblesConvergesToZeroInOneIteration) {
  BubbleConfig cfg = two_points(4, 0.005);
  cfg.points.clear();
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  const auto pb = RemainderProblem::build(cfg, gs2(), p, TimeMesh::with_size(p, 20), dom);
  const auto r = fixed_point(pb, 1e-8, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.trajectory.weighted_sup_l2, 0.0);
}

TEST(FixedPoint, ContractsForLargeLambda) {
  const auto &s = solved();
  EXPECT_LT(s.result.distances.back(), 1e-8);
  EXPECT_LE(s.result.contraction_factor, 0.5);
  EXPECT_LT(s.result.residual, 2e-8);
  EXPECT_GT(s.result.trajectory.gamma_fit, 0.0);
  EXPECT_GT(s.result.trajectory.gamma_r2, 0.9);
  for (const auto &f : s.result.trajectory.weighted)
    EXPECT_TRUE(f.all_finite());
}

TEST(FixedPoint, StateUndoesTheWeight) {
  const auto &s = solved();
  const std::size_t m = 3;
  const Field u = s.result.trajectory.state(s.problem, m);
  const double w = std::exp(s.problem.params.delta * s.problem.sigma[m]);
  EXPECT_NEAR(l2_norm(u) * w / l2_norm(s.result.trajectory.weighted[m]), 1.0, 1e-12);
}

TEST(FixedPoint, SmallLambdaIsNotContracting) {
  const auto cfg = two_points(4, 0.005);
  const auto p = params_for(cfg);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  const auto pb = RemainderProblem::build(cfg, gs2(), p, TimeMesh::graded(p, 0.9), dom);
  try {
    fixed_point(pb, 1e-8, 40);
    FAIL() << "expected a contraction failure";
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("not contracting"), std::string::npos);
  }
}

TEST(FixedPoint, DeterministicAcrossThreadCounts) {
  const auto cfg = two_points(160, 1.25e-4);
  const auto p = params_for(cfg);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  const auto pb = RemainderProblem::build(cfg, gs2(), p, TimeMesh::graded(p, 0.9), dom);
  set_threads(1);
  const auto a = fixed_point(pb, 1e-8, 40);
  set_threads(4);
  const auto b = fixed_point(pb, 1e-8, 40);
  set_threads(1);
  EXPECT_NEAR(a.contraction_factor, b.contraction_factor, 1e-13);
  EXPECT_EQ(weighted_distance(a.trajectory, b.trajectory), 0.0);
}

TEST(WeightedDistance, MetricAxioms) {
  std::mt19937_64 rng(12);
  const auto p = make_weighted_params(2, 0.08, 4, 0.005);
  const auto mesh = TimeMesh::with_size(p, 10);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  auto random_traj = [&] {
    RemainderTrajectory u;
    for (double s : mesh.nodes) {
      u.weighted.push_back(random_smooth_field(dom, rng));
      u.weighted.back().time_stamp = s;
    }
    return u;
  };
  for (int k = 0; k < 20; ++k) {
    const auto u = random_traj(), v = random_traj(), w = random_traj();
    EXPECT_EQ(weighted_distance(u, u), 0.0);
    EXPECT_EQ(weighted_distance(u, v), weighted_distance(v, u));
    EXPECT_LE(weighted_distance(u, w), weighted_distance(u, v) + weighted_distance(v, w) + 1e-15);
  }
  RemainderTrajectory short_one;
  short_one.weighted.push_back(Field(dom, 0.0));
  EXPECT_THROW(weighted_distance(random_traj(), short_one), Error);
}

TEST(RemainderReport, CarriesTheSolveSummary) {
  const auto &s = solved();
  const auto j = remainder_report(s.problem, s.result);
  EXPECT_EQ(j["iterations"].get<int>(), s.result.iterations);
  EXPECT_DOUBLE_EQ(j["delta"].get<double>(), s.problem.params.delta);
  EXPECT_TRUE(j.contains("weighted_sups"));
  EXPECT_TRUE(j.contains("gamma_fit"));
}
