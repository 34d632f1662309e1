#include "nlslab/spectral_domain.hpp"
#include "oracles/direct_transforms.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace nlslab;
using testing_support::random_field;
using testing_support::random_smooth_field;
using testing_support::relative_l2;

namespace {

constexpr double pi = std::numbers::pi;

Field sine_mode(const DomainSpec &dom) {
  const double L = dom.side_lengths[0];
  return Field::sample(dom, 0.0,
                       [&](const Point &x) { return std::sin(pi * x[0] / L); });
}

} // namespace

TEST(DomainSpec, RejectsBadGrids) {
  EXPECT_THROW(DomainSpec::dirichlet({1.0}, {7}), Error);
  EXPECT_THROW(DomainSpec::dirichlet({1.0}, {10}), Error); // 11 is prime
  EXPECT_THROW(DomainSpec::dirichlet({-1.0}, {15}), Error);
  EXPECT_THROW(DomainSpec::torus({1.0}, {11}), Error);
  EXPECT_NO_THROW(DomainSpec::dirichlet({1.0, 2.0}, {15, 63}));
  EXPECT_NO_THROW(DomainSpec::torus({1.0}, {12}));
}

TEST(DomainSpec, InteriorCoordinates) {
  const auto dom = DomainSpec::dirichlet({2.0}, {15});
  EXPECT_DOUBLE_EQ(dom.spacing(0), 0.125);
  EXPECT_DOUBLE_EQ(dom.coordinate(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(dom.coordinate(0, 14), 1.875);
  EXPECT_DOUBLE_EQ(dom.distance_to_boundary({0.5, 0, 0}), 0.5);
}

TEST(Transform, SingleSineModeHasOneCoefficient) {
  const auto dom = DomainSpec::dirichlet({3.0}, {31});
  const auto c = transform(sine_mode(dom));
  EXPECT_NEAR(std::abs(c.coefficients[0] - Complex(1.0)), 0.0, 1e-14);
  for (std::size_t k = 1; k < c.coefficients.size(); ++k)
    EXPECT_LT(std::abs(c.coefficients[k]), 1e-14);
}

TEST(Transform, ZeroFieldZeroCoefficients) {
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  for (const auto &z : transform(Field::zeros(dom)).coefficients)
    EXPECT_EQ(z, Complex{});
}

TEST(Transform, MatchesDirectSummation) {
  std::mt19937_64 rng(7);
  const auto dom = DomainSpec::dirichlet({1.7}, {31});
  const Field f = random_field(dom, rng);
  const auto c = transform(f);
  const auto ref = oracle::sine_coefficients_1d(f.values);
  for (std::size_t k = 0; k < ref.size(); ++k)
    EXPECT_LT(std::abs(c.coefficients[k] - ref[k]), 1e-13);
  const auto back = oracle::sine_synthesis_1d(c.coefficients);
  for (std::size_t j = 0; j < back.size(); ++j)
    EXPECT_LT(std::abs(back[j] - f.values[j]), 1e-13);
}

TEST(Transform, RoundTripAndParseval) {
  std::mt19937_64 rng(11);
  for (const auto &dom :
       {DomainSpec::dirichlet({1.0}, {31}), DomainSpec::dirichlet({1.0, 2.0}, {31, 15}),
        DomainSpec::dirichlet({1.0, 1.0, 1.5}, {15, 9, 11}),
        DomainSpec::torus({2.0, 1.0}, {16, 12})}) {
    const Field f = random_field(dom, rng);
    const auto c = transform(f);
    EXPECT_LT(relative_l2(inverse_transform(c), f), 1e-12);
    EXPECT_NEAR(coefficient_norm_sq(c) / l2_norm_sq(f), 1.0, 1e-12);
  }
}

TEST(Transform, ShapeMismatchThrows) {
  const auto dom = DomainSpec::dirichlet({1.0}, {15});
  SpectralCoefficients c{dom, std::vector<Complex>(3)};
  EXPECT_THROW(inverse_transform(c), Error);
  Field a(dom, 0.0), b(DomainSpec::dirichlet({1.0}, {31}), 0.0);
  EXPECT_THROW(a += b, Error);
}

TEST(Propagate, ZeroTimeIsIdentity) {
  std::mt19937_64 rng(3);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  const Field f = random_field(dom, rng);
  EXPECT_EQ(propagate(f, 0.0).values, f.values);
}

TEST(Propagate, EigenfunctionGetsGlobalPhase) {
  const auto dom = DomainSpec::dirichlet({2.5}, {63});
  const Field f = sine_mode(dom);
  const double t = 0.37, k = pi / 2.5;
  const Field g = propagate(f, t);
  const Complex phase = std::polar(1.0, -t * k * k);
  for (std::size_t j = 0; j < f.size(); ++j)
    EXPECT_LT(std::abs(g[j] - phase * f[j]), 1e-13);
}

TEST(Propagate, UnitaryAndSemigroup) {
  std::mt19937_64 rng(5);
  for (const auto &dom : {DomainSpec::dirichlet({1.0, 1.3}, {31, 15}),
                          DomainSpec::torus({1.0, 1.0}, {16, 16})}) {
    const Field f = random_field(dom, rng);
    const Field g = propagate(f, 0.013);
    EXPECT_NEAR(l2_norm(g) / l2_norm(f), 1.0, 1e-13);
    const Field ab = propagate(propagate(f, 0.004), -0.011);
    EXPECT_LT(relative_l2(ab, propagate(f, -0.007)), 1e-12);
  }
}

TEST(Propagate, CommutesWithLaplacian) {
  std::mt19937_64 rng(9);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {31, 31});
  const Field f = random_smooth_field(dom, rng);
  const Field a = laplacian(propagate(f, 0.02));
  const Field b = propagate(laplacian(f), 0.02);
  EXPECT_LT(relative_l2(a, b), 1e-12);
}

TEST(Norms, SineModeClosedForms) {
  const double L = 2.0, k = pi / L;
  const auto dom = DomainSpec::dirichlet({L}, {127});
  const Field f = sine_mode(dom);
  EXPECT_NEAR(l2_norm_sq(f), L / 2, 1e-13);
  EXPECT_NEAR(gradient_norm_sq(f), k * k * L / 2, 1e-12);
  const Field lap = laplacian(f);
  for (std::size_t j = 0; j < f.size(); ++j)
    EXPECT_NEAR(lap[j].real(), -k * k * f[j].real(), 1e-11);
  const auto n = norms(f);
  EXPECT_NEAR(n.h2, std::sqrt(L / 2) * (1 + k * k), 1e-12);
  EXPECT_NEAR(n.linf, 1.0, 1e-3);
}

TEST(Norms, GradientMatchesFiniteDifferences) {
  // Second-order differences on the grid including the boundary zeros; the
  // error must shrink by about 4 per halving of the spacing.
  std::mt19937_64 rng(21);
  double prev_err = 0.0;
  for (int n : {31, 63, 127}) {
    const auto dom = DomainSpec::dirichlet({1.0}, {n});
    auto f = Field::sample(dom, 0.0, [](const Point &x) {
      return std::sin(pi * x[0]) + 0.3 * std::sin(3 * pi * x[0]) -
             0.1 * std::sin(5 * pi * x[0]);
    });
    const double h = dom.spacing(0);
    double fd = 0.0;
    for (int j = 0; j <= n; ++j) {
      const Complex left = j == 0 ? Complex{} : f[j - 1];
      const Complex right = j == n ? Complex{} : f[j];
      fd += std::norm((right - left) / h) * h;
    }
    const double err = std::abs(fd - gradient_norm_sq(f));
    if (prev_err > 0)
      EXPECT_NEAR(prev_err / err, 4.0, 0.2);
    prev_err = err;
  }
}

TEST(Derivative, MixedPartialsOfProductModes) {
  const auto dom = DomainSpec::dirichlet({1.0, 2.0}, {31, 63});
  const Field f = Field::sample(dom, 0.0, [](const Point &x) {
    return std::sin(2 * pi * x[0]) * std::sin(pi * x[1] / 2);
  });
  const Field fx = derivative(f, {1, 0, 0});
  const Field fxy = derivative(f, {1, 1, 0});
  const Field fyy = derivative(f, {0, 2, 0});
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto x = dom.point(i);
    EXPECT_NEAR(fx[i].real(), 2 * pi * std::cos(2 * pi * x[0]) * std::sin(pi * x[1] / 2), 1e-11);
    EXPECT_NEAR(fxy[i].real(),
                pi * pi * std::cos(2 * pi * x[0]) * std::cos(pi * x[1] / 2), 1e-11);
    EXPECT_NEAR(fyy[i].real(), -(pi * pi / 4) * f[i].real(), 1e-11);
  }
}

TEST(Derivative, TorusGradient) {
  const auto dom = DomainSpec::torus({2 * pi}, {32});
  const Field f = Field::sample(dom, 0.0, [](const Point &x) {
    return std::exp(Complex(0, 3 * x[0]));
  });
  const Field g = gradient(f)[0];
  for (std::size_t i = 0; i < f.size(); ++i)
    EXPECT_LT(std::abs(g[i] - Complex(0, 3) * f[i]), 1e-12);
}

TEST(Resample, ExactForBandLimitedFields) {
  std::mt19937_64 rng(4);
  const auto coarse = DomainSpec::dirichlet({1.0, 1.0}, {15, 15});
  const auto fine = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  const Field f = random_smooth_field(coarse, rng);
  const Field g = resample(f, fine);
  EXPECT_NEAR(l2_norm(g) / l2_norm(f), 1.0, 1e-12);
  EXPECT_LT(relative_l2(resample(g, coarse), f), 1e-12);
}

TEST(TailFraction, SmoothVersusRough) {
  std::mt19937_64 rng(8);
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  EXPECT_LT(spectral_tail_fraction(random_smooth_field(dom, rng)), 1e-20);
  EXPECT_GT(spectral_tail_fraction(random_field(dom, rng)), 0.3);
}

TEST(Parallel, ThreadCountDoesNotChangeResults) {
  const auto dom = DomainSpec::dirichlet({1.0, 1.0}, {63, 63});
  auto fn = [](const Point &x) { return std::exp(Complex(x[0], x[0] * x[1])); };
  set_threads(1);
  const Field a = Field::sample(dom, 0.0, fn);
  set_threads(3);
  const Field b = Field::sample(dom, 0.0, fn);
  set_threads(1);
  EXPECT_EQ(a.values, b.values);
}
