#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpk/scattering.hpp"

using namespace gpk;
using namespace gpk::scattering;

namespace {

// Matching sinh(kr) inside a square well of height v0, radius R to r - a outside.
double square_well_length(double v0, double radius) {
  const double k = std::sqrt(v0 / 2.0);
  return radius - std::tanh(k * radius) / k;
}

ScatteringSolution reference_well() {
  return solve_zero_energy(RadialPotential::square_well(8.0, 1.0), 10.0, 10001);
}

}  // namespace

TEST(Potential, FamiliesAndSupport) {
  auto well = RadialPotential::square_well(8.0, 1.0);
  EXPECT_DOUBLE_EQ(well(0.5), 8.0);
  EXPECT_DOUBLE_EQ(well(1.5), 0.0);
  EXPECT_DOUBLE_EQ(well.r_support(), 1.0);
  // ∫(1+r^6) V over the unit ball: 8 * 4π (1/3 + 1/9).
  EXPECT_NEAR(well.l1_weighted_norm(), 8.0 * 4.0 * std::numbers::pi * (1.0 / 3 + 1.0 / 9), 1e-2);

  auto g = RadialPotential::gaussian(1e-3);
  EXPECT_LE(g(g.r_support() + 1e-9), 1e-12 + 1e-15);
  EXPECT_EQ(RadialPotential::zero().r_support(), 0.0);

  EXPECT_THROW(RadialPotential::square_well(-1.0, 1.0), DomainError);
  EXPECT_THROW(RadialPotential::tabulated({0.0, 1.0}, {1.0, -0.1}), DomainError);
  EXPECT_THROW(RadialPotential::from_spec("nonsense:1"), ConfigError);
  EXPECT_EQ(RadialPotential::from_spec("square-well:8,1").describe(), well.describe());
}

TEST(Potential, TabulatedInterpolatesLinearly) {
  auto v = RadialPotential::tabulated({0.0, 1.0, 2.0}, {2.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(v(0.5), 1.5);
  EXPECT_DOUBLE_EQ(v(3.0), 0.0);
  EXPECT_GE(v.r_support(), 1.0);
}

TEST(SolveZeroEnergy, FreeCaseIsExact) {
  auto sol = solve_zero_energy(RadialPotential::zero(), 10.0, 2001);
  for (std::size_t i = 0; i < sol.r.size(); ++i) {
    EXPECT_EQ(sol.w[i], 0.0);
    EXPECT_EQ(sol.f[i], 1.0);
  }
  EXPECT_EQ(sol.a0, 0.0);
  EXPECT_EQ(sol.ode_residual, 0.0);
}

TEST(SolveZeroEnergy, SquareWellMatchesClosedForm) {
  const auto sol = reference_well();
  const double exact = square_well_length(8.0, 1.0);
  EXPECT_NEAR(exact, 1.0 - std::tanh(2.0) / 2.0, 1e-15);
  EXPECT_LE(std::abs(sol.a0 - exact) / exact, 1e-6);
  EXPECT_LE(std::abs(sol.a0_endpoint - exact) / exact, 1e-6);
  EXPECT_LE(sol.ode_residual, 1e-8);
  EXPECT_LE(sol.tail_fit_error, 1e-8);
}

TEST(SolveZeroEnergy, HardWellClosedForm) {
  auto sol = solve_zero_energy(RadialPotential::square_well(200.0, 1.0), 10.0, 20001);
  EXPECT_NEAR(sol.a0, square_well_length(200.0, 1.0), 1e-6);
  auto cert = verify_w_bounds(sol);
  EXPECT_TRUE(std::isfinite(cert.c1));
  EXPECT_LT(cert.w_origin, 1.0);
  EXPECT_TRUE(cert.in_unit_interval);
}

TEST(SolveZeroEnergy, WeakGaussianBornApproximation) {
  const double lambda = 1e-3;
  auto v = RadialPotential::gaussian(lambda);
  auto sol = solve_zero_energy(v, 5.0 * v.r_support() + 1.0, 4001);
  const double born = lambda * std::sqrt(std::numbers::pi) / 8.0;
  EXPECT_LE(std::abs(sol.a0 - born) / born, 0.01);
  EXPECT_TRUE(verify_w_bounds(sol).in_unit_interval);
}

TEST(SolveZeroEnergy, ProfileShape) {
  const auto sol = reference_well();
  for (std::size_t i = 1; i < sol.r.size(); ++i) {
    EXPECT_GE(sol.f[i], sol.f[i - 1] - 1e-14);
    if (sol.r[i] < 1.0) continue;
    EXPECT_NEAR(sol.w[i], sol.a0 / sol.r[i], 1e-8);
    if (sol.r[i - 1] >= 1.0) {
      EXPECT_LT(sol.w[i], sol.w[i - 1]);
    }
  }
  EXPECT_LE(std::abs(sol.f.back() - 1.0), sol.a0 / sol.r_max() + 1e-8);
}

TEST(SolveZeroEnergy, RefinementReducesDefect) {
  auto v = RadialPotential::gaussian(2.0);
  auto coarse = solve_zero_energy(v, 40.0, 2001);
  auto fine = solve_zero_energy(v, 40.0, 4001);
  EXPECT_GE(coarse.ode_residual / fine.ode_residual, 4.0);
}

TEST(SolveZeroEnergy, RejectsBadInput) {
  auto well = RadialPotential::square_well(8.0, 1.0);
  EXPECT_THROW(solve_zero_energy(well, 10.0, 999), ConfigError);
  EXPECT_THROW(solve_zero_energy(well, -1.0, 2000), ConfigError);
  EXPECT_THROW(solve_zero_energy(well, 4.0, 2000), ConfigError);
}

TEST(ScatteringLengthIntegral, AgreesWithTailFit) {
  const auto sol = reference_well();
  auto well = RadialPotential::square_well(8.0, 1.0);
  EXPECT_LE(std::abs(scattering_length_integral(sol, well) - sol.a0) / sol.a0, 1e-6);

  auto zero = solve_zero_energy(RadialPotential::zero(), 10.0, 1001);
  EXPECT_EQ(scattering_length_integral(zero, RadialPotential::zero()), 0.0);

  EXPECT_THROW(scattering_length_integral(sol, RadialPotential::square_well(9.0, 1.0)),
               DomainError);
}

TEST(BoundCertificate, FreeCaseVanishes) {
  auto cert = verify_w_bounds(solve_zero_energy(RadialPotential::zero(), 10.0, 1001));
  EXPECT_EQ(cert.c1, 0.0);
  EXPECT_EQ(cert.c2, 0.0);
  EXPECT_TRUE(cert.in_unit_interval);
}

TEST(ScaledProfile, MatchesExteriorTail) {
  const auto sol = reference_well();
  EXPECT_NEAR(scaled_profile(sol, 10.0, 1.0), sol.a0 / 10.0, 1e-10);
  EXPECT_NEAR(scaled_profile(sol, 10.0, 1.0), 0.05179862, 1e-8);
  for (std::size_t i = 0; i < sol.r.size(); i += 37) EXPECT_DOUBLE_EQ(scaled_profile(sol, 1.0, sol.r[i]), sol.w[i]);
  EXPECT_NEAR(scaled_profile(sol, 4.0, 7.0), sol.a0 / 28.0, 1e-12);
  EXPECT_THROW(scaled_profile(sol, 2.0, -1.0), DomainError);
  EXPECT_THROW(scaled_profile(sol, 0.5, 1.0), DomainError);
}

TEST(ScaledProfile, InterpolationIsSmooth) {
  const auto sol = reference_well();
  const double k = 2.0;
  // Inside the well u = sinh(kr)/(k cosh(kR)) exactly, after normalisation.
  for (double r : {0.0013, 0.25, 0.5004, 0.9})
    EXPECT_NEAR(sol.at(r).w, 1.0 - std::sinh(k * r) / (k * std::cosh(k) * r), 1e-9);
}

TEST(CancellationResidual, ScalesWithCube) {
  const auto sol = reference_well();
  auto well = RadialPotential::square_well(8.0, 1.0);
  const double base = zero_energy_cancellation_residual(sol, well, 1.0);
  EXPECT_LE(base, 1e-6);
  for (double n : {2.0, 4.0})
    EXPECT_NEAR(zero_energy_cancellation_residual(sol, well, n), n * n * n * base, 1e-12 * n * n * n);
  auto zero = solve_zero_energy(RadialPotential::zero(), 10.0, 1001);
  EXPECT_EQ(zero_energy_cancellation_residual(zero, RadialPotential::zero(), 8.0), 0.0);
}
