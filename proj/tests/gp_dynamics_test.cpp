#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpk/gp_dynamics.hpp"

using namespace gpk;
using namespace gpk::gp;

namespace {

GridSpec line_grid(int n = 256, double length = 40.0, double dt = 1e-3, double t = 1.0) {
  GridSpec g;
  g.dim = 1;
  g.points = n;
  g.box_length = length;
  g.dt = dt;
  g.t_final = t;
  return g;
}

// Free Schrödinger Gaussian with the same normalisation as WaveFunction::gaussian,
// summed over periodic images.
cplx free_gaussian_1d(double x, double t, double sigma, double length) {
  const cplx a(sigma * sigma, t);
  cplx s = 0.0;
  for (int m = -3; m <= 3; ++m) {
    const double y = x + m * length;
    s += std::exp(-y * y / (4.0 * a));
  }
  return std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25) * std::sqrt(sigma * sigma / a) * s;
}

// E|k|^{2m} for the spectral density of the unit Gaussian datum of width sigma.
double gaussian_moment(int m, double sigma) {
  double dbl = 1.0;
  for (int j = 2 * m - 1; j > 0; j -= 2) dbl *= j;
  return dbl * std::pow(1.0 / (4.0 * sigma * sigma), m);
}

std::shared_ptr<const RadialSymbol> well_symbol(scattering::ScatteringSolution* out = nullptr) {
  auto v = scattering::RadialPotential::square_well(8.0, 1.0);
  auto sol = scattering::solve_zero_energy(v, 10.0, 10001);
  if (out) *out = sol;
  return std::make_shared<RadialSymbol>(sol, v);
}

}  // namespace

TEST(Sobolev, PlaneWave) {
  GridSpec g = line_grid(32, 10.0);
  auto psi = WaveFunction::plane_wave(g, {1, 0, 0});
  const double h1 = sobolev_norm(psi, 1).norm;
  EXPECT_NEAR(h1 * h1, 1.0 + std::pow(2.0 * std::numbers::pi / 10.0, 2), 1e-12);
  EXPECT_NEAR(sobolev_norm(psi, 0).norm, 1.0, 1e-12);
}

TEST(Sobolev, GaussianClosedForm) {
  GridSpec g;
  g.dim = 2;
  g.points = 64;
  g.box_length = 24.0;
  const double sigma = 1.2;
  auto psi = WaveFunction::gaussian(g, sigma);
  for (int n = 1; n <= 4; ++n) {
    double expect = 0.0;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; i + j <= n; ++j) expect += gaussian_moment(i, sigma) * gaussian_moment(j, sigma);
    const auto s = sobolev_norm(psi, n);
    EXPECT_NEAR(s.norm * s.norm, expect, 1e-8 * expect) << "order " << n;
    EXPECT_FALSE(s.aliasing_warning);
  }
}

TEST(Sobolev, FlagsUnderResolvedData) {
  GridSpec g = line_grid(16, 40.0);
  auto psi = WaveFunction::gaussian(g, 0.3);
  EXPECT_TRUE(sobolev_norm(psi, 2).aliasing_warning);
}

TEST(Evolve, FreeGaussianMatchesClosedForm) {
  GridSpec g = line_grid(256, 40.0, 5e-3, 1.0);
  const double sigma = 1.0;
  auto psi0 = WaveFunction::gaussian(g, sigma);
  auto traj = evolve(psi0, NonlinearitySpec::gp(0.0), g, 100);
  ASSERT_EQ(traj.times.size(), 3u);
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    double err = 0.0, norm = 0.0;
    for (int j = 0; j < g.points; ++j) {
      const cplx exact = free_gaussian_1d(g.coordinate(j), traj.times[s], sigma, g.box_length);
      err += std::norm(traj.snapshots[s].values[j] - exact);
      norm += std::norm(exact);
    }
    EXPECT_LE(std::sqrt(err * g.dx()), 1e-6);
  }
  // Kinetic energy of the Gaussian: 1/(4 sigma^2) per axis, constant in time.
  for (double e : traj.report.energy) EXPECT_NEAR(e, 0.25, 1e-8);
}

TEST(Evolve, ConstantDatumPicksUpGlobalPhase) {
  GridSpec g;
  g.dim = 2;
  g.points = 16;
  g.box_length = 4.0;
  g.dt = 5e-3;
  g.t_final = 0.5;
  const double a0 = 0.3;
  auto psi0 = WaveFunction::constant(g);
  const double density = 1.0 / (g.box_length * g.box_length);
  EXPECT_NEAR(gp_energy(psi0, NonlinearitySpec::gp(a0)), 4.0 * std::numbers::pi * a0 * density,
              1e-12);
  auto out = evolve(psi0, NonlinearitySpec::gp(a0), g).snapshots.back();
  const cplx factor = std::polar(1.0, -8.0 * std::numbers::pi * a0 * density * g.t_final);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    EXPECT_LT(std::abs(out.values[i] - factor * psi0.values[i]), 1e-12);
}

TEST(Evolve, ConservationAndDriftOrder) {
  auto drift_for = [](double dt) {
    GridSpec g = line_grid(128, 20.0, dt, 1.0);
    auto psi0 = WaveFunction::gaussian(g, 1.0, {}, {0.5, 0, 0});
    auto traj = evolve(psi0, NonlinearitySpec::gp(0.5), g, 10);
    double drift = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      EXPECT_NEAR(traj.report.mass[i], 1.0, 1e-12);
      drift = std::max(drift, std::abs(traj.report.energy[i] - traj.report.energy[0]));
    }
    return drift / std::abs(traj.report.energy[0]);
  };
  const double coarse = drift_for(4e-3), fine = drift_for(2e-3);
  EXPECT_GE(coarse / fine, 3.9);
}

TEST(Evolve, TimeReversal) {
  GridSpec g = line_grid(128, 20.0, 1e-3, 0.5);
  auto psi0 = WaveFunction::gaussian(g, 1.0, {0.3, 0, 0}, {1.0, 0, 0});
  auto nl = NonlinearitySpec::modified(8.0, well_symbol());
  auto forward = evolve(psi0, nl, g).snapshots.back();
  SplitStep solver(g, nl);
  for (int s = 0; s < 500; ++s) solver.step(forward.values, -g.dt);
  EXPECT_LE(l2_distance(forward, psi0), 1e-8);
}

TEST(Evolve, RightHandSideIsEnergyGradient) {
  GridSpec g = line_grid(32, 10.0);
  auto psi = WaveFunction::gaussian(g, 1.0, {0.2, 0, 0}, {0.7, 0, 0});
  for (const auto& nl : {NonlinearitySpec::gp(0.4), NonlinearitySpec::modified(4.0, well_symbol())}) {
    SplitStep solver(g, nl);
    const auto rhs = solver.apply_hamiltonian(psi.values);
    const double dv = g.cell_volume();
    for (int j : {3, 11, 16, 20}) {
      const double eps = 1e-5;
      Field plus = psi.values, minus = psi.values;
      plus[j] += eps;
      minus[j] -= eps;
      const double d_re = (solver.energy(plus) - solver.energy(minus)) / (2 * eps);
      plus = psi.values;
      minus = psi.values;
      plus[j] += cplx(0, eps);
      minus[j] -= cplx(0, eps);
      const double d_im = (solver.energy(plus) - solver.energy(minus)) / (2 * eps);
      // dE/dRe + i dE/dIm = 2 dV (Hφ)_j
      const cplx expect = 2.0 * dv * rhs[j];
      EXPECT_NEAR(d_re, expect.real(), 1e-6 * std::abs(expect));
      EXPECT_NEAR(d_im, expect.imag(), 1e-6 * std::abs(expect));
    }
  }
}

TEST(RadialSymbol, SquareWellClosedForm) {
  scattering::ScatteringSolution sol;
  auto uhat = well_symbol(&sol);
  EXPECT_NEAR((*uhat)(0.0), 8.0 * std::numbers::pi * sol.a0, 1e-8);
  // Inside the well u = sinh(2r)/(2 cosh 2); U-hat(q) = (4π/q) ∫_0^1 8 u(r) sin(qr) dr.
  for (double q : {0.3, 1.0, 4.0}) {
    const double a = 2.0;
    const double integral =
        (a * std::cosh(a) * std::sin(q) - q * std::sinh(a) * std::cos(q)) / (a * a + q * q);
    const double expect = 4.0 * std::numbers::pi / q * 8.0 * integral / (2.0 * std::cosh(a));
    EXPECT_NEAR((*uhat)(q), expect, 1e-8);
  }
}

TEST(GpEnergy, ModifiedApproachesGp) {
  GridSpec g = line_grid(128, 20.0);
  auto psi = WaveFunction::gaussian(g, 1.0);
  scattering::ScatteringSolution sol;
  auto uhat = well_symbol(&sol);
  const double e_gp = gp_energy(psi, NonlinearitySpec::gp(sol.a0));
  double previous = std::numeric_limits<double>::infinity();
  for (double n : {4.0, 8.0, 16.0, 32.0}) {
    const double gap = std::abs(gp_energy(psi, NonlinearitySpec::modified(n, uhat)) - e_gp);
    EXPECT_LT(gap, previous);
    previous = gap;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(CompareDynamics, DegenerateCases) {
  GridSpec g = line_grid(64, 20.0, 1e-2);
  auto psi0 = WaveFunction::gaussian(g, 1.0);
  auto uhat = well_symbol();
  auto at_zero = compare_dynamics(psi0, uhat->a0(), uhat, {8, 16, 32, 64}, 0.0, g);
  for (double d : at_zero.l2_difference) EXPECT_EQ(d, 0.0);
  EXPECT_FALSE(at_zero.rate.defined);

  auto v0 = scattering::RadialPotential::zero();
  auto free_symbol =
      std::make_shared<RadialSymbol>(scattering::solve_zero_energy(v0, 10.0, 1001), v0);
  auto free = compare_dynamics(psi0, 0.0, free_symbol, {8, 16, 32, 64}, 0.5, g);
  for (double d : free.l2_difference) EXPECT_LE(d, 1e-15);

  EXPECT_THROW(compare_dynamics(psi0, 0.0, free_symbol, {8, 16, 32}, 0.5, g), ConfigError);
  EXPECT_THROW(compare_dynamics(psi0, 0.0, free_symbol, {8, 16, 24, 64}, 0.5, g), ConfigError);
}

TEST(Evolve, Errors) {
  GridSpec g = line_grid(64, 20.0, 1.0, 1.0);
  auto psi0 = WaveFunction::gaussian(g, 1.0);
  EXPECT_THROW(evolve(psi0, NonlinearitySpec::gp(0.1), g), ConfigError);
  g.dt = 1e-2;
  EXPECT_THROW(evolve(psi0, NonlinearitySpec::gp(std::numeric_limits<double>::infinity()), g),
               NumericalBudgetError);
  GridSpec bad = g;
  bad.points = 48;
  EXPECT_THROW(bad.validate(), ConfigError);
  auto unnormalised = psi0;
  unnormalised.values[0] += 1.0;
  EXPECT_THROW(evolve(unnormalised, NonlinearitySpec::gp(0.1), g), DomainError);
}
