#pragma once

// Split-step Fourier evolution of the cubic GP equation
//     i ∂t φ = -Δφ + 8π a0 |φ|² φ
// and of its N-dependent variant with the nonlocal interaction
//     i ∂t φ = -Δφ + (N³ (V f)(N ·) * |φ|²) φ
// on a periodic box.  The nonlocal kernel is applied in frequency space as
// Û(|p|/N), where Û is the radial Fourier transform of U = V f.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gpk/error.hpp"
#include "gpk/grid.hpp"
#include "gpk/rate_fit.hpp"
#include "gpk/scattering.hpp"

namespace gpk::gp {

struct WaveFunction {
  GridSpec grid;
  Field values;

  double l2_norm() const {
    double s = 0.0;
    for (const auto& v : values) s += std::norm(v);
    return std::sqrt(s * grid.cell_volume());
  }

  void normalize() {
    const double n = l2_norm();
    if (!(n > 0.0)) throw DomainError("wave function has zero norm");
    for (auto& v : values) v /= n;
  }

  /// Product Gaussian with |φ|² of variance sigma² per axis and momentum k0.
  static WaveFunction gaussian(const GridSpec& g, double sigma, std::array<double, 3> center = {},
                               std::array<double, 3> momentum = {}) {
    g.validate();
    if (!(sigma > 0.0)) throw ConfigError("gaussian datum: sigma must be positive");
    WaveFunction psi{g, Field(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto c = g.unflatten(i);
      double e = 0.0, phase = 0.0;
      for (int a = 0; a < g.dim; ++a) {
        const double x = g.coordinate(c[a]) - center[a];
        e += x * x / (4.0 * sigma * sigma);
        phase += momentum[a] * x;
      }
      psi.values[i] = std::polar(std::exp(-e), phase);
    }
    psi.normalize();
    return psi;
  }

  /// exp(i 2π m·x / L) / L^{d/2}.
  static WaveFunction plane_wave(const GridSpec& g, std::array<int, 3> modes) {
    g.validate();
    WaveFunction psi{g, Field(g.size())};
    const double amp = std::pow(g.box_length, -0.5 * g.dim);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto c = g.unflatten(i);
      double phase = 0.0;
      for (int a = 0; a < g.dim; ++a) phase += g.k_step() * modes[a] * g.coordinate(c[a]);
      psi.values[i] = std::polar(amp, phase);
    }
    return psi;
  }

  static WaveFunction constant(const GridSpec& g) {
    g.validate();
    return {g, Field(g.size(), cplx(std::pow(g.box_length, -0.5 * g.dim), 0.0))};
  }
};

inline double l2_distance(const WaveFunction& a, const WaveFunction& b) {
  if (!a.grid.same_mesh(b.grid)) throw ConfigError("l2_distance: grids differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::norm(a.values[i] - b.values[i]);
  return std::sqrt(s * a.grid.cell_volume());
}

/// Û(q) = 4π ∫ r² V(r) f(r) sin(qr)/(qr) dr, by per-cell Simpson on the
/// scattering grid.  Û(0) = 8π a0.
class RadialSymbol {
 public:
  RadialSymbol(const scattering::ScatteringSolution& sol, const scattering::RadialPotential& v)
      : a0_(sol.a0) {
    const double h = sol.step;
    for (std::size_t i = 0; i + 1 < sol.r.size(); ++i) {
      const double a = sol.r[i], b = sol.r[i + 1], m = a + 0.5 * h;
      if (std::abs(v(a) - sol.v_samples[i]) > 1e-12 * (1.0 + std::abs(v(a))))
        throw DomainError("radial symbol: potential does not match the scattering solution");
      const double ga = a * v.in_cell(a, a, b) * sol.u[i];
      const double um = scattering::detail::hermite_mid(sol.u[i], sol.du[i], sol.u[i + 1],
                                                        sol.du[i + 1], h);
      const double gm = m * v.in_cell(m, a, b) * um;
      const double gb = b * v.in_cell(b, a, b) * sol.u[i + 1];
      if (ga == 0.0 && gm == 0.0 && gb == 0.0) continue;
      nodes_.push_back({a, m, b});
      weights_.push_back({h / 6.0 * ga, 4.0 * h / 6.0 * gm, h / 6.0 * gb});
    }
  }

  double operator()(double q) const {
    double s = 0.0;
    for (std::size_t c = 0; c < nodes_.size(); ++c)
      for (int j = 0; j < 3; ++j) {
        const double r = nodes_[c][j];
        // r² V f sinc(qr) = r V u sinc(qr)
        s += weights_[c][j] * sinc(q * r);
      }
    return 4.0 * std::numbers::pi * s;
  }

  double a0() const { return a0_; }

 private:
  static double sinc(double x) {
    return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 + x * x * x * x / 120.0 : std::sin(x) / x;
  }

  double a0_;
  std::vector<std::array<double, 3>> nodes_;
  std::vector<std::array<double, 3>> weights_;
};

struct NonlinearitySpec {
  enum class Kind { gp, modified };
  Kind kind = Kind::gp;
  double a0 = 0.0;
  double N = 1.0;
  std::shared_ptr<const RadialSymbol> uhat;

  static NonlinearitySpec gp(double a0) {
    if (a0 < 0.0) throw DomainError("nonlinearity: negative scattering length");
    return {Kind::gp, a0, 1.0, nullptr};
  }

  static NonlinearitySpec modified(double n, std::shared_ptr<const RadialSymbol> symbol) {
    if (n < 1.0) throw DomainError("nonlinearity: N must be at least 1");
    if (!symbol) throw ConfigError("nonlinearity: modified kind needs a tabulated symbol");
    const double at0 = (*symbol)(0.0);
    const double target = 8.0 * std::numbers::pi * symbol->a0();
    if (std::abs(at0 - target) > 1e-6 * std::max(1.0, std::abs(target)))
      throw InvariantViolation("nonlinearity: Uhat(0) = " + std::to_string(at0) +
                               " differs from 8 pi a0 = " + std::to_string(target));
    return {Kind::modified, symbol->a0(), n, std::move(symbol)};
  }

  /// Multiplier of the interaction in frequency space at |p|.
  double symbol(double p) const {
    if (kind == Kind::gp) return 8.0 * std::numbers::pi * a0;
    return (*uhat)(p / N);
  }
};

/// Strang splitting: half interaction phase, exact free step, half phase.
/// The interaction phase preserves |φ| pointwise, so each sub-flow is exact and
/// the scheme is symmetric (time-reversible) and mass conserving.
class SplitStep {
 public:
  SplitStep(const GridSpec& g, const NonlinearitySpec& nl) : grid_(g), plan_(g), waves_(g) {
    g.validate();
    multiplier_.resize(g.size());
    std::map<long long, double> cache;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!waves_.keep[i]) {
        multiplier_[i] = 0.0;
        continue;
      }
      const auto c = g.unflatten(i);
      long long key = 0;
      for (int a = 0; a < g.dim; ++a) {
        const long long m = g.mode_index(c[a]);
        key += m * m;
      }
      auto it = cache.find(key);
      if (it == cache.end()) it = cache.emplace(key, nl.symbol(std::sqrt(waves_.k2[i]))).first;
      multiplier_[i] = it->second;
    }
  }

  const GridSpec& grid() const { return grid_; }

  /// Dealiased interaction potential: IFFT[ P · Û · FFT(|φ|²) ].
  std::vector<double> interaction_potential(const Field& phi) const {
    Field rho(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) rho[i] = std::norm(phi[i]);
    plan_.forward(rho);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] *= multiplier_[i];
    plan_.inverse(rho);
    std::vector<double> out(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) out[i] = rho[i].real();
    return out;
  }

  void step(Field& phi, double dt) const { advance(phi, dt, 1); }

  /// `steps` Strang steps.  Consecutive half phases share the same density
  /// (the phase does not change |φ|), so they are merged into one.
  void advance(Field& phi, double dt, long long steps) const {
    if (steps <= 0) return;
    Field free(phi.size());
    for (std::size_t i = 0; i < free.size(); ++i) free[i] = std::polar(1.0, -waves_.k2[i] * dt);
    auto pot = interaction_potential(phi);
    apply_phase(phi, pot, 0.5 * dt);
    for (long long s = 0; s < steps; ++s) {
      plan_.forward(phi);
      for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= free[i];
      plan_.inverse(phi);
      pot = interaction_potential(phi);
      apply_phase(phi, pot, s + 1 < steps ? dt : 0.5 * dt);
    }
  }

  /// ∫|∇φ|² + ½ ∫ Φ |φ|², with Φ the dealiased interaction potential.
  double energy(const Field& phi) const {
    Field hat = phi;
    plan_.forward(hat);
    double kinetic = 0.0;
    for (std::size_t i = 0; i < hat.size(); ++i) kinetic += waves_.k2[i] * std::norm(hat[i]);
    kinetic *= grid_.cell_volume() / static_cast<double>(hat.size());
    const auto pot = interaction_potential(phi);
    double inter = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) inter += pot[i] * std::norm(phi[i]);
    return kinetic + 0.5 * inter * grid_.cell_volume();
  }

  /// Right-hand side operator H(φ)φ = -Δφ + Φ φ, so that i ∂t φ = H(φ)φ.
  Field apply_hamiltonian(const Field& phi) const {
    Field lap = phi;
    plan_.forward(lap);
    for (std::size_t i = 0; i < lap.size(); ++i) lap[i] *= waves_.k2[i];
    plan_.inverse(lap);
    const auto pot = interaction_potential(phi);
    for (std::size_t i = 0; i < phi.size(); ++i) lap[i] += pot[i] * phi[i];
    return lap;
  }

 private:
  static void apply_phase(Field& phi, const std::vector<double>& pot, double tau) {
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= std::polar(1.0, -pot[i] * tau);
  }

  GridSpec grid_;
  FftPlan plan_;
  WaveVectors waves_;
  std::vector<double> multiplier_;
};

inline double gp_energy(const WaveFunction& psi, const NonlinearitySpec& nl) {
  return SplitStep(psi.grid, nl).energy(psi.values);
}

struct SobolevValue {
  double norm = 0.0;           ///< (Σ_{|α|≤n} ‖∂^α φ‖²)^{1/2}
  double tail_fraction = 0.0;  ///< spectral mass outside the 2/3 band
  bool aliasing_warning = false;
};

inline constexpr double kSpectralTailThreshold = 1e-8;

/// Σ_{|α|≤n} Π_i k_i^{2α_i}: complete homogeneous polynomials in k_i².
inline double sobolev_multiplier(const std::array<double, 3>& k, int dim, int n) {
  std::array<double, 5> h{1.0, 0.0, 0.0, 0.0, 0.0};
  for (int a = 0; a < dim; ++a) {
    const double x = k[a] * k[a];
    for (int j = 1; j <= n; ++j) h[j] += x * h[j - 1];
  }
  double s = 0.0;
  for (int j = 0; j <= n; ++j) s += h[j];
  return s;
}

inline SobolevValue sobolev_norm(const WaveFunction& psi, int n, const FftPlan* plan = nullptr,
                                 const WaveVectors* waves = nullptr) {
  if (n < 0 || n > 4) throw ConfigError("sobolev_norm: order must be in 0..4");
  std::optional<FftPlan> own_plan;
  std::optional<WaveVectors> own_waves;
  if (!plan) plan = &own_plan.emplace(psi.grid);
  if (!waves) waves = &own_waves.emplace(psi.grid);
  Field hat = psi.values;
  plan->forward(hat);
  double total = 0.0, all = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < hat.size(); ++i) {
    const double m = std::norm(hat[i]);
    total += sobolev_multiplier(waves->k[i], psi.grid.dim, n) * m;
    all += m;
    if (!waves->keep[i]) tail += m;
  }
  SobolevValue out;
  out.norm = std::sqrt(total * psi.grid.cell_volume() / static_cast<double>(hat.size()));
  out.tail_fraction = all > 0.0 ? tail / all : 0.0;
  out.aliasing_warning = out.tail_fraction > kSpectralTailThreshold;
  return out;
}

struct SobolevReport {
  std::vector<double> times;
  std::vector<double> mass;
  std::vector<double> energy;
  std::array<std::vector<double>, 4> h_norms;  ///< orders 1..4
  std::vector<std::string> warnings;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<WaveFunction> snapshots;
  SobolevReport report;
};

inline constexpr double kMassTolerance = 1e-10;

/// Evolves psi0 over [0, grid.t_final] with step grid.dt, recording a snapshot
/// every `stride` steps (and at the final time).
inline Trajectory evolve(const WaveFunction& psi0, const NonlinearitySpec& nl, const GridSpec& grid,
                         int stride = 0, bool track_norms = true) {
  grid.validate();
  grid.validate_time_step(grid.dt);
  if (!psi0.grid.same_mesh(grid)) throw ConfigError("evolve: datum lives on a different grid");
  if (std::abs(psi0.l2_norm() - 1.0) > kMassTolerance)
    throw DomainError("evolve: initial datum is not normalised");
  const double steps_real = grid.t_final / grid.dt;
  const long long steps = std::llround(steps_real);
  if (steps < 0 || std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real))
    throw ConfigError("evolve: t_final must be a non-negative multiple of dt");
  if (stride <= 0) stride = static_cast<int>(std::max<long long>(steps, 1));

  SplitStep solver(grid, nl);
  FftPlan plan(grid);
  WaveVectors waves(grid);
  Trajectory traj;
  WaveFunction psi = psi0;
  psi.grid = grid;

  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.snapshots.push_back(psi);
    const double mass = psi.l2_norm();
    if (std::abs(mass - 1.0) > kMassTolerance * std::max(1.0, t))
      throw InvariantViolation("evolve: mass drifted to " + std::to_string(mass) + " at t = " +
                               std::to_string(t));
    if (!track_norms) return;
    traj.report.times.push_back(t);
    traj.report.mass.push_back(mass);
    traj.report.energy.push_back(solver.energy(psi.values));
    for (int n = 1; n <= 4; ++n) {
      const auto s = sobolev_norm(psi, n, &plan, &waves);
      traj.report.h_norms[n - 1].push_back(s.norm);
      if (n == 4 && s.aliasing_warning)
        traj.report.warnings.push_back("spectral tail " + std::to_string(s.tail_fraction) +
                                       " above threshold at t = " + std::to_string(t));
    }
  };

  record(0.0);
  double last_good = 0.0;
  for (long long done = 0; done < steps;) {
    const long long chunk = std::min<long long>(stride, steps - done);
    solver.advance(psi.values, grid.dt, chunk);
    done += chunk;
    const double t = static_cast<double>(done) * grid.dt;
    double check = 0.0;
    for (const auto& v : psi.values) check += std::norm(v);
    if (!std::isfinite(check))
      throw NumericalBudgetError("evolve: non-finite field, last good time t = " +
                                 std::to_string(last_good));
    last_good = t;
    record(t);
  }
  return traj;
}

struct ComparisonReport {
  std::vector<double> N;
  std::vector<double> l2_difference;
  RateReport rate;
  bool flagged = false;  ///< errors not decreasing in N
};

/// ‖φ^{(N)}_{t*} − φ_{t*}‖₂ for each N and its log-log slope.
inline ComparisonReport compare_dynamics(const WaveFunction& psi0, double a0,
                                         std::shared_ptr<const RadialSymbol> uhat,
                                         const std::vector<double>& n_list, double t_star,
                                         const GridSpec& grid) {
  if (n_list.size() < 4) throw ConfigError("compare_dynamics: need at least 4 values of N");
  const double ratio = n_list[1] / n_list[0];
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (!(ratio > 1.0) || std::abs(n_list[i] / n_list[i - 1] - ratio) > 1e-9 * ratio)
      throw ConfigError("compare_dynamics: N values must be geometrically increasing");
  GridSpec g = grid;
  g.t_final = t_star;
  const auto reference = evolve(psi0, NonlinearitySpec::gp(a0), g, 0, false).snapshots.back();
  ComparisonReport rep;
  for (double n : n_list) {
    const auto modified =
        evolve(psi0, NonlinearitySpec::modified(n, uhat), g, 0, false).snapshots.back();
    rep.N.push_back(n);
    rep.l2_difference.push_back(l2_distance(modified, reference));
  }
  rep.rate = fit_rate_or_degenerate(rep.N, rep.l2_difference, 1e-14);
  rep.flagged = rep.rate.defined && !rep.rate.monotone;
  return rep;
}

}  // namespace gpk::gp
