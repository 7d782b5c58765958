#pragma once

// Few-mode analogues of the many-body statements: a double-well toy model
// evolved exactly in Fock space, and the linear-term cancellation in the
// generator of the fluctuation dynamics.

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "gpk/error.hpp"
#include "gpk/fock.hpp"
#include "gpk/rate_fit.hpp"
#include "gpk/scattering.hpp"

namespace gpk::fock {

/// iφ' = hφ + g Σ v_ijkl conj(φ_j) φ_k φ_l, integrated with classical RK4.
class HartreeFlow {
 public:
  HartreeFlow(Mat h, ModeTensor v, double g) : h_(std::move(h)), v_(std::move(v)), g_(g) {}

  Vec rhs(const Vec& phi) const {
    Vec out = h_ * phi;
    const int d = v_.d;
    for (int i = 0; i < d; ++i) {
      cplx s = 0.0;
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) {
            const cplx c = v_(i, j, k, l);
            if (c != cplx(0.0)) s += c * std::conj(phi[j]) * phi[k] * phi[l];
          }
      out[i] += g_ * s;
    }
    return cplx(0.0, -1.0) * out;
  }

  Vec evolve(const Vec& phi0, double t, int steps) const {
    if (steps < 1) throw ConfigError("hartree flow: need at least one step");
    const double dt = t / steps;
    Vec phi = phi0;
    for (int s = 0; s < steps; ++s) {
      const Vec k1 = rhs(phi);
      const Vec k2 = rhs(phi + 0.5 * dt * k1);
      const Vec k3 = rhs(phi + 0.5 * dt * k2);
      const Vec k4 = rhs(phi + dt * k3);
      phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return phi;
  }

 private:
  Mat h_;
  ModeTensor v_;
  double g_;
};

/// Few-mode model with many-body coupling g/N and initial state
/// W(√N φ0) T(K0) Ω, where K0 = -κ diag(φ0²).
struct ToyScenario {
  Mat h;                     ///< one-body matrix, hermitian d x d
  ModeTensor v;              ///< mode interaction tensor
  double g = 1.0;            ///< mean-field coupling; the many-body coupling is g/N
  Vec phi0;                  ///< unit-norm initial condensate
  double kappa = 0.1;        ///< pair-kernel strength
  std::vector<double> times = {1.0};
  double hartree_dt = 5e-4;
  std::vector<int> N_list = {4, 8, 16, 32};
  int extra_shells = 16;     ///< n_max = 4N + extra_shells

  /// Double well with hopping 1 and on-site interaction 1, 80/20 initial split.
  static ToyScenario reference() {
    ToyScenario s;
    s.h.resize(2, 2);
    s.h << 0.0, -1.0, -1.0, 0.0;
    s.v = ModeTensor::on_site(2, 1.0);
    s.phi0.resize(2);
    s.phi0 << cplx(std::sqrt(0.8), 0.0), cplx(std::sqrt(0.2), 0.0);
    return s;
  }

  int modes() const { return static_cast<int>(phi0.size()); }
  Mat kernel(const Vec& phi) const {
    Mat k = Mat::Zero(phi.size(), phi.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) k(i, i) = -kappa * phi[i] * phi[i];
    return k;
  }
  int n_max(int N) const { return 4 * N + extra_shells; }

  void validate() const {
    const int d = modes();
    if (d < 1 || d > kMaxModes) throw ConfigError("toy scenario: phi0 must have between 1 and 6 entries");
    if (h.rows() != d || h.cols() != d) throw ConfigError("toy scenario: h must be d x d with d = len(phi0)");
    if (v.d != d) throw ConfigError("toy scenario: interaction tensor must match len(phi0)");
    if (std::abs(phi0.norm() - 1.0) > 1e-10) throw DomainError("toy scenario: phi0 is not normalised");
    if (times.empty()) throw ConfigError("toy scenario: empty time grid");
    for (std::size_t i = 0; i < times.size(); ++i)
      if (!(times[i] >= 0.0) || (i > 0 && !(times[i] > times[i - 1])))
        throw ConfigError("toy scenario: times must be non-negative and increasing");
    if (!(hartree_dt > 0.0)) throw ConfigError("toy scenario: hartree_dt must be positive");
    if (N_list.empty()) throw ConfigError("toy scenario: empty N list");
    for (int n : N_list)
      if (n < 1) throw ConfigError("toy scenario: N must be positive");
    if (extra_shells < 0) throw ConfigError("toy scenario: extra_shells must be non-negative");
    if (!(kappa >= 0.0)) throw DomainError("toy scenario: kappa must be non-negative");
  }
};

struct ToyPoint {
  int N = 0;
  double t = 0.0;
  double trace_distance = 0.0;
  double hs_distance = 0.0;
  double number_expectation = 0.0;  ///< ⟨Ω, 𝒰*(t;0) 𝒩 𝒰(t;0) Ω⟩
  double max_leakage = 0.0;
  double gamma_min_eigenvalue = 0.0;
  double gamma_trace = 0.0;
  int n_max = 0;
  std::size_t dimension = 0;
};

struct ToyReport {
  std::vector<ToyPoint> points;  ///< ordered by N, then t
  RateReport distance_rate;      ///< fitted over N at the last time
  double number_spread = 0.0;    ///< max/min of the number expectations at the last time
};

/// All configured times for one N.
inline std::vector<ToyPoint> toy_points(const ToyScenario& s, int N) {
  s.validate();
  const int d = s.modes();
  auto basis = std::make_shared<const FockBasis>(d, s.n_max(N));
  const FockOperator h = hamiltonian(*basis, s.h, s.v, s.g / N);
  const ShellPropagator prop(basis, h);
  const HartreeFlow flow(s.h, s.v, s.g);
  const double root = std::sqrt(static_cast<double>(N));

  FockVector psi0 = FockVector::vacuum(basis);
  psi0.coefficients = weyl(*basis, root * s.phi0).unitary.apply(
      bogoliubov(*basis, s.kernel(s.phi0)).unitary.apply(psi0.coefficients));
  const double initial_leak = psi0.leakage() + std::abs(1.0 - psi0.coefficients.squaredNorm());

  std::vector<ToyPoint> out;
  Vec phi_t = s.phi0;
  double t_prev = 0.0;
  for (double t : s.times) {
    if (t > t_prev) {
      phi_t = flow.evolve(phi_t, t - t_prev, std::max(1, static_cast<int>(std::ceil((t - t_prev) / s.hartree_dt))));
      t_prev = t;
    }
    ToyPoint p;
    p.N = N;
    p.t = t;
    p.n_max = basis->n_max();
    p.dimension = basis->size();

    // Many-body state e^{-iHt} W(√N φ0) T(K0) Ω and its one-particle density.
    FockVector psi{basis, prop.apply(psi0.coefficients, t)};
    p.max_leakage = std::max(initial_leak, psi.leakage());
    if (p.max_leakage > kLeakageTolerance)
      throw NumericalBudgetError("toy scenario: leakage " + std::to_string(p.max_leakage) + " at N = " +
                                 std::to_string(N));
    const auto gamma = reduced_density(psi);
    const Vec phi_unit = phi_t / phi_t.norm();
    const auto td = trace_distance_to_rank_one(gamma, phi_unit);
    p.trace_distance = td.trace_norm;
    p.hs_distance = td.hs_norm;
    p.gamma_min_eigenvalue = gamma.min_eigenvalue();
    p.gamma_trace = gamma.trace();

    // Fluctuation vector 𝒰(t;0)Ω with the kernel following the condensate.
    FluctuationInputs in;
    in.N = N;
    in.phi = [&](double tau) { return tau == 0.0 ? s.phi0 : phi_t; };
    in.K = [&](double tau) { return s.kernel(tau == 0.0 ? s.phi0 : phi_t); };
    const auto fl = fluctuation_dynamics(prop, in, FockVector::vacuum(basis), t);
    p.number_expectation = fl.state.number_expectation();
    p.max_leakage = std::max(p.max_leakage, fl.max_leakage);
    out.push_back(p);
  }
  return out;
}

inline ToyReport toy_main_theorem(const ToyScenario& s) {
  s.validate();
  ToyReport rep;
  std::vector<double> x, y;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int N : s.N_list) {
    const auto pts = toy_points(s, N);
    rep.points.insert(rep.points.end(), pts.begin(), pts.end());
    x.push_back(N);
    y.push_back(pts.back().trace_distance);
    lo = std::min(lo, pts.back().number_expectation);
    hi = std::max(hi, pts.back().number_expectation);
  }
  rep.number_spread = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  if (x.size() >= 3) rep.distance_rate = fit_rate_or_degenerate(x, y, 1e-13);
  else rep.distance_rate.note = "fewer than 3 values of N, no fit";
  return rep;
}

/// Algebraic identities of the truncated Fock space with fixed probe vectors.
struct IdentityReport {
  int d = 0;
  int n_max = 0;
  double ccr = 0.0;                     ///< max |[a_i, a_j^*] - δ_ij| on n < n_max
  double weyl_product = 0.0;
  double weyl_shift = 0.0;
  double bogoliubov_conjugation = 0.0;  ///< on n ≤ n_max - 4
  double symplectic = 0.0;
  double poisson_shell = 0.0;           ///< max over shells of |mass - Poisson|
  double squeezed_number = 0.0;         ///< max over r in squeezed_r of |⟨N⟩ - sinh² r|
  std::vector<double> squeezed_r = {0.05, 0.1};
  std::vector<std::pair<double, double>> squeezed_outside;  ///< (r, error) beyond the probe set
};

inline IdentityReport identity_suite(int d = 2, int n_max = 10) {
  if (d < 2) throw ConfigError("identity suite: needs at least two modes");
  auto b = std::make_shared<const FockBasis>(d, n_max);
  IdentityReport rep;
  rep.d = d;
  rep.n_max = n_max;

  const auto below = sub_cutoff_size(*b, n_max - 1);
  std::vector<Mat> a, ad;
  for (int i = 0; i < d; ++i) {
    const auto [x, y] = ladder(*b, i);
    a.push_back(Mat(x.matrix));
    ad.push_back(Mat(y.matrix));
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Mat c = a[static_cast<std::size_t>(i)] * ad[static_cast<std::size_t>(j)] -
              ad[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(i)];
      if (i == j) c -= Mat::Identity(c.rows(), c.cols());
      rep.ccr = std::max(rep.ccr, c.topLeftCorner(below, below).cwiseAbs().maxCoeff());
    }

  auto probe = [d](std::initializer_list<cplx> head) {
    Vec v = Vec::Zero(d);
    Eigen::Index i = 0;
    for (cplx c : head) v[i++] = c;
    return v;
  };
  const std::vector<std::pair<Vec, Vec>> pairs{
      {probe({0.4, 0.0}), probe({0.0, 0.3})},
      {probe({{0.3, 0.2}, {-0.1, 0.25}}), probe({{-0.2, 0.1}, {0.35, -0.05}})},
      {probe({{0.0, 0.3}, {0.0, -0.2}}), probe({{0.0, 0.3}, {0.0, -0.2}})}};
  for (const auto& [f, g] : pairs) {
    const auto w = check_weyl_relations(*b, f, g);
    rep.weyl_product = std::max(rep.weyl_product, w.product);
    rep.weyl_shift = std::max(rep.weyl_shift, w.shift);
  }

  Mat k = Mat::Zero(d, d);
  k(0, 0) = cplx(0.06, 0.02);
  k(0, 1) = k(1, 0) = cplx(0.04, -0.01);
  k(1, 1) = cplx(-0.03, 0.0);
  const auto t = bogoliubov(*b, k);
  for (const Vec& f : {probe({1.0, 0.0}), probe({{1.0, 0.2}, {-0.4, 0.6}})})
    rep.bogoliubov_conjugation = std::max(rep.bogoliubov_conjugation, bogoliubov_conjugation_residual(*b, t, f));
  rep.symplectic = t.blocks.symplectic_defect();

  const Vec f = probe({{0.8, 0.1}, {0.2, -0.55}});
  FockVector coh = FockVector::vacuum(b);
  coh.coefficients = weyl(*b, f).unitary.apply(coh.coefficients);
  const double mean = f.squaredNorm();
  for (int n = 0; n <= n_max; ++n) {
    const double poisson = std::exp(-mean + n * std::log(mean) - std::lgamma(n + 1.0));
    rep.poisson_shell = std::max(rep.poisson_shell, std::abs(coh.shell_mass(n) - poisson));
  }

  auto squeezed_error = [&](double r) {
    Mat kr = Mat::Zero(d, d);
    kr(0, 0) = r;
    FockVector sq = FockVector::vacuum(b);
    sq.coefficients = bogoliubov(*b, kr).unitary.apply(sq.coefficients);
    return std::abs(sq.number_expectation() - std::pow(std::sinh(r), 2));
  };
  for (double r : rep.squeezed_r) rep.squeezed_number = std::max(rep.squeezed_number, squeezed_error(r));
  for (double r : {0.2, 0.3}) rep.squeezed_outside.push_back({r, squeezed_error(r)});
  return rep;
}

/// Lattice analogue of the generator cancellation.  Modes sit on a line with
/// rescaled spacing `spacing`; V_xy and w_xy sample the potential and the
/// scattering profile at the rescaled distance.
struct CancellationScenario {
  int modes = 3;
  double N = 1.0;
  double spacing = 0.5;
  int n_max = 10;
  bool correlated = true;  ///< K = -N w∘φφᵀ, otherwise K = 0
  Vec phi;                 ///< unit-norm condensate, default uniform with a phase ramp

  Vec condensate() const {
    if (phi.size() == modes) return phi;
    Vec out(modes);
    for (int i = 0; i < modes; ++i) out[i] = std::polar(1.0, 0.3 * i) / std::sqrt(static_cast<double>(modes));
    return out;
  }
};

struct CancellationReport {
  double linear_sum = 0.0;     ///< linear amplitudes of T*(L1 + L3)T
  double linear_single = 0.0;  ///< linear amplitudes of T*L1 T
  double ratio = 0.0;
  double kernel_norm = 0.0;
  double leakage = 0.0;
};

inline CancellationReport generator_cancellation_check(const CancellationScenario& s,
                                                       const scattering::ScatteringSolution& sol,
                                                       const scattering::RadialPotential& v) {
  const int d = s.modes;
  if (d < 1 || d > kMaxModes) throw ConfigError("cancellation check: bad number of modes");
  if (s.n_max < 4) throw ConfigError("cancellation check: n_max must be at least 4");
  if (!(s.N >= 1.0)) throw DomainError("cancellation check: N must be at least 1");
  const Vec phi = s.condensate();
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw DomainError("cancellation check: phi is not normalised");

  Mat V(d, d), W(d, d);
  for (int x = 0; x < d; ++x)
    for (int y = 0; y < d; ++y) {
      const double r = s.spacing * std::abs(x - y);
      V(x, y) = v(r);
      W(x, y) = sol.at(r).w;
    }
  Mat K = Mat::Zero(d, d);
  if (s.correlated)
    for (int x = 0; x < d; ++x)
      for (int y = 0; y < d; ++y) K(x, y) = -s.N * W(x, y) * phi[x] * phi[y];

  const FockBasis b(d, s.n_max);
  const double rootN = std::sqrt(s.N);
  std::vector<std::pair<cplx, std::vector<LadderLetter>>> l1, l3;
  for (int x = 0; x < d; ++x) {
    cplx c = 0.0;
    for (int y = 0; y < d; ++y) c += V(x, y) * W(x, y) * std::norm(phi[y]);
    l1.push_back({rootN * c * phi[x], {{x, true}}});
    l1.push_back({rootN * c * std::conj(phi[x]), {{x, false}}});
  }
  for (int x = 0; x < d; ++x)
    for (int y = 0; y < d; ++y) {
      if (V(x, y) == 0.0) continue;
      l3.push_back({V(x, y) / rootN * phi[y], {{x, true}, {y, true}, {x, false}}});
      l3.push_back({V(x, y) / rootN * std::conj(phi[y]), {{x, true}, {y, false}, {x, false}}});
    }
  const SpMat L1 = assemble(b, l1);
  const SpMat L3 = assemble(b, l3);

  std::vector<std::pair<cplx, std::vector<LadderLetter>>> gen;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      gen.push_back({0.5 * K(i, j), {{i, true}, {j, true}}});
      gen.push_back({-0.5 * std::conj(K(i, j)), {{i, false}, {j, false}}});
    }
  const Mat T = Mat(assemble(b, gen)).exp();

  // Columns of T for Ω and the one-particle states, and the leakage they carry.
  std::vector<Eigen::Index> cols{0};
  for (int z = 0; z < d; ++z) cols.push_back(static_cast<Eigen::Index>(b.shell_begin(1)) + z);
  CancellationReport rep;
  rep.kernel_norm = K.norm();
  const auto top = static_cast<Eigen::Index>(b.shell_begin(b.n_max()));
  for (auto c : cols) rep.leakage = std::max(rep.leakage, T.col(c).tail(T.rows() - top).squaredNorm());
  if (rep.leakage > kLeakageTolerance)
    throw NumericalBudgetError("cancellation check: leakage " + std::to_string(rep.leakage));

  auto linear_amplitudes = [&](const SpMat& L) {
    const Vec l_vac = L * T.col(0);
    double s2 = 0.0;
    for (std::size_t z = 1; z < cols.size(); ++z) {
      const Vec l_one = L * T.col(cols[z]);
      s2 += std::norm(T.col(cols[z]).dot(l_vac)) + std::norm(T.col(0).dot(l_one));
    }
    return std::sqrt(s2);
  };
  rep.linear_single = linear_amplitudes(L1);
  rep.linear_sum = linear_amplitudes(SpMat(L1 + L3));
  rep.ratio = rep.linear_single > 0.0 ? rep.linear_sum / rep.linear_single : 0.0;
  return rep;
}

}  // namespace gpk::fock
