#pragma once

// Correlation kernel k(x,y) = -N w(N(x-y)) φ(x) φ(y), the hyperbolic operator
// series ch(k), sh(k), and the norm bounds used by the fluctuation analysis.
//
// Dense kernels are kept for small grids.  Norm studies on 3D grids use the
// structure k = -g(x-y) φ(x) φ(y) with g(r) = N w(N r): every quantity reduces
// to convolutions of |φ|² with radial functions of g, evaluated through
// Fourier multipliers computed by 1D quadrature in the fine variable s = N r.
// This resolves the 1/N length scale of g without sampling it on the grid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "gpk/error.hpp"
#include "gpk/gp_dynamics.hpp"
#include "gpk/grid.hpp"
#include "gpk/scattering.hpp"

namespace gpk::kernels {

using gp::WaveFunction;
using scattering::zero_energy_cancellation_residual;

inline constexpr std::size_t kMaxDensePoints = 4096;

/// Integer squared minimum-image distance between two grid points.
inline long long squared_offset(const GridSpec& g, std::size_t i, std::size_t j) {
  const auto a = g.unflatten(i), b = g.unflatten(j);
  long long s = 0;
  for (int d = 0; d < g.dim; ++d) {
    long long m = std::abs(a[d] - b[d]);
    m = std::min<long long>(m, g.points - m);
    s += m * m;
  }
  return s;
}

/// Kernel values on grid pairs; the operator it defines on L² has matrix
/// values * dV (trapezoidal weights on the periodic grid).
struct TwoPointKernel {
  GridSpec grid;
  Eigen::MatrixXcd values;
  bool symmetric = true;
  std::vector<std::string> warnings;

  double weight() const { return grid.cell_volume(); }
  Eigen::MatrixXcd op() const { return values * weight(); }
  double hs_norm() const { return values.norm() * weight(); }

  static TwoPointKernel from_operator(const GridSpec& g, const Eigen::MatrixXcd& op,
                                      bool symmetric) {
    return {g, op / g.cell_volume(), symmetric, {}};
  }

  static TwoPointKernel zero(const GridSpec& g) {
    const auto m = static_cast<Eigen::Index>(g.size());
    return {g, Eigen::MatrixXcd::Zero(m, m), true, {}};
  }
};

namespace detail {

inline void check_dense(const GridSpec& g) {
  g.validate();
  if (g.size() > kMaxDensePoints)
    throw ConfigError("dense kernel on " + std::to_string(g.size()) +
                      " points exceeds the budget of " + std::to_string(kMaxDensePoints) +
                      "; use kernel_bound_report for large grids");
}

inline void check_normalised(const WaveFunction& phi) {
  if (std::abs(phi.l2_norm() - 1.0) > 1e-8) throw DomainError("kernel: phi is not normalised");
}

inline std::vector<std::string> resolution_warnings(const GridSpec& g,
                                                    const scattering::ScatteringSolution& sol,
                                                    double n) {
  std::vector<std::string> out;
  double support = 0.0;
  for (std::size_t i = 0; i < sol.r.size(); ++i)
    if (sol.v_samples[i] > 1e-12) support = sol.r[i];
  if (support > 0.0 && n * g.dx() > 10.0 * support)
    out.push_back("grid too coarse for w(N .): N dx = " + std::to_string(n * g.dx()) +
                  " exceeds 10 r_support");
  return out;
}

/// Builds -N w(N|x-y|) a(x) b(y) (symmetrised if a == b).
inline TwoPointKernel pair_kernel(const GridSpec& g, const scattering::ScatteringSolution& sol,
                                  double n, const Field& a, const Field& b) {
  const auto m = static_cast<Eigen::Index>(g.size());
  TwoPointKernel k{g, Eigen::MatrixXcd(m, m), true, {}};
  std::map<long long, double> profile;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const long long key = squared_offset(g, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      auto it = profile.find(key);
      if (it == profile.end())
        it = profile.emplace(key, n * sol.at(n * g.dx() * std::sqrt(static_cast<double>(key))).w).first;
      const double c = -it->second;
      const cplx v = c * (a[i] * b[j] + a[j] * b[i]) * 0.5;
      k.values(i, j) = v;
      k.values(j, i) = v;
    }
  return k;
}

}  // namespace detail

inline TwoPointKernel build_kt(const WaveFunction& phi, const scattering::ScatteringSolution& sol,
                               double n) {
  if (n < 1.0) throw DomainError("build_kt: N must be at least 1");
  detail::check_dense(phi.grid);
  detail::check_normalised(phi);
  auto k = detail::pair_kernel(phi.grid, sol, n, phi.values, phi.values);
  k.warnings = detail::resolution_warnings(phi.grid, sol, n);
  return k;
}

/// -N w(N(x-y)) (φ̇(x)φ(y) + φ(x)φ̇(y)).
inline TwoPointKernel time_derivative_kt(const WaveFunction& phi, const WaveFunction& phi_dot,
                                         const scattering::ScatteringSolution& sol, double n) {
  if (n < 1.0) throw DomainError("time_derivative_kt: N must be at least 1");
  if (!phi.grid.same_mesh(phi_dot.grid)) throw ConfigError("time_derivative_kt: grids differ");
  detail::check_dense(phi.grid);
  // pair_kernel symmetrises a(x)b(y); the product rule needs twice that.
  auto k = detail::pair_kernel(phi.grid, sol, n, phi_dot.values, phi.values);
  k.values *= 2.0;
  k.warnings = detail::resolution_warnings(phi.grid, sol, n);
  return k;
}

/// ‖∇₁k‖₂ with spectral differentiation in the first slot.
inline double grad1_norm(const TwoPointKernel& k) {
  const GridSpec& g = k.grid;
  FftPlan plan(g);
  WaveVectors waves(g);
  double total = 0.0;
  Field col(g.size());
  for (Eigen::Index j = 0; j < k.values.cols(); ++j) {
    for (std::size_t i = 0; i < g.size(); ++i) col[i] = k.values(static_cast<Eigen::Index>(i), j);
    plan.forward(col);
    for (std::size_t i = 0; i < g.size(); ++i) total += waves.k2[i] * std::norm(col[i]);
  }
  // Parseval: Σ_x |∂f|² = Σ_p |p|²|f̂|² / M.
  return std::sqrt(total / static_cast<double>(g.size())) * k.weight();
}

/// sup_x ‖k(·, x)‖₂.
inline double sup_slice_norm(const TwoPointKernel& k) {
  return k.values.colwise().norm().maxCoeff() * std::sqrt(k.weight());
}

struct BogoliubovKernels {
  TwoPointKernel p;   ///< ch(k) - 1
  TwoPointKernel r;   ///< sh(k) - k
  TwoPointKernel sh;
  int series_terms_used = 0;
  double truncation_error_bound = 0.0;
  double k_norm = 0.0;

  Eigen::MatrixXcd ch_operator() const {
    const auto m = p.values.rows();
    return p.op() + Eigen::MatrixXcd::Identity(m, m);
  }
  const TwoPointKernel& ch_minus_identity() const { return p; }
};

/// Σ_{j ≥ start} x^j / j!.
inline double exponential_tail(double x, int start) {
  if (x == 0.0) return 0.0;
  double term = 1.0;
  for (int j = 1; j <= start; ++j) term *= x / j;
  double sum = 0.0;
  for (int j = start; j < start + 10000; ++j) {
    sum += term;
    if (term <= 1e-18 * sum && j > x) break;
    term *= x / (j + 1);
  }
  return sum;
}

/// ch(k) = Σ (k k̄)ⁿ/(2n)!, sh(k) = Σ (k k̄)ⁿ k/(2n+1)!.  Terms are added while
/// the bound ‖k‖^{2n}/(2n)! is at least tol.
inline BogoliubovKernels hyperbolic_series(const TwoPointKernel& k, double tol) {
  if (!(tol > 0.0)) throw ConfigError("hyperbolic_series: tol must be positive");
  const Eigen::MatrixXcd K = k.op();
  const double norm = K.norm();
  if (!std::isfinite(norm)) throw DomainError("hyperbolic_series: kernel norm is not finite");
  const auto m = K.rows();
  const Eigen::MatrixXcd A = K * K.conjugate();
  Eigen::MatrixXcd power = Eigen::MatrixXcd::Identity(m, m);
  Eigen::MatrixXcd ch_minus = Eigen::MatrixXcd::Zero(m, m);
  Eigen::MatrixXcd sh = K;
  double bound = 1.0;  // ‖k‖^{2n}/(2n)!
  double fact_even = 1.0, fact_odd = 1.0;
  int n = 0;
  while (true) {
    const int next = n + 1;
    bound *= norm * norm / ((2.0 * next - 1.0) * (2.0 * next));
    if (bound < tol || norm == 0.0) break;
    n = next;
    power = power * A;
    fact_even *= (2.0 * n - 1.0) * (2.0 * n);
    fact_odd = fact_even * (2.0 * n + 1.0);
    ch_minus += power / fact_even;
    sh += power * K / fact_odd;
  }
  BogoliubovKernels out;
  out.series_terms_used = n;
  out.k_norm = norm;
  out.truncation_error_bound = exponential_tail(norm, 2 * (n + 1));
  out.p = TwoPointKernel::from_operator(k.grid, ch_minus, k.symmetric);
  out.sh = TwoPointKernel::from_operator(k.grid, sh, k.symmetric);
  out.r = TwoPointKernel::from_operator(k.grid, sh - K, k.symmetric);
  return out;
}

/// max |ch ch* - sh sh* - 1|.
inline double symplectic_defect(const BogoliubovKernels& b) {
  const Eigen::MatrixXcd ch = b.ch_operator();
  const Eigen::MatrixXcd sh = b.sh.op();
  const auto m = ch.rows();
  return (ch * ch.adjoint() - sh * sh.adjoint() - Eigen::MatrixXcd::Identity(m, m))
      .cwiseAbs()
      .maxCoeff();
}

/// max |r(x,y)| / (|φ(x)||φ(y)|) over pairs with |φ(x)φ(y)| above `floor` times its maximum.
inline double pointwise_domination_ratio(const TwoPointKernel& r, const WaveFunction& phi,
                                         double floor = 1e-6) {
  double peak = 0.0;
  for (const auto& v : phi.values) peak = std::max(peak, std::norm(v));
  double ratio = 0.0;
  for (Eigen::Index i = 0; i < r.values.rows(); ++i)
    for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
      const double d = std::abs(phi.values[i]) * std::abs(phi.values[j]);
      if (d < floor * peak) continue;
      ratio = std::max(ratio, std::abs(r.values(i, j)) / d);
    }
  return ratio;
}

/// Band-limited resampling of φ onto a grid with fewer points per axis.
inline WaveFunction downsample(const WaveFunction& phi, int points) {
  const GridSpec& fine = phi.grid;
  if (points == fine.points) return phi;
  if (points > fine.points) throw ConfigError("downsample: target grid is finer than the source");
  GridSpec coarse = fine;
  coarse.points = points;
  coarse.validate();
  Field hat = phi.values;
  FftPlan(fine).forward(hat);
  Field out(coarse.size(), cplx(0.0));
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const auto c = coarse.unflatten(i);
    std::size_t src = 0;
    bool keep = true;
    for (int a = 0; a < coarse.dim; ++a) {
      const int m = coarse.mode_index(c[a]);
      if (2 * std::abs(m) >= points) keep = false;
      src = src * static_cast<std::size_t>(fine.points) +
            static_cast<std::size_t>(m < 0 ? m + fine.points : m);
    }
    if (keep) out[i] = hat[src];
  }
  FftPlan(coarse).inverse(out);
  const double scale = static_cast<double>(coarse.size()) / static_cast<double>(fine.size());
  for (auto& v : out) v *= scale;
  WaveFunction w{coarse, std::move(out)};
  w.normalize();
  return w;
}

/// Quadrature for d-dimensional Fourier transforms of radial functions
/// F(|x|) supported in |x| ≤ s_max:
///   d=1: 2∫cos(qs)F ds,  d=2: 2π∫ s J0(qs) F ds,  d=3: 4π∫ s² sin(qs)/(qs) F ds.
class RadialQuadrature {
 public:
  /// Simpson on the scattering grid up to its end, then a uniform grid whose
  /// step resolves oscillations up to q_max.
  RadialQuadrature(const scattering::ScatteringSolution& sol, double s_max, double q_max) {
    const double h1 = sol.step;
    const double s1 = std::min(s_max, sol.r_max());
    const long long c1 = static_cast<long long>(std::floor(s1 / h1 + 1e-9));
    add_simpson(0.0, h1, c1);
    const double start = static_cast<double>(c1) * h1;
    if (s_max > start) {
      const double h = std::min(0.02, q_max > 0.0 ? 0.1 / q_max : 0.02);
      const long long c2 = std::max<long long>(1, static_cast<long long>(std::ceil((s_max - start) / h)));
      add_simpson(start, (s_max - start) / static_cast<double>(c2), c2);
    }
  }

  const std::vector<double>& nodes() const { return nodes_; }

  /// Transform of F given its values at nodes().
  double transform(int dim, const std::vector<double>& values, double q) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const double r = nodes_[i];
      double kern;
      if (dim == 1) {
        kern = 2.0 * std::cos(q * r);
      } else if (dim == 2) {
        kern = 2.0 * std::numbers::pi * r * std::cyl_bessel_j(0.0, q * r);
      } else {
        const double x = q * r;
        const double sinc = std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        kern = 4.0 * std::numbers::pi * r * r * sinc;
      }
      s += weights_[i] * values[i] * kern;
    }
    return s;
  }

 private:
  void add_simpson(double a, double h, long long cells) {
    for (long long c = 0; c < cells; ++c) {
      const double lo = a + static_cast<double>(c) * h;
      push(lo, h / 6.0);
      push(lo + 0.5 * h, 4.0 * h / 6.0);
      push(lo + h, h / 6.0);
    }
  }
  void push(double r, double w) {
    if (!nodes_.empty() && nodes_.back() == r) {
      weights_.back() += w;
      return;
    }
    nodes_.push_back(r);
    weights_.push_back(w);
  }

  std::vector<double> nodes_;
  std::vector<double> weights_;
};

struct KernelBoundReport {
  double N = 0.0;
  double t = 0.0;
  double l2_k = 0.0;
  double l2_grad1_k = 0.0;
  double l2_grad1_kkbar = 0.0;
  double sup_x_l2_slice = 0.0;
  double pointwise_ratio_max = 0.0;
  double h2_norm_phi = 0.0;
  std::vector<std::string> warnings;

  double grad1_k_over_sqrt_n() const { return l2_grad1_k / std::sqrt(N); }
};

struct KernelBoundOptions {
  int kernel_points = 32;   ///< per axis, after spectral downsampling
  int column_stride = 2;    ///< second-slot sampling stride for ‖∇₁(k k̄)‖
  double density_floor = 1e-10;
  double t = 0.0;
};

/// Norms of k_t for each N in n_list, from the structured representation.
inline std::vector<KernelBoundReport> kernel_bound_report(const WaveFunction& phi_in,
                                                          const scattering::ScatteringSolution& sol,
                                                          const std::vector<double>& n_list,
                                                          const KernelBoundOptions& opt = {}) {
  if (n_list.empty()) throw ConfigError("kernel_bound_report: N list is empty");
  detail::check_normalised(phi_in);
  const WaveFunction phi = downsample(phi_in, std::min(opt.kernel_points, phi_in.grid.points));
  const GridSpec& g = phi.grid;
  const std::size_t m = g.size();
  const double dv = g.cell_volume();
  FftPlan plan(g);
  WaveVectors waves(g);

  // |φ|², its transform, ∇φ and |∇φ|².
  Field rho_hat(m);
  std::vector<double> rho(m);
  for (std::size_t i = 0; i < m; ++i) {
    rho[i] = std::norm(phi.values[i]);
    rho_hat[i] = rho[i];
  }
  plan.forward(rho_hat);
  const Field phi_hat = [&] {
    Field h = phi.values;
    plan.forward(h);
    return h;
  }();
  std::array<Field, 3> grad_phi;
  std::vector<double> grad_phi_sq(m, 0.0);
  for (int a = 0; a < g.dim; ++a) {
    grad_phi[a].resize(m);
    for (std::size_t i = 0; i < m; ++i) grad_phi[a][i] = cplx(0, waves.k[i][a]) * phi_hat[i];
    plan.inverse(grad_phi[a]);
    for (std::size_t i = 0; i < m; ++i) grad_phi_sq[i] += std::norm(grad_phi[a][i]);
  }
  double rho_peak = 0.0;
  for (double r : rho) rho_peak = std::max(rho_peak, r);
  const double h2 = gp::sobolev_norm(phi, 2, &plan, &waves).norm;

  // Distinct |p| on the grid, keyed by the integer Σ m_a².
  std::map<long long, double> modulus;
  std::vector<long long> key_of(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto c = g.unflatten(i);
    long long key = 0;
    for (int a = 0; a < g.dim; ++a) {
      const long long mi = g.mode_index(c[a]);
      key += mi * mi;
    }
    key_of[i] = key;
    modulus[key] = std::sqrt(waves.k2[i]);
  }
  double p_max = 0.0;
  for (const auto& [key, p] : modulus) p_max = std::max(p_max, p);

  std::vector<KernelBoundReport> reports;
  for (double n : n_list) {
    if (n < 1.0) throw DomainError("kernel_bound_report: N must be at least 1");
    KernelBoundReport rep;
    rep.N = n;
    rep.t = opt.t;
    rep.h2_norm_phi = h2;
    rep.warnings = detail::resolution_warnings(g, sol, n);

    // Radial multipliers of g, g² and |∇g|² with g(r) = N w(N r), r ≤ L/2.
    const double s_max = n * 0.5 * g.box_length;
    RadialQuadrature quad(sol, s_max, p_max / n);
    std::vector<double> w_vals, w_sq, dw_sq;
    for (double s : quad.nodes()) {
      const auto pv = sol.at(s);
      w_vals.push_back(pv.w);
      w_sq.push_back(pv.w * pv.w);
      dw_sq.push_back(pv.dw * pv.dw);
    }
    const double nd = std::pow(n, -g.dim);
    std::map<long long, std::array<double, 3>> symbols;
    for (const auto& [key, p] : modulus) {
      const double q = p / n;
      symbols[key] = {n * nd * quad.transform(g.dim, w_vals, q),
                      n * n * nd * quad.transform(g.dim, w_sq, q),
                      n * n * n * n * nd * quad.transform(g.dim, dw_sq, q)};
    }

    // (g² * ρ) and (|∇g|² * ρ) on the grid.
    Field c2(m), cd(m);
    double grad_cross = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& s = symbols[key_of[i]];
      c2[i] = s[1] * rho_hat[i];
      cd[i] = s[2] * rho_hat[i];
      grad_cross += waves.k2[i] * s[1] * std::norm(rho_hat[i]);
    }
    plan.inverse(c2);
    plan.inverse(cd);
    double l2 = 0.0, sup = 0.0, grad = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      l2 += rho[i] * c2[i].real();
      sup = std::max(sup, rho[i] * c2[i].real());
      grad += grad_phi_sq[i] * c2[i].real() + rho[i] * cd[i].real();
    }
    rep.l2_k = std::sqrt(std::max(0.0, l2 * dv));
    rep.sup_x_l2_slice = std::sqrt(std::max(0.0, sup));
    rep.l2_grad1_k =
        std::sqrt(std::max(0.0, grad * dv + 0.5 * grad_cross * dv / static_cast<double>(m)));

    // ‖∇₁(k k̄)‖²: (k k̄)(x,z) = φ(x) conj φ(z) Q_z(x) with Q_z = g * (ρ g(· - z)).
    Field g_hat(m), g_band(m);
    for (std::size_t i = 0; i < m; ++i) g_hat[i] = symbols[key_of[i]][0];
    g_band = g_hat;
    plan.inverse(g_band);
    for (auto& v : g_band) v /= dv;
    double kk = 0.0;
    const int stride = std::max(1, opt.column_stride);
    Field h(m), q_field(m);
    std::array<Field, 3> grad_q;
    for (std::size_t z = 0; z < m; ++z) {
      const auto cz = g.unflatten(z);
      bool on_lattice = true;
      for (int a = 0; a < g.dim; ++a) on_lattice = on_lattice && cz[a] % stride == 0;
      if (!on_lattice || rho[z] < opt.density_floor * rho_peak) continue;
      for (std::size_t y = 0; y < m; ++y) {
        const auto cy = g.unflatten(y);
        std::size_t off = 0;
        for (int a = 0; a < g.dim; ++a)
          off = off * static_cast<std::size_t>(g.points) +
                static_cast<std::size_t>((cy[a] - cz[a] + g.points) % g.points);
        h[y] = rho[y] * g_band[off];
      }
      plan.forward(h);
      for (std::size_t i = 0; i < m; ++i) h[i] *= g_hat[i];
      q_field = h;
      plan.inverse(q_field);
      for (int a = 0; a < g.dim; ++a) {
        grad_q[a].resize(m);
        for (std::size_t i = 0; i < m; ++i) grad_q[a][i] = cplx(0, waves.k[i][a]) * h[i];
        plan.inverse(grad_q[a]);
      }
      double col = 0.0;
      for (std::size_t x = 0; x < m; ++x)
        for (int a = 0; a < g.dim; ++a)
          col += std::norm(grad_phi[a][x] * q_field[x] + phi.values[x] * grad_q[a][x]);
      kk += col * dv * rho[z];
    }
    rep.l2_grad1_kkbar = std::sqrt(kk * dv * std::pow(stride, g.dim));

    // |k(x,y)| / min(N|φ(x)φ(y)|, |φ(x)φ(y)|/|x-y|) = N w(N r) / min(N, 1/r).
    double ratio = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double r = g.dx() * std::sqrt(static_cast<double>(squared_offset(g, 0, j)));
      const double bound = r > 0.0 ? std::min(n, 1.0 / r) : n;
      ratio = std::max(ratio, n * sol.at(n * r).w / bound);
    }
    rep.pointwise_ratio_max = ratio;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace gpk::kernels
