#pragma once

// Bosonic Fock space over d modes truncated at total particle number n_max.
//
// Basis order: by total particle number n, then within a shell in decreasing
// lexicographic order of the occupation vector, e.g. for d = 2:
//   00, 10, 01, 20, 11, 02, 30, 21, ...
// Shells are contiguous, so the n-particle sector is an index range.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpk/error.hpp"

namespace gpk::fock {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline constexpr int kMaxModes = 6;
inline constexpr std::size_t kMaxDimension = 20000;
inline constexpr std::size_t kDenseExpLimit = 800;
/// Exponentials are computed on n ≤ n_max + padding and then restricted.
inline constexpr int kMaxPadding = 16;
inline constexpr std::size_t kMaxPaddedDimension = 60000;

class FockBasis {
 public:
  FockBasis(int d, int n_max, std::size_t budget = kMaxDimension) : d_(d), n_max_(n_max) {
    if (d < 1 || n_max < 0) throw ConfigError("fock basis: need d >= 1 and n_max >= 0");
    const double estimate = closed_form_dim(d, n_max);
    if (d > kMaxModes || estimate > static_cast<double>(budget))
      throw ConfigError("fock basis: d = " + std::to_string(d) + ", n_max = " +
                        std::to_string(n_max) + " gives dimension " +
                        std::to_string(static_cast<long long>(estimate)) +
                        ", above the budget (d <= " + std::to_string(kMaxModes) + ", dim <= " +
                        std::to_string(budget) + ")");
    std::vector<int> occ(static_cast<std::size_t>(d), 0);
    for (int n = 0; n <= n_max; ++n) {
      shell_begin_.push_back(size());
      enumerate(n, 0, occ);
    }
    shell_begin_.push_back(size());
    if (static_cast<double>(size()) != estimate)
      throw InvariantViolation("fock basis: enumeration does not match the closed form");
  }

  /// Σ_{n ≤ n_max} C(n+d-1, d-1) = C(n_max+d, d).
  static double closed_form_dim(int d, int n_max) {
    double c = 1.0;
    for (int j = 1; j <= d; ++j) c = c * (n_max + j) / j;
    return std::round(c);
  }

  int modes() const { return d_; }
  int n_max() const { return n_max_; }
  std::size_t size() const { return totals_.size(); }
  int total(std::size_t i) const { return totals_[i]; }
  int occupation(std::size_t i, int mode) const {
    return occupations_[i * static_cast<std::size_t>(d_) + static_cast<std::size_t>(mode)];
  }
  std::vector<int> occupations(std::size_t i) const {
    auto first = occupations_.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(d_));
    return {first, first + d_};
  }
  std::size_t shell_begin(int n) const { return shell_begin_[static_cast<std::size_t>(n)]; }
  std::size_t shell_end(int n) const { return shell_begin_[static_cast<std::size_t>(n) + 1]; }

  std::optional<std::size_t> index(const std::vector<int>& occ) const {
    int n = 0;
    for (int v : occ) {
      if (v < 0) return std::nullopt;
      n += v;
    }
    if (n > n_max_ || static_cast<int>(occ.size()) != d_) return std::nullopt;
    auto it = lookup_.find(key(occ));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::uint64_t key(const std::vector<int>& occ) const {
    std::uint64_t k = 0;
    for (int v : occ) k = k * static_cast<std::uint64_t>(n_max_ + 1) + static_cast<std::uint64_t>(v);
    return k;
  }

  void enumerate(int remaining, int mode, std::vector<int>& occ) {
    if (mode == d_ - 1) {
      occ[static_cast<std::size_t>(mode)] = remaining;
      lookup_.emplace(key(occ), size());
      occupations_.insert(occupations_.end(), occ.begin(), occ.end());
      int n = 0;
      for (int v : occ) n += v;
      totals_.push_back(n);
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      occ[static_cast<std::size_t>(mode)] = v;
      enumerate(remaining - v, mode + 1, occ);
    }
  }

  int d_;
  int n_max_;
  std::vector<int> occupations_;
  std::vector<int> totals_;
  std::vector<std::size_t> shell_begin_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

struct FockOperator {
  SpMat matrix;
  bool hermitian = false;
  bool particle_conserving = false;
};

/// One ladder step on an occupation vector: `create` or annihilate `mode`.
/// Returns the √ factor, or 0 if the result leaves the truncated space.
inline double ladder_step(std::vector<int>& occ, int mode, bool create, int n_max) {
  int& v = occ[static_cast<std::size_t>(mode)];
  if (create) {
    int n = 0;
    for (int x : occ) n += x;
    if (n + 1 > n_max) return 0.0;
    ++v;
    return std::sqrt(static_cast<double>(v));
  }
  if (v == 0) return 0.0;
  const double f = std::sqrt(static_cast<double>(v));
  --v;
  return f;
}

/// A word of ladder operators, applied right to left: word[0] acts last.
struct LadderLetter {
  int mode;
  bool create;
};

/// Sparse matrix of coeff * (word) summed over several words.
inline SpMat assemble(const FockBasis& b,
                      const std::vector<std::pair<cplx, std::vector<LadderLetter>>>& terms) {
  std::vector<Eigen::Triplet<cplx>> trip;
  std::vector<int> occ;
  for (std::size_t s = 0; s < b.size(); ++s)
    for (const auto& [coeff, word] : terms) {
      if (coeff == cplx(0.0)) continue;
      occ = b.occupations(s);
      double amp = 1.0;
      for (auto it = word.rbegin(); it != word.rend() && amp != 0.0; ++it)
        amp *= ladder_step(occ, it->mode, it->create, b.n_max());
      if (amp == 0.0) continue;
      trip.emplace_back(static_cast<int>(*b.index(occ)), static_cast<int>(s), coeff * amp);
    }
  const int n = static_cast<int>(b.size());
  SpMat m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

inline std::pair<FockOperator, FockOperator> ladder(const FockBasis& b, int mode) {
  if (mode < 0 || mode >= b.modes()) throw ConfigError("ladder: mode out of range");
  SpMat a = assemble(b, {{cplx(1.0), {{mode, false}}}});
  SpMat ad = SpMat(a.adjoint());
  return {FockOperator{a, false, false}, FockOperator{ad, false, false}};
}

inline FockOperator number_operator(const FockBasis& b) {
  const int n = static_cast<int>(b.size());
  SpMat m(n, n);
  m.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) m.insert(i, i) = static_cast<double>(b.total(static_cast<std::size_t>(i)));
  m.makeCompressed();
  return {m, true, true};
}

/// a(f) = Σ conj(f_i) a_i.
inline SpMat annihilate(const FockBasis& b, const Vec& f) {
  std::vector<std::pair<cplx, std::vector<LadderLetter>>> terms;
  for (int i = 0; i < b.modes(); ++i) terms.push_back({std::conj(f[i]), {{i, false}}});
  return assemble(b, terms);
}

/// a*(f) = Σ f_i a_i^*.
inline SpMat create(const FockBasis& b, const Vec& f) {
  std::vector<std::pair<cplx, std::vector<LadderLetter>>> terms;
  for (int i = 0; i < b.modes(); ++i) terms.push_back({f[i], {{i, true}}});
  return assemble(b, terms);
}

/// Interaction tensor v[i][j][k][l] stored flat, index ((i d + j) d + k) d + l.
struct ModeTensor {
  int d = 0;
  std::vector<cplx> values;

  cplx operator()(int i, int j, int k, int l) const {
    return values[static_cast<std::size_t>(((i * d + j) * d + k) * d + l)];
  }
  cplx& operator()(int i, int j, int k, int l) {
    return values[static_cast<std::size_t>(((i * d + j) * d + k) * d + l)];
  }

  static ModeTensor zero(int d) {
    return {d, std::vector<cplx>(static_cast<std::size_t>(d * d * d * d), 0.0)};
  }
  /// v_iiii = u: on-site (Bose-Hubbard) interaction.
  static ModeTensor on_site(int d, double u) {
    auto v = zero(d);
    for (int i = 0; i < d; ++i) v(i, i, i, i) = u;
    return v;
  }
  /// v_ijji = pair(i, j): density-density interaction Σ V_ij n_i n_j style.
  static ModeTensor density(const Mat& pair) {
    const int d = static_cast<int>(pair.rows());
    auto v = zero(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) v(i, j, j, i) = pair(i, j);
    return v;
  }
};

/// Σ h_ij a_i^* a_j + (coupling/2) Σ v_ijkl a_i^* a_j^* a_k a_l.
inline FockOperator hamiltonian(const FockBasis& b, const Mat& h, const ModeTensor& v,
                                double coupling) {
  const int d = b.modes();
  if (h.rows() != d || h.cols() != d) throw ConfigError("hamiltonian: h must be d x d");
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("hamiltonian: h is not hermitian");
  if (v.d != d) throw ConfigError("hamiltonian: interaction tensor has the wrong size");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
          if (std::abs(v(i, j, k, l) - std::conj(v(l, k, j, i))) > 1e-12)
            throw DomainError("hamiltonian: interaction tensor is not hermitian");
          if (std::abs(v(i, j, k, l) - v(j, i, l, k)) > 1e-12)
            throw DomainError("hamiltonian: interaction tensor is not exchange symmetric");
        }
  std::vector<std::pair<cplx, std::vector<LadderLetter>>> terms;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) terms.push_back({h(i, j), {{i, true}, {j, false}}});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
          terms.push_back({0.5 * coupling * v(i, j, k, l), {{i, true}, {j, true}, {k, false}, {l, false}}});
  return {assemble(b, terms), true, true};
}

/// Largest column sum of |G|.
inline double one_norm(const SpMat& g) {
  double best = 0.0;
  for (int c = 0; c < g.outerSize(); ++c) {
    double s = 0.0;
    for (SpMat::InnerIterator it(g, c); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

/// exp(t G) v by Taylor series on substeps of unit-norm size.
inline Vec expmv(const SpMat& g, const Vec& v, double t = 1.0) {
  const double norm = one_norm(g) * std::abs(t);
  const int steps = std::max(1, static_cast<int>(std::ceil(norm)));
  const double tau = t / steps;
  Vec out = v;
  for (int s = 0; s < steps; ++s) {
    Vec term = out;
    Vec sum = out;
    for (int k = 1; k < 200; ++k) {
      term = (g * term) * (tau / k);
      sum += term;
      if (term.norm() <= 1e-17 * sum.norm()) break;
    }
    out = sum;
  }
  return out;
}

/// Padding used for exponentials on `b`.
inline int padding_for(const FockBasis& b) {
  int pad = kMaxPadding;
  while (pad > 0 && FockBasis::closed_form_dim(b.modes(), b.n_max() + pad) >
                        static_cast<double>(kMaxPaddedDimension))
    --pad;
  return pad;
}

/// U = exp(G) restricted to the first `physical` basis states, where the
/// anti-hermitian generator G lives on an enlarged cutoff.  Dense below
/// kDenseExpLimit, matrix-free Taylor action above.
class FockUnitary {
 public:
  FockUnitary() = default;
  FockUnitary(SpMat generator, Eigen::Index physical) : g_(std::move(generator)), n_(physical) {
    if (static_cast<std::size_t>(g_.rows()) <= kDenseExpLimit) {
      padded_ = Mat(g_).exp();
      dense_ = padded_->topLeftCorner(n_, n_);
    }
  }

  bool is_dense() const { return dense_.has_value(); }
  const Mat& matrix() const {
    if (!dense_) throw ConfigError("fock unitary: dense matrix not available above the dense limit");
    return *dense_;
  }
  /// exp(G) on the enlarged cutoff, before restriction.
  const Mat& padded_matrix() const {
    if (!padded_) throw ConfigError("fock unitary: dense matrix not available above the dense limit");
    return *padded_;
  }
  const SpMat& generator() const { return g_; }
  Eigen::Index padded_size() const { return g_.rows(); }

  Vec apply(const Vec& v) const { return dense_ ? Vec(*dense_ * v) : act(v, 1.0); }
  Vec apply_adjoint(const Vec& v) const {
    return dense_ ? Vec(dense_->adjoint() * v) : act(v, -1.0);
  }

 private:
  Vec act(const Vec& v, double t) const {
    Vec big = Vec::Zero(g_.rows());
    big.head(n_) = v;
    return expmv(g_, big, t).head(n_);
  }

  SpMat g_;
  Eigen::Index n_ = 0;
  std::optional<Mat> dense_;
  std::optional<Mat> padded_;
};

/// P(Poisson(mean) > n).
inline double poisson_tail_above(double mean, int n) {
  if (mean == 0.0) return 0.0;
  double term = std::exp(-mean), cdf = 0.0;
  for (int j = 0; j <= n; ++j) {
    cdf += term;
    term *= mean / (j + 1);
  }
  // Sum the tail directly to avoid cancellation in 1 - cdf.
  double tail = 0.0;
  for (int j = n + 1; j < n + 2000; ++j) {
    tail += term;
    if (term < 1e-300 || (j > mean && term < 1e-18 * tail)) break;
    term *= mean / (j + 1);
  }
  return tail;
}

inline constexpr double kLeakageTolerance = 1e-6;

struct WeylOperator {
  FockUnitary unitary;
  Vec f;
  double poisson_tail = 0.0;  ///< mass a coherent state would put above n_max
};

/// W(f) = exp(a^*(f) - a(f)).
inline WeylOperator weyl(const FockBasis& b, const Vec& f, double leak_tol = kLeakageTolerance) {
  if (f.size() != b.modes()) throw ConfigError("weyl: f must have d entries");
  const double mean = f.squaredNorm();
  if (mean > b.n_max() / 4.0)
    throw NumericalBudgetError("weyl: |f|^2 = " + std::to_string(mean) + " exceeds n_max/4 = " +
                               std::to_string(b.n_max() / 4.0));
  const double tail = poisson_tail_above(mean, b.n_max());
  if (tail > leak_tol)
    throw NumericalBudgetError("weyl: Poisson tail " + std::to_string(tail) + " above " +
                               std::to_string(leak_tol));
  const FockBasis big(b.modes(), b.n_max() + padding_for(b), kMaxPaddedDimension);
  SpMat gen = create(big, f) - annihilate(big, f);
  return {FockUnitary(gen, static_cast<Eigen::Index>(b.size())), f, tail};
}

/// d x d blocks ch(K) = Σ (K K̄)ⁿ/(2n)!, sh(K) = Σ (K K̄)ⁿ K/(2n+1)!.
struct BogoliubovBlocks {
  Mat ch;
  Mat sh;
  double symplectic_defect() const {
    const auto d = ch.rows();
    return (ch * ch.adjoint() - sh * sh.adjoint() - Mat::Identity(d, d)).cwiseAbs().maxCoeff();
  }
};

inline BogoliubovBlocks bogoliubov_blocks(const Mat& k) {
  const auto d = k.rows();
  const Mat a = k * k.conjugate();
  Mat power = Mat::Identity(d, d);
  BogoliubovBlocks out{Mat::Identity(d, d), k};
  double fact = 1.0;
  for (int n = 1; n < 200; ++n) {
    power = power * a;
    fact *= (2.0 * n - 1.0) * (2.0 * n);
    const Mat ch_term = power / fact;
    const Mat sh_term = power * k / (fact * (2.0 * n + 1.0));
    out.ch += ch_term;
    out.sh += sh_term;
    if (ch_term.norm() + sh_term.norm() < 1e-18 * (out.ch.norm() + out.sh.norm())) break;
  }
  return out;
}

struct BogoliubovOperator {
  FockUnitary unitary;
  Mat K;
  BogoliubovBlocks blocks;
  double vacuum_occupation = 0.0;  ///< ‖sh(K)‖²_HS = ⟨Ω, T* N T Ω⟩
};

inline constexpr double kMaxKernelNorm = 1.5;

/// T(K) = exp(½ Σ (K_ij a_i^* a_j^* - conj(K_ij) a_i a_j)).
inline BogoliubovOperator bogoliubov(const FockBasis& b, const Mat& k) {
  const int d = b.modes();
  if (k.rows() != d || k.cols() != d) throw ConfigError("bogoliubov: K must be d x d");
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("bogoliubov: K is not symmetric");
  if (k.norm() > kMaxKernelNorm)
    throw NumericalBudgetError("bogoliubov: |K|_HS = " + std::to_string(k.norm()) + " exceeds " +
                               std::to_string(kMaxKernelNorm));
  auto blocks = bogoliubov_blocks(k);
  const double occupation = blocks.sh.squaredNorm();
  if (occupation > b.n_max() / 4.0)
    throw NumericalBudgetError("bogoliubov: squeezed occupation " + std::to_string(occupation) +
                               " exceeds n_max/4");
  std::vector<std::pair<cplx, std::vector<LadderLetter>>> terms;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      terms.push_back({0.5 * k(i, j), {{i, true}, {j, true}}});
      terms.push_back({-0.5 * std::conj(k(i, j)), {{i, false}, {j, false}}});
    }
  const FockBasis big(d, b.n_max() + padding_for(b), kMaxPaddedDimension);
  return {FockUnitary(assemble(big, terms), static_cast<Eigen::Index>(b.size())), k, blocks, occupation};
}

struct FockVector {
  std::shared_ptr<const FockBasis> basis;
  Vec coefficients;

  static FockVector vacuum(std::shared_ptr<const FockBasis> b) {
    Vec c = Vec::Zero(static_cast<Eigen::Index>(b->size()));
    c[0] = 1.0;
    return {std::move(b), c};
  }

  double shell_mass(int n) const {
    const auto lo = static_cast<Eigen::Index>(basis->shell_begin(n));
    const auto hi = static_cast<Eigen::Index>(basis->shell_end(n));
    return coefficients.segment(lo, hi - lo).squaredNorm();
  }
  /// Mass on the outermost shell, the proxy for truncation leakage.
  double leakage() const { return shell_mass(basis->n_max()); }
  double number_expectation() const {
    double s = 0.0;
    for (int n = 1; n <= basis->n_max(); ++n) s += n * shell_mass(n);
    return s;
  }
};

/// (P_n ψ, ‖P_n ψ‖).
inline std::pair<FockVector, double> project_N(const FockVector& psi, int n) {
  if (n < 0 || n > psi.basis->n_max()) throw ConfigError("project_N: shell outside the basis");
  FockVector out{psi.basis, Vec::Zero(psi.coefficients.size())};
  const auto lo = static_cast<Eigen::Index>(psi.basis->shell_begin(n));
  const auto hi = static_cast<Eigen::Index>(psi.basis->shell_end(n));
  out.coefficients.segment(lo, hi - lo) = psi.coefficients.segment(lo, hi - lo);
  return {out, out.coefficients.norm()};
}

struct ReducedDensity {
  Mat gamma;
  double trace() const { return gamma.trace().real(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(gamma);
    return es.eigenvalues().minCoeff();
  }
};

/// Γ_ij = ⟨ψ, a_j^* a_i ψ⟩ / ⟨ψ, N ψ⟩.
inline ReducedDensity reduced_density(const FockVector& psi) {
  const FockBasis& b = *psi.basis;
  const double n = psi.number_expectation();
  if (!(n > 1e-300)) throw DomainError("reduced_density: zero expected particle number");
  std::vector<Vec> ai;
  for (int i = 0; i < b.modes(); ++i) ai.push_back(ladder(b, i).first.matrix * psi.coefficients);
  Mat g(b.modes(), b.modes());
  for (int i = 0; i < b.modes(); ++i)
    for (int j = 0; j < b.modes(); ++j) g(i, j) = ai[static_cast<std::size_t>(j)].dot(ai[static_cast<std::size_t>(i)]) / n;
  // Remove rounding asymmetry.
  g = 0.5 * (g + g.adjoint()).eval();
  return {g};
}

struct TraceDistanceReport {
  double trace_norm = 0.0;
  double hs_norm = 0.0;
  int negative_eigenvalues = 0;
  double most_negative = 0.0;
  /// For unit-trace PSD Γ, Γ - |φ⟩⟨φ| has trace zero and at most one negative
  /// eigenvalue λ, so the trace norm equals 2|λ|.
  bool single_negative_structure = true;
};

inline TraceDistanceReport trace_distance_to_rank_one(const ReducedDensity& gamma, const Vec& phi) {
  if (phi.size() != gamma.gamma.rows()) throw ConfigError("trace distance: dimension mismatch");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw DomainError("trace distance: phi is not normalised");
  const Mat diff = gamma.gamma - phi * phi.adjoint();
  Eigen::SelfAdjointEigenSolver<Mat> es(diff);
  TraceDistanceReport rep;
  const double scale = 1e-12;
  for (double l : es.eigenvalues()) {
    rep.trace_norm += std::abs(l);
    if (l < -scale) {
      ++rep.negative_eigenvalues;
      rep.most_negative = std::min(rep.most_negative, l);
    }
  }
  rep.hs_norm = diff.norm();
  rep.single_negative_structure =
      rep.negative_eigenvalues <= 1 &&
      std::abs(rep.trace_norm - 2.0 * std::abs(rep.most_negative)) <= 1e-9 + 1e-9 * rep.trace_norm;
  return rep;
}

/// exp(-i H t) for a particle-conserving H, by dense diagonalisation of each shell.
class ShellPropagator {
 public:
  ShellPropagator(std::shared_ptr<const FockBasis> b, const FockOperator& h) : basis_(std::move(b)) {
    if (!h.hermitian) throw DomainError("shell propagator: H is not hermitian");
    const Mat dummy;
    for (int c = 0; c < h.matrix.outerSize(); ++c)
      for (SpMat::InnerIterator it(h.matrix, c); it; ++it)
        if (basis_->total(static_cast<std::size_t>(it.row())) != basis_->total(static_cast<std::size_t>(it.col())))
          throw DomainError("shell propagator: H does not conserve the particle number");
    for (int n = 0; n <= basis_->n_max(); ++n) {
      const auto lo = static_cast<Eigen::Index>(basis_->shell_begin(n));
      const auto len = static_cast<Eigen::Index>(basis_->shell_end(n)) - lo;
      Mat block = Mat(h.matrix.block(lo, lo, len, len));
      Eigen::SelfAdjointEigenSolver<Mat> es(block);
      vectors_.push_back(es.eigenvectors());
      values_.push_back(es.eigenvalues());
    }
  }

  Vec apply(const Vec& psi, double t) const {
    Vec out(psi.size());
    for (int n = 0; n <= basis_->n_max(); ++n) {
      const auto lo = static_cast<Eigen::Index>(basis_->shell_begin(n));
      const auto len = static_cast<Eigen::Index>(basis_->shell_end(n)) - lo;
      const Mat& v = vectors_[static_cast<std::size_t>(n)];
      Vec c = v.adjoint() * psi.segment(lo, len);
      for (Eigen::Index i = 0; i < len; ++i)
        c[i] *= std::polar(1.0, -values_[static_cast<std::size_t>(n)][i] * t);
      out.segment(lo, len) = v * c;
    }
    return out;
  }

  /// Lowest eigenvalue over all shells.
  double ground_energy() const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& v : values_) e = std::min(e, v.minCoeff());
    return e;
  }

 private:
  std::shared_ptr<const FockBasis> basis_;
  std::vector<Mat> vectors_;
  std::vector<Eigen::VectorXd> values_;
};

/// Indices of basis states with total number ≤ cut.
inline Eigen::Index sub_cutoff_size(const FockBasis& b, int cut) {
  return static_cast<Eigen::Index>(b.shell_end(std::clamp(cut, 0, b.n_max())));
}

struct WeylResiduals {
  double product = 0.0;  ///< W(f)W(g) - W(f+g) e^{-i Im⟨f,g⟩}
  double shift = 0.0;    ///< W(f)^* a(g) W(f) - a(g) - ⟨g,f⟩
  double poisson_tail = 0.0;
  int sub_cutoff = 0;
};

/// Residuals on matrix elements between states with n ≤ n_max - margin.  Products
/// are formed on the enlarged cutoff so that intermediate states are not truncated.
inline WeylResiduals check_weyl_relations(const FockBasis& b, const Vec& f, const Vec& g,
                                          int margin = 4) {
  auto wf = weyl(b, f), wg = weyl(b, g), wfg = weyl(b, f + g);
  if (!wf.unitary.is_dense()) throw ConfigError("check_weyl_relations: basis too large for dense checks");
  const FockBasis big(b.modes(), b.n_max() + padding_for(b), kMaxPaddedDimension);
  const Eigen::Index m = sub_cutoff_size(b, b.n_max() - margin);
  const Mat& uf = wf.unitary.padded_matrix();
  const cplx fg = f.dot(g);  // ⟨f, g⟩, antilinear in f
  const Mat prod = uf * wg.unitary.padded_matrix();
  const Mat rhs = wfg.unitary.padded_matrix() * std::polar(1.0, -fg.imag());
  WeylResiduals rep;
  rep.product = (prod - rhs).topLeftCorner(m, m).cwiseAbs().maxCoeff();
  const Mat ag = Mat(annihilate(big, g));
  const Mat shifted = uf.adjoint() * ag * uf;
  const Mat expect = ag + g.dot(f) * Mat::Identity(ag.rows(), ag.cols());
  rep.shift = (shifted - expect).topLeftCorner(m, m).cwiseAbs().maxCoeff();
  rep.poisson_tail = std::max({wf.poisson_tail, wg.poisson_tail, wfg.poisson_tail});
  rep.sub_cutoff = b.n_max() - margin;
  return rep;
}

/// max |T^* a(f) T - a(ch f) - a^*(sh f̄)| on states with n ≤ n_max - margin,
/// formed on the enlarged cutoff.
inline double bogoliubov_conjugation_residual(const FockBasis& b, const BogoliubovOperator& t,
                                              const Vec& f, int margin = 4) {
  const FockBasis big(b.modes(), b.n_max() + padding_for(b), kMaxPaddedDimension);
  const Mat& u = t.unitary.padded_matrix();
  const Mat lhs = u.adjoint() * Mat(annihilate(big, f)) * u;
  const Vec chf = t.blocks.ch * f;
  const Vec shf = t.blocks.sh * f.conjugate();
  const Mat rhs = Mat(annihilate(big, chf)) + Mat(create(big, shf));
  const Eigen::Index m = sub_cutoff_size(b, b.n_max() - margin);
  return (lhs - rhs).topLeftCorner(m, m).cwiseAbs().maxCoeff();
}

struct TntReport {
  double smallest_c = 0.0;         ///< max(λ_sub, 1)
  double subspace_c = 0.0;         ///< λ_max of (N+1)^{-1/2} T^*NT (N+1)^{-1/2} on n ≤ n_max-1
  double candidate_min_eigenvalue = 0.0;
  double heuristic = 0.0;          ///< e^{2‖K‖}
  double vacuum_expectation = 0.0; ///< ⟨Ω, T^* N T Ω⟩
  bool candidate_ok = false;
};

inline constexpr std::size_t kDenseSpectralLimit = 3000;

/// T^* N T = Σ_i b_i^* b_i with b_i = Σ_j conj(ch_ji) a_j + sh_ji a_j^*.  Restricted
/// to n ≤ n_max - 1 the truncated products are exact.
inline TntReport check_TNT_inequality(const FockBasis& b, const Mat& k, double c_candidate) {
  const int d = b.modes();
  if (k.rows() != d || k.cols() != d) throw ConfigError("TNT check: K must be d x d");
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("TNT check: K is not symmetric");
  const Eigen::Index m = sub_cutoff_size(b, b.n_max() - 1);
  if (static_cast<std::size_t>(m) > kDenseSpectralLimit)
    throw ConfigError("TNT check: sub-cutoff space too large for a dense eigensolve");
  const auto blocks = bogoliubov_blocks(k);
  SpMat tnt(static_cast<int>(b.size()), static_cast<int>(b.size()));
  for (int i = 0; i < d; ++i) {
    Vec c = blocks.ch.col(i);  // a(ch e_i) uses conj(ch_ji)
    Vec s = blocks.sh.col(i);
    SpMat bi = annihilate(b, c) + create(b, s);
    tnt += SpMat(bi.adjoint()) * bi;
  }
  const Mat block = Mat(tnt).topLeftCorner(m, m);
  Eigen::VectorXd inv_sqrt(m);
  for (Eigen::Index i = 0; i < m; ++i) inv_sqrt[i] = 1.0 / std::sqrt(b.total(static_cast<std::size_t>(i)) + 1.0);
  const Mat scaled = inv_sqrt.asDiagonal() * block * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (scaled + scaled.adjoint()));
  TntReport rep;
  rep.subspace_c = es.eigenvalues().maxCoeff();
  rep.smallest_c = std::max(rep.subspace_c, 1.0);
  Mat cand = -block;
  for (Eigen::Index i = 0; i < m; ++i) cand(i, i) += c_candidate * (b.total(static_cast<std::size_t>(i)) + 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> es2(0.5 * (cand + cand.adjoint()), Eigen::EigenvaluesOnly);
  rep.candidate_min_eigenvalue = es2.eigenvalues().minCoeff();
  rep.candidate_ok = rep.candidate_min_eigenvalue >= -1e-12;
  rep.heuristic = std::exp(2.0 * k.norm());
  rep.vacuum_expectation = block(0, 0).real();
  return rep;
}

/// Time-dependent inputs of the fluctuation dynamics.
struct FluctuationInputs {
  double N = 1.0;
  std::function<Vec(double)> phi;  ///< condensate φ_t (unit norm)
  std::function<Mat(double)> K;    ///< pair kernel K_t
};

struct FluctuationResult {
  FockVector state;
  double max_leakage = 0.0;
};

/// 𝒰(t;0)ψ = T^*(K_t) W^*(√N φ_t) e^{-iHt} W(√N φ_0) T(K_0) ψ.
inline FluctuationResult fluctuation_dynamics(const ShellPropagator& h, const FluctuationInputs& in,
                                              const FockVector& psi, double t,
                                              double leak_tol = kLeakageTolerance) {
  const FockBasis& b = *psi.basis;
  const double root = std::sqrt(in.N);
  const double mass = psi.coefficients.squaredNorm();
  FluctuationResult res{psi, 0.0};
  // Leakage is the outer-shell mass plus whatever the restriction to n ≤ n_max lost.
  auto stage = [&](const char* factor, auto&& apply) {
    try {
      res.state.coefficients = apply(res.state.coefficients);
    } catch (const NumericalBudgetError& e) {
      throw NumericalBudgetError(std::string("fluctuation dynamics: factor ") + factor + ": " + e.what());
    }
    const double leak = res.state.leakage() + std::abs(mass - res.state.coefficients.squaredNorm());
    res.max_leakage = std::max(res.max_leakage, leak);
    if (leak > leak_tol)
      throw NumericalBudgetError(std::string("fluctuation dynamics: leakage ") + std::to_string(leak) +
                                 " after factor " + factor);
  };
  if (t == 0.0) return res;
  stage("T(K_0)", [&](const Vec& v) { return bogoliubov(b, in.K(0.0)).unitary.apply(v); });
  stage("W(sqrt(N) phi_0)", [&](const Vec& v) { return weyl(b, root * in.phi(0.0), leak_tol).unitary.apply(v); });
  stage("exp(-iHt)", [&](const Vec& v) { return h.apply(v, t); });
  stage("W*(sqrt(N) phi_t)",
        [&](const Vec& v) { return weyl(b, root * in.phi(t), leak_tol).unitary.apply_adjoint(v); });
  stage("T*(K_t)", [&](const Vec& v) { return bogoliubov(b, in.K(t)).unitary.apply_adjoint(v); });
  return res;
}

}  // namespace gpk::fock
