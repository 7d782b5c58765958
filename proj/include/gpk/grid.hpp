#pragma once

// Periodic grids centred on the origin and a thin FFTW wrapper.

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "gpk/error.hpp"

namespace gpk {

using cplx = std::complex<double>;
using Field = std::vector<cplx>;

struct GridSpec {
  int dim = 1;
  double box_length = 16.0;
  int points = 64;  ///< per axis, power of two
  double dt = 1e-3;
  double t_final = 1.0;
  double stability_budget = std::numbers::pi;  ///< bound on dt * max|k|^2

  std::size_t size() const {
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= static_cast<std::size_t>(points);
    return total;
  }
  double dx() const { return box_length / points; }
  double cell_volume() const { return std::pow(dx(), dim); }
  double k_step() const { return 2.0 * std::numbers::pi / box_length; }
  /// Largest |k|^2 on the grid (all axes at the Nyquist frequency).
  double k2_max() const {
    const double k = std::numbers::pi * points / box_length;
    return dim * k * k;
  }

  /// Shape checks; the time-step budget is checked separately by the evolvers.
  void validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("grid: dim must be 1, 2 or 3");
    if (points < 16 || (points & (points - 1)) != 0)
      throw ConfigError("grid: points per axis must be a power of two >= 16, got " +
                        std::to_string(points));
    if (!(box_length > 0.0)) throw ConfigError("grid: box length must be positive");
  }

  void validate_time_step(double step) const {
    if (!(std::abs(step) > 0.0)) throw ConfigError("grid: dt must be non-zero");
    if (std::abs(step) * k2_max() > stability_budget)
      throw ConfigError("grid: dt * max|k|^2 = " + std::to_string(std::abs(step) * k2_max()) +
                        " exceeds the stability budget " + std::to_string(stability_budget));
  }

  bool same_mesh(const GridSpec& o) const {
    return dim == o.dim && points == o.points && box_length == o.box_length;
  }

  /// Signed integer frequency index of position j on one axis.
  int mode_index(int j) const { return j < points / 2 ? j : j - points; }
  double coordinate(int j) const { return -0.5 * box_length + j * dx(); }

  /// Multi-index of flat position `idx` (row-major, last axis fastest).
  std::array<int, 3> unflatten(std::size_t idx) const {
    std::array<int, 3> c{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      c[a] = static_cast<int>(idx % points);
      idx /= points;
    }
    return c;
  }
};

/// In-place forward/backward complex FFTs over a GridSpec.  The backward
/// transform is unnormalised, as in FFTW.
class FftPlan {
 public:
  explicit FftPlan(const GridSpec& g) : size_(g.size()) {
    std::array<int, 3> n{g.points, g.points, g.points};
    std::vector<cplx> scratch(size_);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_.reset(fftw_plan_dft(g.dim, n.data(), p, p, FFTW_FORWARD, flags));
    backward_.reset(fftw_plan_dft(g.dim, n.data(), p, p, FFTW_BACKWARD, flags));
    if (!forward_ || !backward_) throw ConfigError("fftw: could not create plan");
  }

  void forward(Field& data) const { run(forward_.get(), data); }
  /// Inverse transform including the 1/size normalisation.
  void inverse(Field& data) const {
    run(backward_.get(), data);
    const double s = 1.0 / static_cast<double>(size_);
    for (auto& v : data) v *= s;
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
  };

  void run(fftw_plan_s* plan, Field& data) const {
    if (data.size() != size_) throw InvariantViolation("fft: buffer size does not match plan");
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
  }

  std::size_t size_;
  std::unique_ptr<fftw_plan_s, PlanDeleter> forward_, backward_;
};

/// Per-point wave vectors of a grid, precomputed once.
struct WaveVectors {
  explicit WaveVectors(const GridSpec& g) : k(g.size()), k2(g.size()), keep(g.size()) {
    const double dk = g.k_step();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto c = g.unflatten(i);
      double s = 0.0;
      bool inside = true;
      for (int a = 0; a < g.dim; ++a) {
        const int m = g.mode_index(c[a]);
        k[i][a] = dk * m;
        s += k[i][a] * k[i][a];
        // 2/3 rule: keep |m| < n/3 on every axis.
        if (3 * std::abs(m) >= g.points) inside = false;
      }
      k2[i] = s;
      keep[i] = inside;
    }
  }
  std::vector<std::array<double, 3>> k;
  std::vector<double> k2;
  std::vector<bool> keep;
};

}  // namespace gpk
