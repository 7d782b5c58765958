#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gpk/error.hpp"

namespace gpk {

/// Least-squares fit of log y = intercept + slope * log x.
struct RateReport {
  std::vector<double> x;
  std::vector<double> y;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;   ///< false when the data cannot be fitted (e.g. all zeros)
  bool monotone = true;   ///< y strictly decreasing in x
  std::string note;
};

inline RateReport fit_rate(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("fit_rate: x and y differ in length");
  if (x.size() < 3) throw ConfigError("fit_rate: need at least 3 points");
  RateReport rep;
  rep.x = x;
  rep.y = y;
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("fit_rate: x values must be positive");
    if (!(y[i] > 0.0)) throw DomainError("fit_rate: y values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
    if (i > 0 && !(y[i] < y[i - 1])) rep.monotone = false;
  }
  const double vxx = sxx - sx * sx / n;
  const double vxy = sxy - sx * sy / n;
  const double vyy = syy - sy * sy / n;
  if (!(vxx > 0.0)) throw ConfigError("fit_rate: x values must not all coincide");
  rep.slope = vxy / vxx;
  rep.intercept = (sy - rep.slope * sx) / n;
  rep.r_squared = vyy > 0.0 ? std::clamp(vxy * vxy / (vxx * vyy), 0.0, 1.0) : 1.0;
  rep.defined = true;
  if (!rep.monotone) rep.note = "non-monotone in N";
  return rep;
}

/// As fit_rate, but an all-zero y (e.g. identical dynamics) yields an undefined
/// report instead of an error.
inline RateReport fit_rate_or_degenerate(const std::vector<double>& x, const std::vector<double>& y,
                                         double zero_level = 0.0) {
  bool all_small = true;
  for (double v : y) all_small = all_small && std::abs(v) <= zero_level;
  if (all_small) {
    RateReport rep;
    rep.x = x;
    rep.y = y;
    rep.monotone = false;
    rep.note = "degenerate: all differences vanish, slope undefined";
    return rep;
  }
  return fit_rate(x, y);
}

}  // namespace gpk
