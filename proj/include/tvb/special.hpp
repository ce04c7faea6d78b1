#pragma once

// Scalar special functions used by the test statistics: regularized incomplete
// gamma (chi-squared tail), normal tail, and the inverses needed for critical
// values. Double precision, no external dependencies.

#include <cmath>
#include <limits>
#include <string>

#include "tvb/error.hpp"

namespace tvb {

inline double log_gamma(double x) {
  if (!(x > 0.0)) throw ValidationError("log_gamma: argument must be positive");
  // Lanczos-type rational approximation, accurate to full double precision.
  static const double cof[14] = {
      57.1562356658629235,     -59.5979603554754912,    14.1360979747417471,
      -0.491913816097620199,   0.339946499848118887e-4, 0.465236289270485756e-4,
      -0.983744753048795646e-4, 0.158088703224912494e-3, -0.210264441724104883e-3,
      0.217439618115212643e-3, -0.164318106536763890e-3, 0.844182239838527433e-4,
      -0.261908384015814087e-4, 0.368991826595316234e-5};
  double y = x;
  double tmp = x + 5.24218750000000000;
  tmp = (x + 0.5) * std::log(tmp) - tmp;
  double ser = 0.999999999999997092;
  for (int j = 0; j < 14; ++j) ser += cof[j] / ++y;
  return tmp + std::log(2.5066282746310005 * ser / x);
}

namespace detail {

// Series expansion of P(a,x), valid for x < a+1.
inline double gamma_p_series(double a, double x) {
  const double gln = log_gamma(a);
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int i = 0; i < 10000; ++i) {
    ++ap;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * std::numeric_limits<double>::epsilon())
      return sum * std::exp(-x + a * std::log(x) - gln);
  }
  throw NumericalError("incomplete gamma series failed to converge");
}

// Continued fraction for Q(a,x) (modified Lentz), valid for x >= a+1.
inline double gamma_q_contfrac(double a, double x) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double fpmin = std::numeric_limits<double>::min() / eps;
  const double gln = log_gamma(a);
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= eps) return std::exp(-x + a * std::log(x) - gln) * h;
  }
  throw NumericalError("incomplete gamma continued fraction failed to converge");
}

}  // namespace detail

// Regularized lower incomplete gamma P(a,x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(a) || std::isnan(x))
    throw ValidationError("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_contfrac(a, x);
}

// Regularized upper incomplete gamma Q(a,x) = 1 - P(a,x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(a) || std::isnan(x))
    throw ValidationError("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_contfrac(a, x);
}

// Upper tail of the chi-squared distribution with df degrees of freedom.
inline double chisq_sf(double x, double df) {
  if (!(df > 0.0)) throw ValidationError("chisq_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

// Critical value: smallest x with chisq_sf(x, df) <= alpha.
inline double chisq_critical(double alpha, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("chisq_critical: level must be in (0,1)");
  double lo = 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 50.0;
  while (chisq_sf(hi, df) > alpha) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chisq_sf(mid, df) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Two-sided normal tail for a Wald statistic.
inline double wald_p_value(double z) { return 2.0 * normal_sf(std::fabs(z)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace tvb
