#pragma once

// Closed-form sensitivity machinery for one-sided, group-differential label
// noise. The free variable is the hidden-positive mass alpha = alpha0 + alpha1
// inside the noisy group, split by predicted class: alpha_j is the probability
// mass with (true positive, observed negative, predicted class j). Hidden
// positives can only come from observed negatives, so alpha0 <= p00 and
// alpha1 <= p01 cell by cell.
//
// Everything here is a pure function of observed confusion proportions and a
// hypothesized noise mass; the true-rate formulas are exact, the per-metric
// intervals are sharp (attained by the extreme allocations alpha1 = 0 or
// alpha1 = alpha).

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tvb/confusion.hpp"
#include "tvb/csv.hpp"
#include "tvb/error.hpp"

namespace tvb {

// Hypothesized hidden-positive mass. alpha0/alpha1 optional: interval results
// need only the total, exact results need the split.
struct NoiseSpec {
  double alpha = 0.0;
  std::optional<double> alpha0;
  std::optional<double> alpha1;

  static NoiseSpec total(double a) { return {a, std::nullopt, std::nullopt}; }
  static NoiseSpec split(double a0, double a1) { return {a0 + a1, a0, a1}; }
};

enum class MetricKind { Fpr, Fnr, Ppv };

inline const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::Fpr: return "fpr";
    case MetricKind::Fnr: return "fnr";
    default: return "ppv";
  }
}

struct MetricBound {
  MetricKind metric{};
  double lower = 0.0;
  double upper = 0.0;
  std::string attained_lower;  // extremal allocation achieving the endpoint
  std::string attained_upper;
};

struct RateBounds {
  MetricBound fpr, fnr, ppv;
  const MetricBound& by_kind(MetricKind m) const {
    switch (m) {
      case MetricKind::Fpr: return fpr;
      case MetricKind::Fnr: return fnr;
      default: return ppv;
    }
  }
};

// Which relation between observed and true error rates is ruled out by the
// observed rates alone.
enum class Trichotomy {
  kExcludesFnrUpFprDown,    // 1-FPR < FNR: not both {FNR <= FNR*} and {FPR >= FPR*}
  kExcludesFnrDownFprUp,    // 1-FPR > FNR: not both {FNR >= FNR*} and {FPR <= FPR*}
  kBoundary,                // 1-FPR == FNR
};

inline Trichotomy trichotomy(const GroupConfusion& cm) {
  const Metrics m = metrics(cm);
  if (!m.fpr || !m.fnr)
    throw ValidationError("trichotomy: FPR and FNR must both be defined");
  const double lhs = 1.0 - *m.fpr;
  if (lhs < *m.fnr) return Trichotomy::kExcludesFnrUpFprDown;
  if (lhs > *m.fnr) return Trichotomy::kExcludesFnrDownFprUp;
  return Trichotomy::kBoundary;
}

namespace detail {

inline void check_alpha_cells(const GroupConfusion& cm, double a0, double a1) {
  const double tol = 1e-12;
  if (a0 < -tol || a1 < -tol) throw ValidationError("noise masses must be nonnegative");
  if (a0 > cm.p00() + tol)
    throw ValidationError("infeasible alpha0 = " + std::to_string(a0) +
                          ": exceeds observed-negative cell p00 = " + std::to_string(cm.p00()));
  if (a1 > cm.p01() + tol)
    throw ValidationError("infeasible alpha1 = " + std::to_string(a1) +
                          ": exceeds observed-negative cell p01 = " + std::to_string(cm.p01()));
}

}  // namespace detail

// Exact true metrics under a fully specified allocation:
//   FPR* = (p01 - a1) / (p00 + p01 - a),   FNR* = (p10 + a0) / (p10 + p11 + a),
//   PPV* = (p11 + a1) / (p01 + p11),       NPV* = (p00 - a0) / (p00 + p10).
inline Metrics metric_at(const GroupConfusion& cm, const NoiseSpec& spec) {
  if (!spec.alpha0 || !spec.alpha1)
    throw ValidationError("metric_at: spec must carry both alpha0 and alpha1");
  const double a0 = *spec.alpha0, a1 = *spec.alpha1;
  if (std::fabs(a0 + a1 - spec.alpha) > 1e-9)
    throw ValidationError("metric_at: alpha0 + alpha1 != alpha");
  detail::check_alpha_cells(cm, a0, a1);

  const double p00 = cm.p00(), p01 = cm.p01(), p10 = cm.p10(), p11 = cm.p11();
  const double a = a0 + a1;
  Metrics m;
  const auto rate = [](double num, double den) -> std::optional<double> {
    if (den <= 1e-15) return std::nullopt;
    return num / den;
  };
  m.fpr = rate(p01 - a1, p00 + p01 - a);
  m.fnr = rate(p10 + a0, p10 + p11 + a);
  m.ppv = rate(p11 + a1, p01 + p11);
  m.npv = rate(p00 - a0, p00 + p10);
  m.prevalence = p10 + p11 + a;
  return m;
}

// Sharp per-metric intervals at total mass alpha. Valid for
// alpha <= min(p00, p01); beyond that the extreme allocations no longer fit in
// a single observed-negative cell and the call reports the binding cell.
inline RateBounds metric_bounds(const GroupConfusion& cm, double alpha) {
  const double tol = 1e-12;
  if (alpha < -tol) throw ValidationError("alpha must be nonnegative");
  const double p00 = cm.p00(), p01 = cm.p01(), p10 = cm.p10(), p11 = cm.p11();
  if (alpha > p00 + tol)
    throw ValidationError("infeasible alpha = " + std::to_string(alpha) +
                          ": exceeds observed-negative cell p00 = " + std::to_string(p00));
  if (alpha > p01 + tol)
    throw ValidationError("infeasible alpha = " + std::to_string(alpha) +
                          ": exceeds observed-negative cell p01 = " + std::to_string(p01));
  if (p00 + p01 <= tol || p10 + p11 <= tol || p01 + p11 <= tol)
    throw ValidationError("metric_bounds: observed FPR, FNR and PPV must be defined");

  const auto clamp01 = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  RateBounds b;
  b.fpr = {MetricKind::Fpr, clamp01((p01 - alpha) / (p00 + p01 - alpha)),
           clamp01(p01 / (p00 + p01 - alpha)), "alpha1 = alpha", "alpha1 = 0"};
  b.fnr = {MetricKind::Fnr, clamp01(p10 / (p10 + p11 + alpha)),
           clamp01((p10 + alpha) / (p10 + p11 + alpha)), "alpha0 = 0", "alpha0 = alpha"};
  b.ppv = {MetricKind::Ppv, clamp01(p11 / (p01 + p11)),
           clamp01((p11 + alpha) / (p01 + p11)), "alpha1 = 0", "alpha1 = alpha"};
  return b;
}

// Sharp intervals with the extreme allocations clamped to the per-cell caps,
// defined for any alpha < p00 + p01. Coincides with metric_bounds on
// alpha <= min(p00, p01); used for sweeps that extend past a single cell.
inline RateBounds metric_bounds_capped(const GroupConfusion& cm, double alpha) {
  const double tol = 1e-12;
  if (alpha < -tol) throw ValidationError("alpha must be nonnegative");
  const double p00 = cm.p00(), p01 = cm.p01();
  if (alpha >= p00 + p01 - tol)
    throw ValidationError("infeasible alpha = " + std::to_string(alpha) +
                          ": exceeds total observed-negative mass " + std::to_string(p00 + p01));
  const double a1_min = std::max(0.0, alpha - p00);
  const double a1_max = std::min(alpha, p01);
  const auto at = [&](double a1) {
    return metric_at(cm, NoiseSpec::split(alpha - a1, a1));
  };
  const Metrics lo = at(a1_max);  // max alpha1: lowest FPR*, lowest FNR*, highest PPV*
  const Metrics hi = at(a1_min);
  const auto tag = [](double a1) { return "alpha1 = " + double_to_string(a1); };
  RateBounds b;
  b.fpr = {MetricKind::Fpr, lo.fpr.value_or(0.0), hi.fpr.value_or(0.0), tag(a1_max), tag(a1_min)};
  b.fnr = {MetricKind::Fnr, lo.fnr.value_or(0.0), hi.fnr.value_or(0.0), tag(a1_max), tag(a1_min)};
  b.ppv = {MetricKind::Ppv, hi.ppv.value_or(0.0), lo.ppv.value_or(0.0), tag(a1_min), tag(a1_max)};
  return b;
}

// The two direction-of-disparity conditions and their odds-ratio forms:
//   FPR >= alpha1/alpha  <=>  FPR <= FPR*(alpha0, alpha1)
//   FNR >= alpha0/alpha  <=>  FNR >= FNR*(alpha0, alpha1)
// odds_ratio_fnr = (alpha1/alpha0) / (p11/p10) >= 1 is equivalent to the FNR
// condition; odds_ratio_fpr = (alpha0/alpha1) / (p00/p01) to the FPR one.
struct DirectionConditions {
  bool fpr_cond = false;
  bool fnr_cond = false;
  double odds_ratio_fpr = 0.0;
  double odds_ratio_fnr = 0.0;
};

inline DirectionConditions direction_conditions(const GroupConfusion& cm, const NoiseSpec& spec) {
  if (!spec.alpha0 || !spec.alpha1)
    throw ValidationError("direction_conditions: spec must carry both alpha0 and alpha1");
  const double a0 = *spec.alpha0, a1 = *spec.alpha1;
  const double a = a0 + a1;
  if (a <= 0.0) throw ValidationError("direction_conditions: alpha must be positive");
  detail::check_alpha_cells(cm, a0, a1);
  const Metrics m = metrics(cm);
  if (!m.fpr || !m.fnr)
    throw ValidationError("direction_conditions: FPR and FNR must be defined");

  DirectionConditions out;
  // Exact ties must land on the equality branch of the iff; two-step division
  // can stray a final ulp, so compare with a hair of slack.
  out.fpr_cond = *m.fpr >= a1 / a - 1e-12;
  out.fnr_cond = *m.fnr >= a0 / a - 1e-12;
  const auto odds_ratio = [](double num, double den) {
    if (den == 0.0) return num == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                      : std::numeric_limits<double>::infinity();
    return num / den;
  };
  out.odds_ratio_fnr = odds_ratio(a1 * cm.p10(), a0 * cm.p11());
  out.odds_ratio_fpr = odds_ratio(a0 * cm.p01(), a1 * cm.p00());
  return out;
}

// Label-dependent (constant-within-group) noise identities. rho is the
// inverse noise rate P(Y*=1 | Y=0), gamma the noise rate P(Y=0 | Y*=1).
//   FNR* = FNR,  FPR* = (FPR - rho (1 - FNR)) / (1 - rho),  PPV* = PPV / (1 - gamma).
// A raw PPV* above 1 (or FPR* outside [0,1]) flags an inconsistent (gamma, cm)
// pair; the reported metric is clipped and the flag cleared.
struct LabelDependentMetrics {
  Metrics metrics;
  double ppv_raw = 0.0;
  double fpr_raw = 0.0;
  bool ppv_consistent = true;
  bool fpr_consistent = true;
};

inline LabelDependentMetrics label_dependent_identities(const GroupConfusion& cm, double rho,
                                                        double gamma) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must be in [0,1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must be in [0,1)");
  const Metrics obs = metrics(cm);
  LabelDependentMetrics out;
  out.metrics.fnr = obs.fnr;
  if (obs.fpr && obs.fnr) {
    out.fpr_raw = (*obs.fpr - rho * (1.0 - *obs.fnr)) / (1.0 - rho);
    out.fpr_consistent = out.fpr_raw >= -1e-12 && out.fpr_raw <= 1.0 + 1e-12;
    out.metrics.fpr = std::min(1.0, std::max(0.0, out.fpr_raw));
  }
  if (obs.ppv) {
    out.ppv_raw = *obs.ppv / (1.0 - gamma);
    out.ppv_consistent = out.ppv_raw <= 1.0 + 1e-12;
    out.metrics.ppv = std::min(1.0, out.ppv_raw);
  }
  out.metrics.prevalence = obs.prevalence / (1.0 - gamma);
  return out;
}

// Bounds swept over an alpha grid against a baseline group. flip[m] marks grid
// points where the sign of the true disparity could differ from the observed
// one: some achievable true value sits strictly on the other side of the
// baseline metric.
struct BoundCurve {
  std::vector<double> alphas;
  std::vector<RateBounds> bounds;             // per alpha
  double reference[3] = {0, 0, 0};            // baseline observed metric, by MetricKind order
  double observed[3] = {0, 0, 0};             // noisy-group observed metric
  std::vector<std::array<bool, 3>> flip;      // per alpha, by MetricKind order
  std::vector<std::pair<double, double>> flip_region[3];  // merged alpha intervals
};

inline BoundCurve bound_curve(const GroupConfusion& cm_noisy, const GroupConfusion& cm_base,
                              const std::vector<double>& alpha_grid) {
  const Metrics mw = metrics(cm_noisy);
  const Metrics mb = metrics(cm_base);
  if (!mw.fpr || !mw.fnr || !mw.ppv || !mb.fpr || !mb.fnr || !mb.ppv)
    throw ValidationError("bound_curve: FPR, FNR and PPV must be defined in both groups");

  BoundCurve c;
  c.reference[0] = *mb.fpr;
  c.reference[1] = *mb.fnr;
  c.reference[2] = *mb.ppv;
  c.observed[0] = *mw.fpr;
  c.observed[1] = *mw.fnr;
  c.observed[2] = *mw.ppv;

  for (double a : alpha_grid) {
    const RateBounds b = metric_bounds_capped(cm_noisy, a);
    std::array<bool, 3> f{};
    for (int m = 0; m < 3; ++m) {
      const MetricBound& mb_ = b.by_kind(static_cast<MetricKind>(m));
      const double ref = c.reference[m];
      const double obs = c.observed[m];
      if (obs > ref) f[m] = mb_.lower < ref;
      else if (obs < ref) f[m] = mb_.upper > ref;
      else f[m] = mb_.lower < ref || mb_.upper > ref;
    }
    c.alphas.push_back(a);
    c.bounds.push_back(b);
    c.flip.push_back(f);
  }

  // Merge consecutive flip grid points into intervals.
  for (int m = 0; m < 3; ++m) {
    for (std::size_t i = 0; i < c.alphas.size(); ++i) {
      if (!c.flip[i][m]) continue;
      if (!c.flip_region[m].empty() && i > 0 && c.flip[i - 1][m])
        c.flip_region[m].back().second = c.alphas[i];
      else
        c.flip_region[m].push_back({c.alphas[i], c.alphas[i]});
    }
  }
  return c;
}

}  // namespace tvb
