#pragma once

// Plug-in estimators of the one-sided label-dependent noise rate gamma
// (P(Y=0 | Y*=1)) and the inverse noise rate rho (P(Y*=1 | Y=0)) from
// externally supplied predicted probabilities m(x). Which estimator applies
// depends on the separability assumption the user is willing to make:
//
//   strong_sep:  m*(x) in {0,1}  =>  gamma = 1 - m(x) for every observed
//                positive; aggregated here by the mean over observed positives.
//   weak_sep:    sup_x m*(x) = 1 =>  gamma = 1 - sup_x m(x); the sup is
//                robustified to a q-quantile (q = 1 recovers the sup).
//
// Probabilities are consumed, not produced: any scorer's output column works.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tvb/dataset.hpp"
#include "tvb/error.hpp"

namespace tvb {

enum class NoiseEstimator { kStrongSep, kWeakSepSup };

struct NoiseEstimate {
  double gamma = 0.0;
  double rho = 0.0;
  NoiseEstimator estimator = NoiseEstimator::kStrongSep;
  std::string group;
  double quantile_used = 1.0;
};

// rho = (gamma/(1-gamma)) * (E[Y]/(1-E[Y])) and its inverse.
inline double gamma_to_rho(double gamma, double e_y) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must be in [0,1)");
  if (!(e_y > 0.0 && e_y < 1.0)) throw ValidationError("E[Y] must be in (0,1)");
  return (gamma / (1.0 - gamma)) * (e_y / (1.0 - e_y));
}

inline double rho_to_gamma(double rho, double e_y) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must be in [0,1)");
  if (!(e_y > 0.0 && e_y < 1.0)) throw ValidationError("E[Y] must be in (0,1)");
  const double t = rho * (1.0 - e_y);
  return t / (e_y + t);
}

namespace detail {

inline void check_probs(const std::vector<double>& probs) {
  if (probs.empty()) throw ValidationError("noise estimator: empty probability vector");
  for (double p : probs)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probabilities must lie in [0,1]");
}

inline NoiseEstimate finish(double gamma, double e_y, NoiseEstimator est, double q) {
  if (gamma >= 1.0)
    throw ValidationError("degenerate noise estimate: gamma = 1 (all probabilities zero)");
  NoiseEstimate out;
  out.gamma = std::max(0.0, gamma);
  out.rho = gamma_to_rho(out.gamma, e_y);
  out.estimator = est;
  out.quantile_used = q;
  return out;
}

}  // namespace detail

// probs restricted to observed positives; e_y is the observed positive rate of
// the population the estimate describes (needed to report rho).
inline NoiseEstimate estimate_strong_sep(const std::vector<double>& probs_on_positives,
                                         double e_y) {
  detail::check_probs(probs_on_positives);
  double mean = 0.0;
  for (double p : probs_on_positives) mean += p;
  mean /= static_cast<double>(probs_on_positives.size());
  return detail::finish(1.0 - mean, e_y, NoiseEstimator::kStrongSep, 1.0);
}

// probs over the whole population; q in (0,1], q = 1 uses the maximum.
inline NoiseEstimate estimate_weak_sep(const std::vector<double>& probs, double e_y,
                                       double q = 0.99) {
  detail::check_probs(probs);
  if (!(q > 0.0 && q <= 1.0)) throw ValidationError("quantile q must be in (0,1]");
  std::vector<double> sorted = probs;
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::ceil(q * static_cast<double>(sorted.size())) - 1.0;
  const std::size_t idx =
      static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(sorted.size() - 1)));
  return detail::finish(1.0 - sorted[idx], e_y, NoiseEstimator::kWeakSepSup, q);
}

// Apply the chosen estimator within each group separately. probs must align
// with d.records; records without a value fall back to the prob column.
inline std::map<std::string, NoiseEstimate> estimate_per_group(const Dataset& d,
                                                               const std::vector<double>& probs,
                                                               NoiseEstimator est,
                                                               double q = 0.99) {
  if (!probs.empty() && probs.size() != d.size())
    throw ValidationError("estimate_per_group: probabilities not aligned with records");
  std::map<std::string, NoiseEstimate> out;
  for (std::size_t g = 0; g < d.groups.size(); ++g) {
    std::vector<double> group_probs;
    std::vector<double> positive_probs;
    std::int64_t n = 0, pos = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& r = d.records[i];
      if (r.group != static_cast<int>(g)) continue;
      double p;
      if (!probs.empty()) p = probs[i];
      else if (r.has_prob()) p = r.prob;
      else throw ValidationError("estimate_per_group: record without probability");
      ++n;
      pos += r.y_obs;
      group_probs.push_back(p);
      if (r.y_obs == 1) positive_probs.push_back(p);
    }
    if (n == 0) continue;
    const double e_y = static_cast<double>(pos) / static_cast<double>(n);
    if (est == NoiseEstimator::kStrongSep && positive_probs.empty())
      throw ValidationError("group '" + d.groups[g] + "' has no observed positives");
    NoiseEstimate e = est == NoiseEstimator::kStrongSep
                          ? estimate_strong_sep(positive_probs, e_y)
                          : estimate_weak_sep(group_probs, e_y, q);
    e.group = d.groups[g];
    out[d.groups[g]] = e;
  }
  return out;
}

}  // namespace tvb
