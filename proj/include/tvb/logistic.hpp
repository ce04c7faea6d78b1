#pragma once

// Logistic regression calibration testing. The calibration model is
// Y ~ 1 + S + 1{A = noisy}; the Wald test on the group coefficient decides
// whether the score is treated as calibrated across groups. Sensitivity
// machinery: refits under extreme allocations (the ceil(n_w alpha) noisy-group
// observed negatives with the highest/lowest scores flipped), a random-flip
// baseline, and a label-dependent-cost corrected refit.
//
// The solver is a damped Newton iteration on the Bernoulli log-likelihood
// (step-halving on likelihood decrease, warm-startable), so the thousands of
// refits behind an envelope stay cheap.
//
// condition3 is the design-dependent check from the extreme-allocation
// argument: with s_i = sigma_i (1 - sigma_i) at the fitted optimum and W the
// noisy-group rows,
//
//   condition3 = (sum_W s_i)(sum_all s_i S_i) - (sum_W s_i S_i)(sum_all s_i).
//
// When it is nonnegative along the flip path, moving a hidden positive to a
// higher score cannot decrease the group coefficient, which is what makes the
// extreme allocations actual bounds. It must be checked per fit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tvb/dataset.hpp"
#include "tvb/error.hpp"
#include "tvb/parallel.hpp"
#include "tvb/rng.hpp"
#include "tvb/special.hpp"

namespace tvb {

struct LogisticFit {
  std::vector<double> beta;
  std::vector<double> se;
  double wald_z = 0.0;     // for the group coefficient (last column)
  double p_value = 1.0;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  double condition3 = std::numeric_limits<double>::quiet_NaN();  // calibration fits only
};

struct FitOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-10;       // sup-norm of the score vector
  // When the likelihood can no longer improve in double precision, the
  // gradient bottoms out at the accumulation noise floor rather than at
  // gradient_tol. A stalled step whose predicted Newton improvement
  // (g' H^-1 g / 2) is below this resolution limit is convergence; a stall
  // with real improvement still available is an error.
  double stall_improvement_floor = 1e-11;
  double separation_bound = 30.0;    // |beta_j| beyond this flags separation
  std::vector<double> warm_start;
};

namespace detail {

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double softplus(double eta) {  // log(1 + e^eta), overflow-safe
  if (eta > 35.0) return eta;
  if (eta < -35.0) return std::exp(eta);
  return std::log1p(std::exp(eta));
}

// In-place Cholesky of a small SPD matrix (row-major p x p). Returns false if
// a pivot collapses (collinear design).
inline bool cholesky(std::vector<double>& a, int p) {
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * p + j];
      for (int k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) return false;
        a[i * p + i] = std::sqrt(s);
      } else {
        a[i * p + j] = s / a[j * p + j];
      }
    }
  }
  return true;
}

inline void chol_solve(const std::vector<double>& l, int p, const std::vector<double>& b,
                       std::vector<double>& x) {
  x = b;
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < i; ++k) x[i] -= l[i * p + k] * x[k];
    x[i] /= l[i * p + i];
  }
  for (int i = p - 1; i >= 0; --i) {
    for (int k = i + 1; k < p; ++k) x[i] -= l[k * p + i] * x[k];
    x[i] /= l[i * p + i];
  }
}

}  // namespace detail

// Maximum-likelihood logistic fit on a row-major n x p design. Wald z and
// p-value reported for the last column.
inline LogisticFit fit_logistic(const std::vector<double>& X, std::size_t n, int p,
                                const std::vector<std::int8_t>& y,
                                const FitOptions& opts = {}) {
  if (n == 0 || p <= 0 || X.size() != n * static_cast<std::size_t>(p) || y.size() != n)
    throw ValidationError("fit_logistic: inconsistent design dimensions");
  bool any0 = false, any1 = false;
  for (auto v : y) (v ? any1 : any0) = true;
  if (!any0 || !any1)
    throw ValidationError("fit_logistic: both outcome values must be present");

  std::vector<double> beta(static_cast<std::size_t>(p), 0.0);
  if (!opts.warm_start.empty()) {
    if (opts.warm_start.size() != static_cast<std::size_t>(p))
      throw ValidationError("fit_logistic: warm start has wrong length");
    beta = opts.warm_start;
  }

  const auto loglik_at = [&](const std::vector<double>& b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      const double* row = X.data() + i * static_cast<std::size_t>(p);
      for (int j = 0; j < p; ++j) eta += row[j] * b[j];
      ll += (y[i] ? eta : 0.0) - detail::softplus(eta);
    }
    return ll;
  };

  LogisticFit fit;
  fit.beta = beta;
  std::vector<double> grad(static_cast<std::size_t>(p));
  std::vector<double> hess(static_cast<std::size_t>(p) * p);
  std::vector<double> step(static_cast<std::size_t>(p));
  std::vector<double> trial(static_cast<std::size_t>(p));
  double ll = loglik_at(beta);

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    fit.iterations = iter;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = X.data() + i * static_cast<std::size_t>(p);
      double eta = 0.0;
      for (int j = 0; j < p; ++j) eta += row[j] * beta[j];
      const double mu = detail::sigmoid(eta);
      const double s = mu * (1.0 - mu);
      const double r = static_cast<double>(y[i]) - mu;
      for (int j = 0; j < p; ++j) {
        grad[j] += r * row[j];
        for (int k = 0; k <= j; ++k) hess[j * p + k] += s * row[j] * row[k];
      }
    }
    for (int j = 0; j < p; ++j)
      for (int k = j + 1; k < p; ++k) hess[j * p + k] = hess[k * p + j];

    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::fabs(g));
    if (gmax < opts.gradient_tol) {
      fit.converged = true;
      break;
    }

    std::vector<double> l = hess;
    if (!detail::cholesky(l, p))
      throw ValidationError("fit_logistic: singular information matrix (collinear design)");
    detail::chol_solve(l, p, grad, step);

    double t = 1.0;
    bool moved = false;
    for (int half = 0; half < 40; ++half) {
      for (int j = 0; j < p; ++j) trial[j] = beta[j] + t * step[j];
      const double ll_trial = loglik_at(trial);
      if (ll_trial > ll + 1e-14) {
        beta = trial;
        ll = ll_trial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      double predicted = 0.0;
      for (int j = 0; j < p; ++j) predicted += grad[j] * step[j];
      if (0.5 * predicted < opts.stall_improvement_floor * (1.0 + std::fabs(ll))) {
        fit.converged = true;  // at the double-precision optimum
        break;
      }
      throw NumericalError("fit_logistic: step-halving failed to improve the likelihood");
    }
    for (double b : beta)
      if (std::fabs(b) > opts.separation_bound)
        throw NumericalError("fit_logistic: coefficients diverging (separation suspected)");
  }
  if (!fit.converged)
    throw NumericalError("fit_logistic: no convergence in " +
                         std::to_string(opts.max_iterations) + " iterations");

  fit.beta = beta;
  fit.loglik = ll;

  // Standard errors from the observed information at the optimum.
  std::fill(hess.begin(), hess.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = X.data() + i * static_cast<std::size_t>(p);
    double eta = 0.0;
    for (int j = 0; j < p; ++j) eta += row[j] * beta[j];
    const double mu = detail::sigmoid(eta);
    const double s = mu * (1.0 - mu);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k <= j; ++k) hess[j * p + k] += s * row[j] * row[k];
  }
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k) hess[j * p + k] = hess[k * p + j];
  std::vector<double> l = hess;
  if (!detail::cholesky(l, p))
    throw ValidationError("fit_logistic: singular information matrix at the optimum");
  fit.se.resize(static_cast<std::size_t>(p));
  std::vector<double> e(static_cast<std::size_t>(p)), col(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    detail::chol_solve(l, p, e, col);
    fit.se[j] = std::sqrt(col[j]);
  }
  fit.wald_z = fit.beta.back() / fit.se.back();
  fit.p_value = wald_p_value(fit.wald_z);
  return fit;
}

// ---------------------------------------------------------------------------
// Calibration testing on a pair-restricted dataset
// ---------------------------------------------------------------------------

struct CalibDesign {
  std::vector<double> score;        // raw score (or level when only levels exist)
  std::vector<std::uint8_t> noisy;  // 1 for the noisy group
  std::vector<std::int8_t> y_obs;

  static CalibDesign from(const Dataset& d) {
    if (!d.pair_resolved())
      throw ValidationError("calibration: audit pair not resolved (restrict_to_groups first)");
    CalibDesign c;
    c.score.reserve(d.size());
    for (const auto& r : d.records) {
      double s;
      if (r.has_score()) s = r.score;
      else if (r.has_level()) s = static_cast<double>(r.level);
      else throw ValidationError("calibration: record without score");
      c.score.push_back(s);
      c.noisy.push_back(r.group == d.noisy ? 1 : 0);
      c.y_obs.push_back(r.y_obs);
    }
    return c;
  }

  std::size_t size() const { return score.size(); }
};

namespace detail {

inline std::vector<double> calib_matrix(const CalibDesign& c) {
  std::vector<double> X;
  X.reserve(c.size() * 3);
  for (std::size_t i = 0; i < c.size(); ++i) {
    X.push_back(1.0);
    X.push_back(c.score[i]);
    X.push_back(static_cast<double>(c.noisy[i]));
  }
  return X;
}

inline double condition3_at(const CalibDesign& c, const std::vector<double>& beta) {
  double sw = 0.0, swx = 0.0, sp = 0.0, spx = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double eta = beta[0] + beta[1] * c.score[i] + beta[2] * c.noisy[i];
    const double mu = sigmoid(eta);
    const double s = mu * (1.0 - mu);
    sp += s;
    spx += s * c.score[i];
    if (c.noisy[i]) {
      sw += s;
      swx += s * c.score[i];
    }
  }
  return sw * spx - swx * sp;
}

}  // namespace detail

// Fit Y ~ S + A on the design, with condition3 evaluated at the optimum.
inline LogisticFit fit_calibration(const CalibDesign& c,
                                   const std::vector<std::int8_t>* labels = nullptr,
                                   const std::vector<double>& warm = {}) {
  FitOptions opts;
  opts.warm_start = warm;
  const std::vector<std::int8_t>& y = labels ? *labels : c.y_obs;
  if (y.size() != c.size()) throw ValidationError("fit_calibration: label vector length mismatch");
  LogisticFit fit = fit_logistic(detail::calib_matrix(c), c.size(), 3, y, opts);
  fit.condition3 = detail::condition3_at(c, fit.beta);
  return fit;
}

inline LogisticFit fit_calibration(const Dataset& d) {
  return fit_calibration(CalibDesign::from(d));
}

enum class AllocationSide { kLowestScores, kHighestScores };

// Labels with the ceil(n_w alpha) noisy-group observed negatives at the chosen
// score extreme flipped to 1. Ties broken by stable input order.
inline std::vector<std::int8_t> extreme_allocation(const Dataset& d, double alpha,
                                                   AllocationSide side) {
  const CalibDesign c = CalibDesign::from(d);
  const std::int64_t k = hidden_count(d.group_count(d.noisy), alpha);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.noisy[i] && c.y_obs[i] == 0) candidates.push_back(i);
  if (k > static_cast<std::int64_t>(candidates.size()))
    throw ValidationError("infeasible alpha: needs " + std::to_string(k) +
                          " flips but the noisy group has only " +
                          std::to_string(candidates.size()) + " observed negatives");

  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return c.score[a] < c.score[b]; });
  std::vector<std::int8_t> labels = c.y_obs;
  for (std::int64_t i = 0; i < k; ++i) {
    const std::size_t idx = (side == AllocationSide::kLowestScores)
                                ? candidates[static_cast<std::size_t>(i)]
                                : candidates[candidates.size() - 1 - static_cast<std::size_t>(i)];
    labels[idx] = 1;
  }
  return labels;
}

enum class CalibVerdict { kCalibratedAll, kMixed, kMiscalibratedAll };

inline const char* verdict_name(CalibVerdict v) {
  switch (v) {
    case CalibVerdict::kCalibratedAll: return "calibrated_all";
    case CalibVerdict::kMixed: return "mixed";
    default: return "miscalibrated_all";
  }
}

struct EnvelopeRow {
  double alpha = 0.0;
  bool fit_failed = false;
  std::string failure;
  double beta_a_low = 0.0, beta_a_high = 0.0;
  double beta_s_low = 0.0, beta_s_high = 0.0;
  double pvalue_low_alloc = 1.0, pvalue_high_alloc = 1.0;
  double condition3_low = 0.0, condition3_high = 0.0;
  bool condition3_ok = false;
  CalibVerdict verdict = CalibVerdict::kCalibratedAll;
  int miscal_sign = 0;  // sign of beta_A when both endpoints are significant
};

struct CoefficientEnvelope {
  double level = 0.05;
  std::vector<EnvelopeRow> rows;
};

// Refit on both extreme allocations for every alpha in the grid and classify
// each grid point. Fit errors mark the point and the sweep continues.
inline CoefficientEnvelope coefficient_envelope(const Dataset& d,
                                                const std::vector<double>& alpha_grid,
                                                double level, unsigned jobs = 1) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must be in (0,1)");
  const CalibDesign c = CalibDesign::from(d);
  CoefficientEnvelope env;
  env.level = level;
  env.rows.resize(alpha_grid.size());

  std::vector<double> warm_low, warm_high;
  const auto run_point = [&](std::size_t gi) {
    EnvelopeRow& row = env.rows[gi];
    row.alpha = alpha_grid[gi];
    try {
      const auto labels_low = extreme_allocation(d, row.alpha, AllocationSide::kLowestScores);
      const auto labels_high = extreme_allocation(d, row.alpha, AllocationSide::kHighestScores);
      const LogisticFit lo = fit_calibration(c, &labels_low, jobs <= 1 ? warm_low : std::vector<double>{});
      const LogisticFit hi = fit_calibration(c, &labels_high, jobs <= 1 ? warm_high : std::vector<double>{});
      if (jobs <= 1) {
        warm_low = lo.beta;
        warm_high = hi.beta;
      }
      row.beta_a_low = std::min(lo.beta[2], hi.beta[2]);
      row.beta_a_high = std::max(lo.beta[2], hi.beta[2]);
      row.beta_s_low = std::min(lo.beta[1], hi.beta[1]);
      row.beta_s_high = std::max(lo.beta[1], hi.beta[1]);
      row.pvalue_low_alloc = lo.p_value;
      row.pvalue_high_alloc = hi.p_value;
      row.condition3_low = lo.condition3;
      row.condition3_high = hi.condition3;
      row.condition3_ok = lo.condition3 >= 0.0 && hi.condition3 >= 0.0;
      const bool sig_lo = lo.p_value < level;
      const bool sig_hi = hi.p_value < level;
      if (!sig_lo && !sig_hi) {
        row.verdict = CalibVerdict::kCalibratedAll;
      } else if (sig_lo && sig_hi && (lo.beta[2] > 0) == (hi.beta[2] > 0)) {
        row.verdict = CalibVerdict::kMiscalibratedAll;
        row.miscal_sign = lo.beta[2] > 0 ? 1 : -1;
      } else {
        row.verdict = CalibVerdict::kMixed;
      }
    } catch (const std::exception& e) {
      row.fit_failed = true;
      row.failure = e.what();
    }
  };

  if (jobs <= 1) {
    for (std::size_t gi = 0; gi < alpha_grid.size(); ++gi) run_point(gi);
  } else {
    parallel_for(alpha_grid.size(), jobs, run_point);
  }
  return env;
}

struct BaselineDraw {
  double beta_s = 0.0;
  double beta_a = 0.0;
  double p_value = 1.0;
  bool failed = false;
};

// Random-mechanism baseline: k = ceil(n_w alpha) flips sampled uniformly among
// the noisy-group observed negatives, refit per draw. Rep r derives its own
// generator from the seed, so results do not depend on evaluation order.
inline std::vector<BaselineDraw> random_mechanism_baseline(const Dataset& d, double alpha,
                                                           int reps, std::uint64_t seed,
                                                           unsigned jobs = 1) {
  if (reps < 0) throw ValidationError("reps must be nonnegative");
  const CalibDesign c = CalibDesign::from(d);
  const std::int64_t k = hidden_count(d.group_count(d.noisy), alpha);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.noisy[i] && c.y_obs[i] == 0) candidates.push_back(i);
  if (k > static_cast<std::int64_t>(candidates.size()))
    throw ValidationError("infeasible alpha for the random baseline");

  const Rng root(seed);
  std::vector<BaselineDraw> draws(static_cast<std::size_t>(reps));
  parallel_for(draws.size(), jobs, [&](std::size_t r) {
    Rng rng = root.derive(r);
    std::vector<std::int8_t> labels = c.y_obs;
    for (std::size_t idx : rng.sample_indices(candidates.size(), static_cast<std::size_t>(k)))
      labels[candidates[idx]] = 1;
    try {
      const LogisticFit fit = fit_calibration(c, &labels);
      draws[r] = {fit.beta[1], fit.beta[2], fit.p_value, false};
    } catch (const std::exception&) {
      draws[r].failed = true;
    }
  });
  return draws;
}

// Label-dependent-cost corrected refit: within each group, resample records
// with weights (1 - beta_g) on y = 1 and beta_g on y = 0, beta_g = (1 - gamma_g)/2,
// then refit Y ~ S + A on the resampled data.
inline LogisticFit corrected_calibration(const Dataset& d,
                                         const std::map<std::string, double>& gamma_by_group,
                                         std::uint64_t seed) {
  const CalibDesign c = CalibDesign::from(d);
  double gamma[2];
  for (int g : {0, 1}) {
    const std::string& name = g == 0 ? d.groups[0] : d.groups[1];
    const auto it = gamma_by_group.find(name);
    if (it == gamma_by_group.end())
      throw ValidationError("corrected_calibration: no gamma for group '" + name + "'");
    if (!(it->second >= 0.0 && it->second < 1.0))
      throw ValidationError("corrected_calibration: gamma must be in [0,1)");
    gamma[g] = it->second;
  }

  Rng rng(seed);
  CalibDesign resampled;
  for (int g : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < c.size(); ++i)
      if ((c.noisy[i] == 1) == (g == 0)) members.push_back(i);
    const double beta_w = (1.0 - gamma[g]) / 2.0;
    std::vector<double> cum(members.size());
    double total = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      total += c.y_obs[members[m]] ? (1.0 - beta_w) : beta_w;
      cum[m] = total;
    }
    if (total <= 0.0) throw ValidationError("corrected_calibration: empty group");
    for (std::size_t draw = 0; draw < members.size(); ++draw) {
      const double u = rng.uniform01() * total;
      const std::size_t m = static_cast<std::size_t>(
          std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      const std::size_t i = members[std::min(m, members.size() - 1)];
      resampled.score.push_back(c.score[i]);
      resampled.noisy.push_back(c.noisy[i]);
      resampled.y_obs.push_back(c.y_obs[i]);
    }
  }
  bool any0 = false, any1 = false;
  for (auto v : resampled.y_obs) (v ? any1 : any0) = true;
  if (!any0 || !any1)
    throw ValidationError("corrected_calibration: degenerate resample (single outcome class)");
  return fit_calibration(resampled);
}

}  // namespace tvb
