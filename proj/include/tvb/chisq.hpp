#pragma once

// Pearson chi-squared test of Y independent of group given score level, and
// its sensitivity to hidden positives. An allocation h moves h_k noisy-group
// records from (level k, y=0) to (level k, y=1); the statistic
//
//   T(h) = sum_k sum_{a,y} (O_ay - E_ay)^2 / E_ay,
//   O_wy = n_wy + (2y-1) h_k,  E_ay = col_y(h_k) * row_a / n_k,
//
// is a sum of strongly convex one-dimensional terms f_k(h_k), which makes the
// budgeted minimization solvable by a scalar dual multiplier and the budgeted
// maximization amenable to a vertex greedy (the optimum of a convex f_k over a
// box edge is at an endpoint).
//
// Degenerate levels (an empty margin) are excluded from the statistic with a
// warning and a df reduction; the optimizers additionally trim caps so no
// level degenerates along the search box. Verdicts in minimal_budget compare
// against the critical value at the unshifted table's df so that budgets are
// compared like with like.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvb/dataset.hpp"
#include "tvb/error.hpp"
#include "tvb/special.hpp"

namespace tvb {

struct Allocation {
  std::vector<std::int64_t> h;
  std::int64_t budget = 0;            // N_h
  std::optional<double> eps;          // proportionality bound h_k <= floor(eps * n_w1)
};

struct ChiSqResult {
  double T = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<double> per_level;            // f_k(h_k); 0 for excluded levels
  std::vector<bool> included;
  std::vector<std::array<double, 4>> O;     // [w0, w1, b0, b1] per level
  std::vector<std::array<double, 4>> E;
  std::vector<std::string> warnings;
};

namespace detail {

// Per-level Pearson term at integer shift h; nullopt when a margin degenerates.
inline std::optional<double> level_term(const ScoreBinTable::LevelCounts& c, std::int64_t h,
                                        std::array<double, 4>* O_out = nullptr,
                                        std::array<double, 4>* E_out = nullptr) {
  const double w0 = static_cast<double>(c.w0) - static_cast<double>(h);
  const double w1 = static_cast<double>(c.w1) + static_cast<double>(h);
  const double b0 = static_cast<double>(c.b0);
  const double b1 = static_cast<double>(c.b1);
  const double n = w0 + w1 + b0 + b1;
  const double row_w = w0 + w1, row_b = b0 + b1;
  const double col0 = w0 + b0, col1 = w1 + b1;
  if (n <= 0 || row_w <= 0 || row_b <= 0 || col0 <= 0 || col1 <= 0) return std::nullopt;

  const std::array<double, 4> O = {w0, w1, b0, b1};
  const std::array<double, 4> E = {col0 * row_w / n, col1 * row_w / n, col0 * row_b / n,
                                   col1 * row_b / n};
  if (O_out) *O_out = O;
  if (E_out) *E_out = E;
  double t = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double d = O[i] - E[i];
    t += d * d / E[i];
  }
  return t;
}

// Continuous extension of the level term and its derivative in h, via the
// 2x2 identity T = n (O_w0 O_b1 - O_w1 O_b0)^2 / (row_w row_b col0 col1).
struct LevelFn {
  double d0, row_b, row_w, c0, c1, n;

  explicit LevelFn(const ScoreBinTable::LevelCounts& c)
      : d0(static_cast<double>(c.w0) * c.b1 - static_cast<double>(c.w1) * c.b0),
        row_b(static_cast<double>(c.b0 + c.b1)),
        row_w(static_cast<double>(c.w0 + c.w1)),
        c0(static_cast<double>(c.w0 + c.b0)),
        c1(static_cast<double>(c.w1 + c.b1)),
        n(static_cast<double>(c.total())) {}

  double value(double h) const {
    const double D = d0 - h * row_b;
    const double u = (c0 - h) * (c1 + h);
    return n * D * D / (row_w * row_b * u);
  }
  double deriv(double h) const {
    const double D = d0 - h * row_b;
    const double col0 = c0 - h, col1 = c1 + h;
    const double u = col0 * col1;
    const double up = col0 - col1;
    return n / (row_w * row_b) * (-2.0 * row_b * D * u - D * D * up) / (u * u);
  }
};

}  // namespace detail

inline ChiSqResult chisq_statistic(const ScoreBinTable& tbl, const std::vector<std::int64_t>& h) {
  if (static_cast<int>(h.size()) != tbl.K)
    throw ValidationError("chisq_statistic: allocation length must equal K");
  ChiSqResult res;
  res.per_level.assign(h.size(), 0.0);
  res.included.assign(h.size(), false);
  res.O.assign(h.size(), {});
  res.E.assign(h.size(), {});
  for (int k = 0; k < tbl.K; ++k) {
    const auto& c = tbl.counts[static_cast<std::size_t>(k)];
    if (h[k] < 0 || h[k] > c.w0)
      throw ValidationError("allocation exceeds observed negatives at level " +
                            std::to_string(k + 1));
    const auto t = detail::level_term(c, h[k], &res.O[k], &res.E[k]);
    if (!t) {
      if (c.total() > 0)
        res.warnings.push_back("level " + std::to_string(k + 1) +
                               " excluded: degenerate margin");
      continue;
    }
    res.per_level[k] = *t;
    res.included[k] = true;
    res.T += *t;
    ++res.df;
  }
  if (res.df == 0) throw ValidationError("chisq_statistic: all levels degenerate");
  res.p_value = chisq_sf(res.T, res.df);
  return res;
}

inline ChiSqResult chisq_statistic(const ScoreBinTable& tbl) {
  return chisq_statistic(tbl, std::vector<std::int64_t>(static_cast<std::size_t>(tbl.K), 0));
}

// Box caps for the optimizers: observed-negative cell, optional
// proportionality bound, trimmed so no margin degenerates inside the box.
inline std::vector<std::int64_t> level_caps(const ScoreBinTable& tbl, std::optional<double> eps,
                                            std::vector<std::string>* warnings = nullptr) {
  if (eps && *eps < 0.0) throw ValidationError("eps must be nonnegative");
  std::vector<std::int64_t> caps(static_cast<std::size_t>(tbl.K), 0);
  for (int k = 0; k < tbl.K; ++k) {
    const auto& c = tbl.counts[static_cast<std::size_t>(k)];
    if (!detail::level_term(c, 0)) continue;  // degenerate at h=0: unusable level
    std::int64_t cap = c.w0;
    if (eps)
      cap = std::min(cap, static_cast<std::int64_t>(std::floor(*eps * static_cast<double>(c.w1) +
                                                               1e-9)));
    if (c.b0 == 0 && cap == c.w0 && cap > 0) {
      --cap;  // keep the y=0 column populated
      if (warnings)
        warnings->push_back("level " + std::to_string(k + 1) +
                            ": cap reduced to keep margins positive");
    }
    caps[static_cast<std::size_t>(k)] = cap;
  }
  return caps;
}

struct ChiSqOpt {
  std::vector<std::int64_t> h;
  ChiSqResult stat;
};

namespace detail {

// Exact local repair: per-coordinate +-1 moves and budget-preserving pair
// moves. For a separable convex objective over {0 <= h <= cap, sum h <= N}
// local optimality under these moves implies global integer optimality.
inline void repair_to_local_min(const ScoreBinTable& tbl, const std::vector<std::int64_t>& caps,
                                std::int64_t budget, std::vector<std::int64_t>& h) {
  const int K = tbl.K;
  std::vector<double> term(static_cast<std::size_t>(K), 0.0);
  std::int64_t used = 0;
  for (int k = 0; k < K; ++k) {
    term[k] = level_term(tbl.counts[k], h[k]).value_or(0.0);
    used += h[k];
  }
  const auto term_at = [&](int k, std::int64_t hk) {
    return level_term(tbl.counts[static_cast<std::size_t>(k)], hk).value_or(0.0);
  };

  for (std::int64_t guard = 0; guard < (budget + 1) * (K + 1) * 8 + 64; ++guard) {
    double best_delta = -1e-12;
    int best_i = -1, best_j = -1;  // +1 on i, -1 on j (j = -1: pure move)
    int best_dir = 0;
    for (int i = 0; i < K; ++i) {
      if (h[i] < caps[i] && used < budget) {
        const double delta = term_at(i, h[i] + 1) - term[i];
        if (delta < best_delta) { best_delta = delta; best_i = i; best_j = -1; best_dir = +1; }
      }
      if (h[i] > 0) {
        const double delta = term_at(i, h[i] - 1) - term[i];
        if (delta < best_delta) { best_delta = delta; best_i = i; best_j = -1; best_dir = -1; }
      }
    }
    for (int i = 0; i < K; ++i) {
      if (h[i] >= caps[i]) continue;
      const double di = term_at(i, h[i] + 1) - term[i];
      for (int j = 0; j < K; ++j) {
        if (j == i || h[j] == 0) continue;
        const double dj = term_at(j, h[j] - 1) - term[j];
        if (di + dj < best_delta) { best_delta = di + dj; best_i = i; best_j = j; best_dir = +1; }
      }
    }
    if (best_i < 0) break;
    if (best_j < 0) {
      h[best_i] += best_dir;
      used += best_dir;
    } else {
      ++h[best_i];
      --h[best_j];
      term[best_j] = term_at(best_j, h[best_j]);
    }
    term[best_i] = term_at(best_i, h[best_i]);
  }
}

}  // namespace detail

// Budgeted minimization of T: continuous separable convex solve with a scalar
// dual multiplier on the budget (per-coordinate safeguarded Newton on f_k'),
// then exact integer local repair.
inline ChiSqOpt minimize_T(const ScoreBinTable& tbl, std::int64_t budget,
                           std::optional<double> eps = std::nullopt) {
  if (budget < 0) throw ValidationError("minimize_T: budget must be nonnegative");
  std::vector<std::string> warnings;
  const auto caps = level_caps(tbl, eps, &warnings);
  const int K = tbl.K;

  std::vector<detail::LevelFn> fns;
  fns.reserve(static_cast<std::size_t>(K));
  for (const auto& c : tbl.counts) fns.emplace_back(c);

  // h_k(lambda): minimizer of f_k(h) + lambda h over [0, cap].
  const auto coord_min = [&](int k, double lambda) -> double {
    const double cap = static_cast<double>(caps[k]);
    if (cap <= 0.0) return 0.0;
    const auto& f = fns[static_cast<std::size_t>(k)];
    if (f.deriv(0.0) + lambda >= 0.0) return 0.0;
    if (f.deriv(cap) + lambda <= 0.0) return cap;
    double lo = 0.0, hi = cap, x = 0.5 * cap;
    for (int it = 0; it < 100; ++it) {
      const double g = f.deriv(x) + lambda;
      if (g > 0.0) hi = x; else lo = x;
      const double step = 1e-6 * (1.0 + std::fabs(x));
      const double g2 = (f.deriv(std::min(x + step, cap)) - f.deriv(std::max(x - step, 0.0))) /
                        (std::min(x + step, cap) - std::max(x - step, 0.0));
      double nx = (g2 > 0.0) ? x - g / g2 : 0.5 * (lo + hi);
      if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
      if (std::fabs(nx - x) < 1e-12 * (1.0 + cap)) { x = nx; break; }
      x = nx;
    }
    return x;
  };
  const auto total_at = [&](double lambda) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += coord_min(k, lambda);
    return s;
  };

  double lambda = 0.0;
  if (total_at(0.0) > static_cast<double>(budget)) {
    double lo = 0.0, hi = 1.0;
    while (total_at(hi) > static_cast<double>(budget)) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (total_at(mid) > static_cast<double>(budget)) lo = mid; else hi = mid;
    }
    lambda = hi;
  }

  std::vector<std::int64_t> h(static_cast<std::size_t>(K), 0);
  std::int64_t used = 0;
  for (int k = 0; k < K; ++k) {
    h[k] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(coord_min(k, lambda))),
                                  caps[k]);
    used += h[k];
  }
  if (used > budget) {  // floating-point slop at the multiplier; shed the excess
    for (int k = 0; k < K && used > budget; ++k)
      while (h[k] > 0 && used > budget) { --h[k]; --used; }
  }
  detail::repair_to_local_min(tbl, caps, budget, h);

  ChiSqOpt out{h, chisq_statistic(tbl, h)};
  for (auto& w : warnings) out.stat.warnings.push_back(std::move(w));
  return out;
}

// Budgeted maximization, vertex greedy: each move pushes one level to its cap
// or to the remaining budget, taking the largest improvement (ties to the
// lowest level index).
inline ChiSqOpt maximize_T_greedy(const ScoreBinTable& tbl, std::int64_t budget,
                                  std::optional<double> eps = std::nullopt) {
  if (budget < 0) throw ValidationError("maximize_T_greedy: budget must be nonnegative");
  std::vector<std::string> warnings;
  const auto caps = level_caps(tbl, eps, &warnings);
  const int K = tbl.K;

  std::vector<std::int64_t> h(static_cast<std::size_t>(K), 0);
  std::int64_t remaining = budget;
  while (remaining > 0) {
    double best_gain = 0.0;
    int best_k = -1;
    std::int64_t best_target = 0;
    for (int k = 0; k < K; ++k) {
      const std::int64_t target = std::min(caps[k], h[k] + remaining);
      if (target <= h[k]) continue;
      const auto cur = detail::level_term(tbl.counts[static_cast<std::size_t>(k)], h[k]);
      const auto cand = detail::level_term(tbl.counts[static_cast<std::size_t>(k)], target);
      if (!cur || !cand) continue;
      const double gain = *cand - *cur;
      if (gain > best_gain) {
        best_gain = gain;
        best_k = k;
        best_target = target;
      }
    }
    if (best_k < 0) break;
    remaining -= best_target - h[best_k];
    h[best_k] = best_target;
  }

  ChiSqOpt out{h, chisq_statistic(tbl, h)};
  for (auto& w : warnings) out.stat.warnings.push_back(std::move(w));
  return out;
}

enum class BudgetDirection { kBreakCalibration, kAchieveCalibration };

struct BudgetResult {
  bool reachable = false;
  std::int64_t budget = 0;     // smallest budget meeting the target (or max tried)
  std::vector<std::int64_t> h;
  ChiSqResult stat;
  double critical_value = 0.0;
  int df_unshifted = 0;
};

// Smallest budget that crosses the critical value (break) or drops below it
// (achieve). The minimize side is monotone in budget, so bisection plus a
// downward verification scan is exact. The greedy maximizer is not always
// monotone in budget, so the break side scans upward and returns the literal
// first crossing.
inline BudgetResult minimal_budget(const ScoreBinTable& tbl, BudgetDirection direction,
                                   double level, std::optional<double> eps = std::nullopt) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must be in (0,1)");
  const ChiSqResult base = chisq_statistic(tbl);
  const double crit = chisq_critical(level, base.df);

  const auto caps = level_caps(tbl, eps);
  std::int64_t max_budget = 0;
  for (auto c : caps) max_budget += c;

  const auto solve = [&](std::int64_t n) {
    return direction == BudgetDirection::kBreakCalibration ? maximize_T_greedy(tbl, n, eps)
                                                           : minimize_T(tbl, n, eps);
  };
  const auto met = [&](const ChiSqOpt& o) {
    return direction == BudgetDirection::kBreakCalibration ? o.stat.T >= crit : o.stat.T < crit;
  };

  BudgetResult res;
  res.critical_value = crit;
  res.df_unshifted = base.df;

  ChiSqOpt at_zero = solve(0);
  if (met(at_zero)) {
    res.reachable = true;
    res.budget = 0;
    res.h = at_zero.h;
    res.stat = at_zero.stat;
    return res;
  }
  ChiSqOpt at_max = solve(max_budget);
  if (!met(at_max)) {
    res.reachable = false;
    res.budget = max_budget;
    res.h = at_max.h;
    res.stat = at_max.stat;  // the extreme achievable statistic
    return res;
  }

  std::int64_t hi = max_budget;
  if (direction == BudgetDirection::kBreakCalibration) {
    for (std::int64_t n = 1; n <= max_budget; ++n) {
      if (met(solve(n))) {
        hi = n;
        break;
      }
    }
  } else {
    std::int64_t lo = 0;
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (met(solve(mid))) hi = mid; else lo = mid;
    }
    while (hi > 0 && met(solve(hi - 1))) --hi;
  }

  ChiSqOpt best = solve(hi);
  res.reachable = true;
  res.budget = hi;
  res.h = best.h;
  res.stat = best.stat;
  return res;
}

}  // namespace tvb
