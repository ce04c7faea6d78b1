#pragma once

// Synthetic generators for studying where hidden positives land, random-flip
// experiments, and the signed maximal disparate impact (SMDI) measures.
//
// The catch-probability families take a true positive rate m*(x) = x on
// X ~ Unif[0,1] and a noise rate gamma(x) = P(Y=0 | Y*=1, x):
//
//   Inc: gamma(x) = 1 - (b+1)x / (1 + bx)          (catch odds rise with x)
//   Dec: gamma(x) = 1 - (b+1)(1-x) / (1 + b(1-x))  (catch odds fall with x)
//
// SMDI: D+ = sup_{t >= t0} F_b(t) - F_w(t), D- with the roles swapped; the
// largest classification-rate disparity any threshold >= t0 could induce.
// Empirical cdfs are right-continuous and the sup is evaluated at the pooled
// jump points (exact for step functions).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tvb/dataset.hpp"
#include "tvb/error.hpp"
#include "tvb/logistic.hpp"
#include "tvb/parallel.hpp"
#include "tvb/rng.hpp"

namespace tvb {

enum class CatchFamily { kInc, kDec, kConstant, kCustomTable };

struct CatchModel {
  CatchFamily family = CatchFamily::kInc;
  double b = 0.0;                                   // shape for Inc/Dec
  double rate = 0.0;                                // Constant family
  std::vector<std::pair<double, double>> table;     // CustomTable: (x, gamma), sorted

  double gamma(double x) const {
    switch (family) {
      case CatchFamily::kInc:
        return 1.0 - (b + 1.0) * x / (1.0 + b * x);
      case CatchFamily::kDec:
        return 1.0 - (b + 1.0) * (1.0 - x) / (1.0 + b * (1.0 - x));
      case CatchFamily::kConstant:
        return rate;
      case CatchFamily::kCustomTable: {
        if (table.empty()) throw ValidationError("CatchModel: empty custom table");
        if (x <= table.front().first) return table.front().second;
        if (x >= table.back().first) return table.back().second;
        for (std::size_t i = 1; i < table.size(); ++i) {
          if (x <= table[i].first) {
            const auto& [x0, g0] = table[i - 1];
            const auto& [x1, g1] = table[i];
            const double t = (x - x0) / (x1 - x0);
            return g0 + t * (g1 - g0);
          }
        }
        return table.back().second;
      }
    }
    return 0.0;
  }

  void validate() const {
    if (family == CatchFamily::kInc || family == CatchFamily::kDec) {
      if (b < 0.0) throw ValidationError("CatchModel: b must be nonnegative");
    }
    if (family == CatchFamily::kConstant && !(rate >= 0.0 && rate <= 1.0))
      throw ValidationError("CatchModel: constant rate must be in [0,1]");
    if (family == CatchFamily::kCustomTable)
      for (const auto& [x, g] : table)
        if (!(g >= 0.0 && g <= 1.0))
          throw ValidationError("CatchModel: table gamma outside [0,1]");
  }
};

struct SimResult {
  Dataset data;                     // score = x, y_obs, y_hat; single group "all"
  std::vector<std::int8_t> y_true;
  double frac_high_risk_hidden = std::numeric_limits<double>::quiet_NaN();
  std::int64_t hidden_count = 0;
  double threshold = 0.0;           // empirical median used for y_hat
};

// X ~ Unif[0,1], Y* ~ Bern(x), Y = Y* Bern(1 - gamma(x)), Yhat = 1{x > median}.
// Reports the fraction of hidden positives (Y*=1, Y=0) classified high risk.
inline SimResult simulate_example2(std::size_t n, const CatchModel& model, std::uint64_t seed) {
  if (n < 2) throw ValidationError("simulate_example2: n must be >= 2");
  model.validate();
  Rng rng(seed);

  SimResult res;
  res.data.groups = {"all"};
  res.data.records.resize(n);
  res.y_true.resize(n);

  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = rng.uniform01();
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const double median = (n % 2 == 1)
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  res.threshold = median;

  std::int64_t hidden = 0, hidden_high = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xs[i];
    const std::int8_t y_true = rng.bernoulli(x) ? 1 : 0;
    const std::int8_t y_obs = (y_true && rng.bernoulli(1.0 - model.gamma(x))) ? 1 : 0;
    const std::int8_t y_hat = x > median ? 1 : 0;
    auto& r = res.data.records[i];
    r.score = x;
    r.group = 0;
    r.y_obs = y_obs;
    r.y_hat = y_hat;
    res.y_true[i] = y_true;
    if (y_true == 1 && y_obs == 0) {
      ++hidden;
      hidden_high += y_hat;
    }
  }
  res.hidden_count = hidden;
  if (hidden > 0)
    res.frac_high_risk_hidden = static_cast<double>(hidden_high) / static_cast<double>(hidden);
  return res;
}

// Flip exactly ceil(n_noisy * alpha) uniformly chosen noisy-group observed
// negatives to y_obs = 1. Seed-reproducible.
inline Dataset random_flip(const Dataset& d, double alpha, std::uint64_t seed) {
  if (d.noisy < 0) throw ValidationError("random_flip: noisy group not resolved");
  const std::int64_t k = hidden_count(d.group_count(d.noisy), alpha);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.records[i].group == d.noisy && d.records[i].y_obs == 0) candidates.push_back(i);
  if (k > static_cast<std::int64_t>(candidates.size()))
    throw ValidationError("infeasible alpha: needs " + std::to_string(k) +
                          " flips but only " + std::to_string(candidates.size()) +
                          " observed negatives are available");
  Dataset out = d;
  Rng rng(seed);
  for (std::size_t idx : rng.sample_indices(candidates.size(), static_cast<std::size_t>(k)))
    out.records[candidates[idx]].y_obs = 1;
  return out;
}

struct SmdiResult {
  double d_plus = 0.0;   // sup_{t >= t0} F_b(t) - F_w(t)
  double d_minus = 0.0;  // sup_{t >= t0} F_w(t) - F_b(t)
  double t0 = 0.0;
  double argmax_plus = 0.0;
  double argmax_minus = 0.0;
};

inline SmdiResult smdi(const std::vector<double>& scores_b, const std::vector<double>& scores_w,
                       double t0) {
  if (scores_b.empty() || scores_w.empty())
    throw ValidationError("smdi: both groups must be nonempty");
  std::vector<double> sb = scores_b, sw = scores_w;
  std::sort(sb.begin(), sb.end());
  std::sort(sw.begin(), sw.end());
  const auto cdf = [](const std::vector<double>& s, double t) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), t) - s.begin()) /
           static_cast<double>(s.size());
  };

  std::vector<double> ts;
  ts.push_back(t0);
  for (double v : sb)
    if (v >= t0) ts.push_back(v);
  for (double v : sw)
    if (v >= t0) ts.push_back(v);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  SmdiResult res;
  res.t0 = t0;
  res.d_plus = -std::numeric_limits<double>::infinity();
  res.d_minus = -std::numeric_limits<double>::infinity();
  for (double t : ts) {
    const double diff = cdf(sb, t) - cdf(sw, t);
    if (diff > res.d_plus) {
      res.d_plus = diff;
      res.argmax_plus = t;
    }
    if (-diff > res.d_minus) {
      res.d_minus = -diff;
      res.argmax_minus = t;
    }
  }
  return res;
}

// Threshold equalizing the off-diagonal confusion cells on the observed data:
// the t minimizing |P(y=0, s>t) - P(y=1, s<=t)|, smallest minimizer wins.
inline double equalizing_threshold(const std::vector<double>& scores,
                                   const std::vector<std::int8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("equalizing_threshold: bad input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::int64_t total1 = 0;
  for (auto y : labels) total1 += y;
  const std::int64_t total0 = static_cast<std::int64_t>(labels.size()) - total1;

  // Sweep thresholds at each distinct score; at threshold t = s:
  //   p01 ~ #{y=0, score > t},  p10 ~ #{y=1, score <= t}.
  double best_t = scores[order.front()] - 1.0;
  std::int64_t c0_le = 0, c1_le = 0;
  std::int64_t best_gap = std::llabs(total0 - 0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) (labels[order[t]] ? c1_le : c0_le)++;
    const std::int64_t gap = std::llabs((total0 - c0_le) - c1_le);
    if (gap < best_gap) {
      best_gap = gap;
      best_t = scores[order[i]];
    }
    i = j + 1;
  }
  return best_t;
}

struct SmdiExperimentRow {
  double alpha = 0.0;
  int rep = 0;
  double d_plus = 0.0;
  double d_minus = 0.0;
  bool failed = false;
};

struct SmdiExperimentConfig {
  std::vector<double> alpha_grid;
  int reps = 1000;
  bool include_group = true;   // add the group indicator to the score model
  std::optional<double> t0;    // default: equalizing threshold at alpha = 0
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

// Retraining experiment: per (alpha, rep), flip a random subset, refit the
// score model y ~ features (+ group), and compute the SMDI statistics of the
// refitted scores between baseline and noisy group.
inline std::vector<SmdiExperimentRow> smdi_retrain_experiment(const Dataset& d,
                                                              const SmdiExperimentConfig& cfg) {
  if (!d.pair_resolved())
    throw ValidationError("smdi_retrain_experiment: audit pair not resolved");
  if (d.feature_names.empty())
    throw ValidationError("smdi_retrain_experiment: no feature columns loaded");

  const std::size_t n = d.size();
  const int p = static_cast<int>(d.feature_names.size()) + 1 + (cfg.include_group ? 1 : 0);
  std::vector<double> X;
  X.reserve(n * static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < n; ++i) {
    X.push_back(1.0);
    const double* row = d.feature_row(i);
    X.insert(X.end(), row, row + d.feature_names.size());
    if (cfg.include_group) X.push_back(d.records[i].group == d.noisy ? 1.0 : 0.0);
  }
  const auto scores_of = [&](const std::vector<double>& beta) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      const double* row = X.data() + i * static_cast<std::size_t>(p);
      for (int j = 0; j < p; ++j) eta += row[j] * beta[j];
      s[i] = detail::sigmoid(eta);
    }
    return s;
  };
  const auto labels_of = [&](const Dataset& dd) {
    std::vector<std::int8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = dd.records[i].y_obs;
    return y;
  };

  // Baseline model pins t0 when not supplied.
  const LogisticFit base = fit_logistic(X, n, p, labels_of(d));
  double t0;
  if (cfg.t0) {
    t0 = *cfg.t0;
  } else {
    const std::vector<double> s0 = scores_of(base.beta);
    t0 = equalizing_threshold(s0, labels_of(d));
  }

  std::vector<SmdiExperimentRow> rows(cfg.alpha_grid.size() * static_cast<std::size_t>(cfg.reps));
  const Rng root(cfg.seed);
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t t) {
    const std::size_t ai = t / static_cast<std::size_t>(cfg.reps);
    const int rep = static_cast<int>(t % static_cast<std::size_t>(cfg.reps));
    SmdiExperimentRow& row = rows[t];
    row.alpha = cfg.alpha_grid[ai];
    row.rep = rep;
    try {
      Rng stream = root.derive(t);
      const Dataset flipped = random_flip(d, row.alpha, stream.next());
      FitOptions opts;
      opts.warm_start = base.beta;
      const LogisticFit fit = fit_logistic(X, n, p, labels_of(flipped), opts);
      const std::vector<double> s = scores_of(fit.beta);
      std::vector<double> sb, sw;
      for (std::size_t i = 0; i < n; ++i)
        (d.records[i].group == d.baseline ? sb : sw).push_back(s[i]);
      const SmdiResult r = smdi(sb, sw, t0);
      row.d_plus = r.d_plus;
      row.d_minus = r.d_minus;
    } catch (const std::exception&) {
      row.failed = true;
    }
  });
  return rows;
}

}  // namespace tvb
