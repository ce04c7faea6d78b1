#pragma once

// AUC via the Mann-Whitney rank statistic with midranks for ties, plus sharp
// bounds on the true AUC when k observed negatives are hidden positives. The
// bound endpoints are attained by flipping the k lowest- (resp. highest-)
// ranked observed negatives; flipping labels never changes score ranks, so the
// pooled ranks are computed once.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tvb/error.hpp"

namespace tvb {

struct RankSummary {
  std::size_t n0 = 0, n1 = 0;
  std::vector<double> ranks;            // midranks, aligned with input order
  double r1_sum = 0.0;                  // sum of ranks over y = 1
  std::vector<std::size_t> neg_order;   // observed negatives, ascending (score, index)
};

inline RankSummary rank_summary(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValidationError("rank_summary: scores and labels differ in length");
  const std::size_t n = scores.size();
  if (n == 0) throw ValidationError("rank_summary: empty input");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  RankSummary rs;
  rs.ranks.assign(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t) rs.ranks[order[t]] = midrank;
    i = j + 1;
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (labels[t] == 1) {
      ++rs.n1;
      rs.r1_sum += rs.ranks[t];
    } else if (labels[t] == 0) {
      ++rs.n0;
    } else {
      throw ValidationError("rank_summary: labels must be 0 or 1");
    }
  }
  for (std::size_t t : order)
    if (labels[t] == 0) rs.neg_order.push_back(t);
  return rs;
}

inline double observed_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const RankSummary rs = rank_summary(scores, labels);
  if (rs.n0 == 0 || rs.n1 == 0)
    throw ValidationError("observed_auc: both outcome classes must be present");
  const double n0 = static_cast<double>(rs.n0), n1 = static_cast<double>(rs.n1);
  return rs.r1_sum / (n1 * n0) - (n1 + 1.0) / (2.0 * n0);
}

struct AucBounds {
  double lower = 0.0;
  double upper = 0.0;
};

// Bounds on the true AUC with k hidden positives among the observed negatives,
// 0 <= k < min(n0, n1).
inline AucBounds auc_bounds(const std::vector<double>& scores, const std::vector<int>& labels,
                            std::int64_t k) {
  const RankSummary rs = rank_summary(scores, labels);
  if (rs.n0 == 0 || rs.n1 == 0)
    throw ValidationError("auc_bounds: both outcome classes must be present");
  if (k < 0 || static_cast<std::size_t>(k) >= std::min(rs.n0, rs.n1))
    throw ValidationError("auc_bounds: k must satisfy 0 <= k < min(n0, n1)");

  const double n0 = static_cast<double>(rs.n0), n1 = static_cast<double>(rs.n1);
  const double kk = static_cast<double>(k);
  const double beta_k = (n1 + kk) * (n1 + kk + 1.0) / 2.0;
  const double denom = (n0 - kk) * (n1 + kk);

  double low_sum = 0.0, high_sum = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    low_sum += rs.ranks[rs.neg_order[static_cast<std::size_t>(i)]];
    high_sum += rs.ranks[rs.neg_order[rs.neg_order.size() - 1 - static_cast<std::size_t>(i)]];
  }
  return {(rs.r1_sum + low_sum - beta_k) / denom, (rs.r1_sum + high_sum - beta_k) / denom};
}

// Label-dependent noise identity AUC = (1 - rho) AUC* + rho/2, inverted.
inline double auc_label_dependent(double auc_obs, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must be in [0,1)");
  return (auc_obs - 0.5 * rho) / (1.0 - rho);
}

}  // namespace tvb
