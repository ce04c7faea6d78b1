#include "tvb/bounds.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "tvb/rng.hpp"

namespace {

tvb::GroupConfusion cm_from(std::int64_t c00, std::int64_t c01, std::int64_t c10,
                            std::int64_t c11) {
  return tvb::GroupConfusion{c00, c01, c10, c11, c00 + c01 + c10 + c11};
}

TEST(Trichotomy, ObservedRatesDecideTheExcludedPair) {
  // FPR = 0.23, FNR = 0.48: 1 - FPR > FNR
  EXPECT_EQ(tvb::trichotomy(cm_from(77, 23, 48, 52)), tvb::Trichotomy::kExcludesFnrDownFprUp);
  // FPR = 0.6, FNR = 0.5: 1 - FPR < FNR
  EXPECT_EQ(tvb::trichotomy(cm_from(40, 60, 50, 50)), tvb::Trichotomy::kExcludesFnrUpFprDown);
  // FNR = 1 - FPR exactly
  EXPECT_EQ(tvb::trichotomy(cm_from(75, 25, 75, 25)), tvb::Trichotomy::kBoundary);
  EXPECT_THROW(tvb::trichotomy(cm_from(0, 0, 5, 5)), tvb::ValidationError);
}

TEST(MetricBounds, AlphaZeroCollapsesToObserved) {
  tvb::Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const auto cm = cm_from(1 + rng.below(30), 1 + rng.below(30), 1 + rng.below(30),
                            1 + rng.below(30));
    const auto m = tvb::metrics(cm);
    const auto b = tvb::metric_bounds(cm, 0.0);
    EXPECT_DOUBLE_EQ(b.fpr.lower, *m.fpr);
    EXPECT_DOUBLE_EQ(b.fpr.upper, *m.fpr);
    EXPECT_DOUBLE_EQ(b.fnr.lower, *m.fnr);
    EXPECT_DOUBLE_EQ(b.fnr.upper, *m.fnr);
    EXPECT_DOUBLE_EQ(b.ppv.lower, *m.ppv);
    EXPECT_DOUBLE_EQ(b.ppv.upper, *m.ppv);
  }
}

TEST(MetricBounds, FnrHandExample) {
  // p = (0.4, 0.2, 0.2, 0.2), alpha = 0.1 -> FNR* in [0.4, 0.6]
  const auto cm = cm_from(4, 2, 2, 2);
  const auto b = tvb::metric_bounds(cm, 0.1);
  EXPECT_NEAR(b.fnr.lower, 0.4, 1e-15);
  EXPECT_NEAR(b.fnr.upper, 0.6, 1e-15);

  // Oracle: flip every 1-subset of the observed negatives on the realizing
  // 10-record instance and recompute the rates from scratch.
  oracle::SmallGroup g;
  for (int i = 0; i < 4; ++i) g.records.push_back({0, 0});
  for (int i = 0; i < 2; ++i) g.records.push_back({0, 1});
  for (int i = 0; i < 2; ++i) g.records.push_back({1, 0});
  for (int i = 0; i < 2; ++i) g.records.push_back({1, 1});
  const auto ex = oracle::flip_extremes(g, 1);
  EXPECT_EQ(ex.fnr_min, (oracle::Frac{2, 5}));
  EXPECT_EQ(ex.fnr_max, (oracle::Frac{3, 5}));
  EXPECT_DOUBLE_EQ(ex.fnr_min.value(), b.fnr.lower);
  EXPECT_DOUBLE_EQ(ex.fnr_max.value(), b.fnr.upper);
}

TEST(MetricBounds, InfeasibleAlphaNamesBindingCell) {
  const auto cm = cm_from(40, 10, 25, 25);  // p01 = 0.1 binds
  try {
    tvb::metric_bounds(cm, 0.2);
    FAIL() << "expected ValidationError";
  } catch (const tvb::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("p01"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(tvb::metric_bounds_capped(cm, 0.2));
  EXPECT_THROW(tvb::metric_bounds_capped(cm, 0.55), tvb::ValidationError);
}

TEST(MetricAt, ExtremalAllocationsHitTheEndpoints) {
  const auto cm = cm_from(35, 15, 20, 30);
  const double alpha = 0.12;
  const auto b = tvb::metric_bounds(cm, alpha);
  const auto all_high = tvb::metric_at(cm, tvb::NoiseSpec::split(0.0, alpha));
  const auto all_low = tvb::metric_at(cm, tvb::NoiseSpec::split(alpha, 0.0));
  EXPECT_NEAR(*all_high.fpr, b.fpr.lower, 1e-15);
  EXPECT_NEAR(*all_low.fpr, b.fpr.upper, 1e-15);
  EXPECT_NEAR(*all_high.fnr, b.fnr.lower, 1e-15);
  EXPECT_NEAR(*all_low.fnr, b.fnr.upper, 1e-15);
  EXPECT_NEAR(*all_low.ppv, b.ppv.lower, 1e-15);
  EXPECT_NEAR(*all_high.ppv, b.ppv.upper, 1e-15);
}

TEST(MetricAt, RandomSpecStaysInsideBounds) {
  tvb::Rng rng(19);
  for (int t = 0; t < 300; ++t) {
    const auto cm = cm_from(1 + rng.below(40), 1 + rng.below(40), 1 + rng.below(40),
                            1 + rng.below(40));
    const double cap = std::min(cm.p00(), cm.p01());
    const double alpha = rng.uniform01() * cap;
    const double a1 = rng.uniform01() * std::min(alpha, cm.p01());
    const double a0 = alpha - a1;
    if (a0 > cm.p00()) continue;
    const auto m = tvb::metric_at(cm, tvb::NoiseSpec::split(a0, a1));
    const auto b = tvb::metric_bounds(cm, alpha);
    EXPECT_GE(*m.fpr, b.fpr.lower - 1e-12);
    EXPECT_LE(*m.fpr, b.fpr.upper + 1e-12);
    EXPECT_GE(*m.fnr, b.fnr.lower - 1e-12);
    EXPECT_LE(*m.fnr, b.fnr.upper + 1e-12);
    EXPECT_GE(*m.ppv, b.ppv.lower - 1e-12);
    EXPECT_LE(*m.ppv, b.ppv.upper + 1e-12);
  }
}

TEST(MetricAt, ConvexCombinationIdentity) {
  // FPR = (1 - P(Y*=1|Y=0)) FPR* + (alpha1/alpha) P(Y*=1|Y=0)
  tvb::Rng rng(23);
  for (int t = 0; t < 300; ++t) {
    const auto cm = cm_from(2 + rng.below(40), 2 + rng.below(40), 1 + rng.below(40),
                            1 + rng.below(40));
    const double alpha = 1e-6 + rng.uniform01() * (std::min(cm.p00(), cm.p01()) - 1e-6);
    if (alpha <= 0) continue;
    const double a1 = rng.uniform01() * std::min(alpha, cm.p01());
    const double a0 = alpha - a1;
    if (a0 > cm.p00()) continue;
    const auto m = tvb::metric_at(cm, tvb::NoiseSpec::split(a0, a1));
    const double p_hidden_given_neg = alpha / (cm.p00() + cm.p01());
    const double recombined =
        (1.0 - p_hidden_given_neg) * *m.fpr + (a1 / alpha) * p_hidden_given_neg;
    EXPECT_NEAR(recombined, *tvb::metrics(cm).fpr, 1e-12);
  }
}

TEST(DirectionConditions, IffAgainstExactArithmetic) {
  tvb::Rng rng(29);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    const std::int64_t c00 = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t c01 = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t c10 = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t c11 = 1 + static_cast<std::int64_t>(rng.below(12));
    const auto cm = cm_from(c00, c01, c10, c11);
    const std::int64_t n = cm.n;
    const std::int64_t k0 = static_cast<std::int64_t>(rng.below(c00 + 1));
    const std::int64_t k1 = static_cast<std::int64_t>(rng.below(c01 + 1));
    const std::int64_t k = k0 + k1;
    if (k == 0) continue;
    ++checked;
    const auto dc = tvb::direction_conditions(
        cm, tvb::NoiseSpec::split(double(k0) / n, double(k1) / n));

    // FPR >= alpha1/alpha in integers: c01 k >= k1 (c00 + c01)
    const bool fpr_lhs = c01 * k >= k1 * (c00 + c01);
    // FPR <= FPR* in integers: c01 (c00 + c01 - k) <= (c01 - k1)(c00 + c01)
    const bool fpr_rhs =
        c01 * (c00 + c01 - k) <= (c01 - k1) * (c00 + c01);
    EXPECT_EQ(fpr_lhs, fpr_rhs);
    EXPECT_EQ(dc.fpr_cond, fpr_lhs);

    const bool fnr_lhs = c10 * k >= k0 * (c10 + c11);
    const bool fnr_rhs =
        c10 * (c10 + c11 + k) >= (c10 + k0) * (c10 + c11);
    EXPECT_EQ(fnr_lhs, fnr_rhs);
    EXPECT_EQ(dc.fnr_cond, fnr_lhs);

    // Odds-ratio forms agree with the conditions when finite.
    if (k0 > 0 && c11 > 0)
      EXPECT_EQ(dc.odds_ratio_fnr >= 1.0, dc.fnr_cond);
    if (k1 > 0 && c00 > 0)
      EXPECT_EQ(dc.odds_ratio_fpr >= 1.0, dc.fpr_cond);
  }
  EXPECT_GT(checked, 400);
}

TEST(DirectionConditions, EqualityPropagates) {
  // FPR = 0.4 with k1/k = 0.4 exactly: equality on both sides of the iff.
  const auto cm = cm_from(6, 4, 5, 5);
  const auto dc = tvb::direction_conditions(cm, tvb::NoiseSpec::split(3.0 / 20, 2.0 / 20));
  EXPECT_TRUE(dc.fpr_cond);
  const auto m = tvb::metric_at(cm, tvb::NoiseSpec::split(3.0 / 20, 2.0 / 20));
  EXPECT_NEAR(*m.fpr, *tvb::metrics(cm).fpr, 1e-12);
  EXPECT_THROW(tvb::direction_conditions(cm, tvb::NoiseSpec::split(0.0, 0.0)),
               tvb::ValidationError);
}

TEST(DirectionConditions, RatioThresholdsMatchHandValues) {
  // FPR = 0.23, FNR = 0.48: the FPR condition needs alpha1 <= (0.23/0.77) alpha0...
  const auto cm = cm_from(77, 23, 48, 52);
  const auto m = tvb::metrics(cm);
  EXPECT_NEAR(*m.fpr / (1.0 - *m.fpr), 0.2987, 5e-4);
  EXPECT_NEAR((1.0 - *m.fnr) / *m.fnr, 1.0833, 5e-4);
  // ...and the two conditions can never hold together (Prop 1 cross-check).
  tvb::Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const double alpha = 0.01 + rng.uniform01() * 0.2;
    const double a1 = rng.uniform01() * std::min(alpha, cm.p01());
    const double a0 = alpha - a1;
    if (a0 > cm.p00() || a1 > cm.p01()) continue;
    const auto dc = tvb::direction_conditions(cm, tvb::NoiseSpec::split(a0, a1));
    EXPECT_FALSE(dc.fpr_cond && dc.fnr_cond);
  }
}

TEST(Sharpness, ExhaustiveEnumerationSmallInstances) {
  tvb::Rng rng(37);
  for (int inst = 0; inst < 40; ++inst) {
    oracle::SmallGroup g;
    const int n = 6 + static_cast<int>(rng.below(7));  // up to 12 records
    int count[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) {
      const int cell = static_cast<int>(rng.below(4));
      ++count[cell];
      g.records.push_back({cell / 2, cell % 2});
    }
    if (count[0] + count[1] == 0 || count[2] + count[3] == 0 || count[1] + count[3] == 0)
      continue;
    const auto cm = cm_from(count[0], count[1], count[2], count[3]);
    const std::int64_t kcap = std::min(count[0], count[1]);
    for (std::int64_t k = 0; k <= kcap; ++k) {
      const auto ex = oracle::flip_extremes(g, static_cast<std::size_t>(k));
      const double alpha = static_cast<double>(k) / n;
      const auto b = tvb::metric_bounds(cm, alpha);
      EXPECT_NEAR(ex.fpr_min.value(), b.fpr.lower, 1e-12);
      EXPECT_NEAR(ex.fpr_max.value(), b.fpr.upper, 1e-12);
      EXPECT_NEAR(ex.fnr_min.value(), b.fnr.lower, 1e-12);
      EXPECT_NEAR(ex.fnr_max.value(), b.fnr.upper, 1e-12);
      EXPECT_NEAR(ex.ppv_min.value(), b.ppv.lower, 1e-12);
      EXPECT_NEAR(ex.ppv_max.value(), b.ppv.upper, 1e-12);
      EXPECT_FALSE(ex.prop1_violated);
    }
    // Beyond the per-cell cap the clamped extremes stay sharp.
    const std::int64_t negs = count[0] + count[1];
    for (std::int64_t k = kcap + 1; k < negs; ++k) {
      const auto ex = oracle::flip_extremes(g, static_cast<std::size_t>(k));
      const auto b = tvb::metric_bounds_capped(cm, static_cast<double>(k) / n);
      EXPECT_NEAR(ex.fpr_min.value(), b.fpr.lower, 1e-12);
      EXPECT_NEAR(ex.fpr_max.value(), b.fpr.upper, 1e-12);
      EXPECT_NEAR(ex.fnr_min.value(), b.fnr.lower, 1e-12);
      EXPECT_NEAR(ex.fnr_max.value(), b.fnr.upper, 1e-12);
      EXPECT_NEAR(ex.ppv_min.value(), b.ppv.lower, 1e-12);
      EXPECT_NEAR(ex.ppv_max.value(), b.ppv.upper, 1e-12);
      EXPECT_THROW(tvb::metric_bounds(cm, static_cast<double>(k) / n), tvb::ValidationError);
    }
  }
}

TEST(MetricBounds, EndpointMonotonicityInAlpha) {
  tvb::Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    const auto cm = cm_from(2 + rng.below(40), 2 + rng.below(40), 1 + rng.below(40),
                            1 + rng.below(40));
    const double cap = std::min(cm.p00(), cm.p01());
    double prev_fnr_hi = -1.0, prev_fpr_lo = 2.0, prev_ppv_hi = -1.0;
    for (double a = 0.0; a <= cap + 1e-15; a += cap / 7.0) {
      const auto b = tvb::metric_bounds(cm, std::min(a, cap));
      EXPECT_GE(b.fnr.upper, prev_fnr_hi - 1e-12);
      EXPECT_LE(b.fpr.lower, prev_fpr_lo + 1e-12);
      EXPECT_GE(b.ppv.upper, prev_ppv_hi - 1e-12);
      prev_fnr_hi = b.fnr.upper;
      prev_fpr_lo = b.fpr.lower;
      prev_ppv_hi = b.ppv.upper;
    }
  }
}

TEST(LabelDependent, Identities) {
  const auto cm = cm_from(70, 30, 40, 60);  // FPR = 0.3, FNR = 0.4
  const auto id = tvb::label_dependent_identities(cm, 0.0, 0.0);
  EXPECT_NEAR(*id.metrics.fpr, 0.3, 1e-15);
  EXPECT_NEAR(*id.metrics.fnr, 0.4, 1e-15);
  EXPECT_TRUE(id.ppv_consistent);

  const auto shifted = tvb::label_dependent_identities(cm, 0.2, 0.0);
  EXPECT_NEAR(*shifted.metrics.fnr, 0.4, 1e-15);  // FNR is noise-invariant here
  EXPECT_NEAR(shifted.fpr_raw, (0.3 - 0.2 * 0.6) / 0.8, 1e-15);
  EXPECT_NEAR(*shifted.metrics.fpr, 0.225, 1e-15);
}

TEST(LabelDependent, InconsistentPpvFlagged) {
  // PPV = 0.8, gamma = 0.5 -> raw PPV* = 1.6
  const auto cm = cm_from(50, 20, 10, 80);
  const auto out = tvb::label_dependent_identities(cm, 0.0, 0.5);
  EXPECT_NEAR(out.ppv_raw, 1.6, 1e-12);
  EXPECT_FALSE(out.ppv_consistent);
  EXPECT_DOUBLE_EQ(*out.metrics.ppv, 1.0);
  EXPECT_THROW(tvb::label_dependent_identities(cm, 1.0, 0.0), tvb::ValidationError);
  EXPECT_THROW(tvb::label_dependent_identities(cm, 0.0, 1.0), tvb::ValidationError);
}

TEST(BoundCurve, FlipRegionMatchesHandComputation) {
  // Noisy group: p = (0.25, 0.25, 0.25, 0.25), FNR = 0.5.
  // Baseline FNR = 0.45. FNR disparity sign flips once
  // p10/(p10+p11+alpha) < 0.45  <=>  alpha > 0.25/0.45 - 0.5 = 1/18.
  const auto cm_w = cm_from(25, 25, 25, 25);
  const auto cm_b = cm_from(30, 25, 18, 22);  // FNR_b = 0.45
  std::vector<double> grid;
  for (double a = 0.0; a <= 0.201; a += 0.01) grid.push_back(a);
  const auto curve = tvb::bound_curve(cm_w, cm_b, grid);
  const double flip_at = 0.25 / 0.45 - 0.5;
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_EQ(curve.flip[i][1], grid[i] > flip_at) << "alpha = " << grid[i];
  ASSERT_EQ(curve.flip_region[1].size(), 1u);
  EXPECT_NEAR(curve.flip_region[1].front().first, 0.06, 1e-12);
}

TEST(BoundCurve, IdenticalGroupsFlipPpvImmediately) {
  const auto cm = cm_from(25, 25, 25, 25);
  std::vector<double> grid = {0.0, 0.005, 0.01, 0.05};
  const auto curve = tvb::bound_curve(cm, cm, grid);
  EXPECT_FALSE(curve.flip[0][2]);  // alpha = 0: no slack anywhere
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_TRUE(curve.flip[i][2]);
  ASSERT_FALSE(curve.flip_region[2].empty());
  EXPECT_NEAR(curve.flip_region[2].front().first, 0.005, 1e-12);
}

}  // namespace
