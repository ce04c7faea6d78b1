#pragma once

// Per-group observed confusion cells and the rates derived from them. Cells
// are kept as exact integer counts; proportions divide by the group size only
// at the point of use, which keeps oracle comparisons bit-stable.

#include <cmath>
#include <optional>
#include <string>

#include "tvb/dataset.hpp"
#include "tvb/error.hpp"

namespace tvb {

// Cell c[y][yhat] within one group, as counts. p_ij = c_ij / n.
struct GroupConfusion {
  std::int64_t c00 = 0, c01 = 0, c10 = 0, c11 = 0;
  std::int64_t n = 0;

  double p00() const { return ratio(c00); }
  double p01() const { return ratio(c01); }
  double p10() const { return ratio(c10); }
  double p11() const { return ratio(c11); }

 private:
  double ratio(std::int64_t c) const {
    if (n <= 0) throw ValidationError("GroupConfusion: empty group");
    return static_cast<double>(c) / static_cast<double>(n);
  }
};

// Rates with explicit undefined markers; a zero denominator must surface as
// "undefined", never as a silent NaN.
struct Metrics {
  std::optional<double> fpr;
  std::optional<double> fnr;
  std::optional<double> ppv;
  std::optional<double> npv;
  double prevalence = 0.0;
};

inline GroupConfusion group_confusion(const Dataset& d, const std::string& group,
                                      std::optional<double> s_hr = std::nullopt) {
  const int g = d.group_index(group);
  if (g < 0) throw ValidationError("group not present in data: " + group);
  GroupConfusion cm;
  for (const auto& r : d.records) {
    if (r.group != g) continue;
    int yhat;
    if (r.has_y_hat()) {
      yhat = r.y_hat;
    } else if (s_hr) {
      if (!r.has_score())
        throw ValidationError("record without score cannot be thresholded");
      yhat = (r.score > *s_hr) ? 1 : 0;
    } else {
      throw ValidationError(
          "no predicted class: provide a y_hat column or a classification threshold");
    }
    ++cm.n;
    if (r.y_obs == 0)
      (yhat ? cm.c01 : cm.c00)++;
    else
      (yhat ? cm.c11 : cm.c10)++;
  }
  if (cm.n == 0) throw ValidationError("group has no records: " + group);
  return cm;
}

inline Metrics metrics(const GroupConfusion& cm) {
  Metrics m;
  const auto rate = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den <= 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.fpr = rate(cm.c01, cm.c00 + cm.c01);
  m.fnr = rate(cm.c10, cm.c10 + cm.c11);
  m.ppv = rate(cm.c11, cm.c01 + cm.c11);
  m.npv = rate(cm.c00, cm.c00 + cm.c10);
  m.prevalence = static_cast<double>(cm.c10 + cm.c11) / static_cast<double>(cm.n);
  return m;
}

}  // namespace tvb
