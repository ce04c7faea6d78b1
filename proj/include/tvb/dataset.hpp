#pragma once

// Audit data model: one scored individual per record, a group attribute, the
// observed binary outcome and an optional predicted class. Analyses treat one
// group as potentially carrying one-sided outcome noise (the "noisy" group)
// and the other as observed without bias (the "baseline" group).
//
// Datasets are immutable after construction; every operation here returns a
// new value. Audits are pairwise: restrict_to_groups() selects the two groups
// under study and enforces the pair invariants.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tvb/csv.hpp"
#include "tvb/error.hpp"

namespace tvb {

struct LabeledRecord {
  double score = std::numeric_limits<double>::quiet_NaN();
  int level = 0;       // score bin 1..K; 0 = not binned
  int group = -1;      // index into Dataset::groups
  std::int8_t y_obs = 0;
  std::int8_t y_hat = -1;  // -1 = absent
  double prob = std::numeric_limits<double>::quiet_NaN();  // optional model probability

  bool has_score() const { return !std::isnan(score); }
  bool has_level() const { return level >= 1; }
  bool has_y_hat() const { return y_hat >= 0; }
  bool has_prob() const { return !std::isnan(prob); }
};

struct Dataset {
  std::vector<LabeledRecord> records;
  std::vector<std::string> groups;  // distinct labels in first-seen order
  int noisy = -1;                   // index into groups; -1 = unresolved
  int baseline = -1;

  std::vector<std::string> feature_names;
  std::vector<double> features;  // row-major, records.size() x feature_names.size()

  std::size_t size() const { return records.size(); }

  int group_index(const std::string& name) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == name) return static_cast<int>(i);
    return -1;
  }

  bool pair_resolved() const { return noisy >= 0 && baseline >= 0; }

  const std::string& noisy_name() const {
    if (noisy < 0) throw ValidationError("noisy group not resolved");
    return groups[noisy];
  }
  const std::string& baseline_name() const {
    if (baseline < 0) throw ValidationError("baseline group not resolved");
    return groups[baseline];
  }

  const double* feature_row(std::size_t i) const {
    return features.data() + i * feature_names.size();
  }

  std::size_t group_count(int g) const {
    std::size_t n = 0;
    for (const auto& r : records) n += (r.group == g);
    return n;
  }
};

// Column mapping for load_csv. score/group/label are mandatory; the rest map
// only when non-empty. With auto_optional set, the canonical optional columns
// (score_level, y_hat, prob) are picked up when present in the header.
struct ColMap {
  std::string score = "score";
  std::string group = "group";
  std::string label = "y_obs";
  std::string pred;
  std::string level;
  std::string prob;
  std::vector<std::string> features;
  bool auto_optional = false;
  bool allow_single_group = false;  // generated single-population data

  static ColMap canonical() {
    ColMap m;
    m.pred = "y_hat";
    m.level = "score_level";
    m.auto_optional = true;
    return m;
  }
};

namespace detail {

inline long require_column(const CsvTable& t, const std::string& name, const char* role) {
  const long c = t.column(name);
  if (c < 0)
    throw ValidationError(std::string("missing column '") + name + "' (" + role + ")");
  return c;
}

inline long optional_column(const CsvTable& t, const std::string& name, bool auto_mode,
                            const char* fallback, const char* role) {
  if (!name.empty()) return require_column(t, name, role);
  if (auto_mode) return t.column(fallback);
  return -1;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const ColMap& colmap = ColMap::canonical()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  const CsvTable t = parse_csv(in);
  if (t.header.empty() || t.rows.empty()) throw ValidationError("empty dataset: " + path);

  const long c_score = detail::require_column(t, colmap.score, "score");
  const long c_group = detail::require_column(t, colmap.group, "group");
  const long c_label = detail::require_column(t, colmap.label, "label");
  const long c_pred =
      detail::optional_column(t, colmap.pred, colmap.auto_optional, "y_hat", "prediction");
  const long c_level =
      detail::optional_column(t, colmap.level, colmap.auto_optional, "score_level", "score level");
  const long c_prob =
      detail::optional_column(t, colmap.prob, colmap.auto_optional, "prob", "probability");
  std::vector<long> c_feat;
  for (const auto& f : colmap.features) c_feat.push_back(detail::require_column(t, f, "feature"));

  Dataset d;
  d.feature_names = colmap.features;
  std::map<std::string, int> group_ids;

  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long line = t.row_lines[i];
    auto cell = [&](long c) -> const std::string& {
      static const std::string empty;
      return (c >= 0 && c < static_cast<long>(row.size())) ? row[c] : empty;
    };
    auto fail = [&](const std::string& msg) {
      throw ValidationError(msg + " (line " + std::to_string(line) + ")");
    };

    LabeledRecord rec;

    const std::string& sv = cell(c_score);
    const std::string& lv = cell(c_level);
    if (sv.empty() && lv.empty()) fail("missing score");
    if (!sv.empty() && !parse_double(sv, rec.score)) fail("unparseable score '" + sv + "'");
    if (!sv.empty() && !std::isfinite(rec.score)) fail("non-finite score");
    if (!lv.empty()) {
      long long k;
      if (!parse_long(lv, k) || k < 1) fail("unparseable score level '" + lv + "'");
      rec.level = static_cast<int>(k);
    }

    const std::string& gv = cell(c_group);
    if (gv.empty()) fail("missing group");
    auto it = group_ids.find(gv);
    if (it == group_ids.end()) {
      it = group_ids.emplace(gv, static_cast<int>(d.groups.size())).first;
      d.groups.push_back(gv);
    }
    rec.group = it->second;

    const std::string& yv = cell(c_label);
    if (yv.empty()) fail("missing label");
    if (yv == "0") rec.y_obs = 0;
    else if (yv == "1") rec.y_obs = 1;
    else fail("unparseable label '" + yv + "', expected 0 or 1");

    const std::string& pv = cell(c_pred);
    if (!pv.empty()) {
      if (pv == "0") rec.y_hat = 0;
      else if (pv == "1") rec.y_hat = 1;
      else fail("unparseable prediction '" + pv + "', expected 0 or 1");
    }

    const std::string& qv = cell(c_prob);
    if (!qv.empty()) {
      if (!parse_double(qv, rec.prob) || rec.prob < 0.0 || rec.prob > 1.0)
        fail("unparseable probability '" + qv + "'");
    }

    for (long c : c_feat) {
      const std::string& fv = cell(c);
      double x;
      if (!parse_double(fv, x)) fail("unparseable feature '" + fv + "'");
      d.features.push_back(x);
    }

    d.records.push_back(rec);
  }

  if (d.groups.size() < 2 && !colmap.allow_single_group)
    throw ValidationError("group column has fewer than 2 distinct values");
  return d;
}

// Canonical serialization: score,score_level,group,y_obs,y_hat (+prob when present).
inline void write_csv(const Dataset& d, std::ostream& out) {
  bool any_prob = false;
  for (const auto& r : d.records) any_prob |= r.has_prob();
  std::vector<std::string> header = {"score", "score_level", "group", "y_obs", "y_hat"};
  if (any_prob) header.push_back("prob");
  write_csv_row(out, header);
  for (const auto& r : d.records) {
    std::vector<std::string> row;
    row.push_back(r.has_score() ? double_to_string(r.score) : "");
    row.push_back(r.has_level() ? std::to_string(r.level) : "");
    row.push_back(d.groups[r.group]);
    row.push_back(std::to_string(static_cast<int>(r.y_obs)));
    row.push_back(r.has_y_hat() ? std::to_string(static_cast<int>(r.y_hat)) : "");
    if (any_prob) row.push_back(r.has_prob() ? double_to_string(r.prob) : "");
    write_csv_row(out, row);
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  write_csv(d, out);
}

// Default audit pair when the data has exactly two groups: the
// lexicographically later one is treated as noisy.
inline std::pair<std::string, std::string> default_group_pair(const Dataset& d) {
  if (d.groups.size() != 2)
    throw ValidationError(
        "cannot infer audit pair: data has " + std::to_string(d.groups.size()) +
        " groups; pass the noisy and baseline groups explicitly");
  std::string a = d.groups[0], b = d.groups[1];
  if (a < b) std::swap(a, b);
  return {a, b};  // {noisy, baseline}
}

// Keep only the two groups under audit and pin their roles. Enforces the pair
// invariants: distinct groups, both present, both outcome values in each.
inline Dataset restrict_to_groups(const Dataset& d, const std::string& noisy,
                                  const std::string& baseline) {
  if (noisy == baseline) throw ValidationError("noisy and baseline group must differ");
  const int gn = d.group_index(noisy);
  const int gb = d.group_index(baseline);
  if (gn < 0) throw ValidationError("group not present in data: " + noisy);
  if (gb < 0) throw ValidationError("group not present in data: " + baseline);

  Dataset out;
  out.groups = {noisy, baseline};
  out.noisy = 0;
  out.baseline = 1;
  out.feature_names = d.feature_names;
  const std::size_t p = d.feature_names.size();
  bool seen[2][2] = {{false, false}, {false, false}};
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    if (r.group != gn && r.group != gb) continue;
    LabeledRecord rec = r;
    rec.group = (r.group == gn) ? 0 : 1;
    seen[rec.group][rec.y_obs] = true;
    out.records.push_back(rec);
    if (p) out.features.insert(out.features.end(), d.feature_row(i), d.feature_row(i) + p);
  }
  for (int g = 0; g < 2; ++g)
    for (int y = 0; y < 2; ++y)
      if (!seen[g][y])
        throw ValidationError("group '" + out.groups[g] + "' has no records with y_obs=" +
                              std::to_string(y));
  return out;
}

// Assign score levels 1..K by pooled empirical quantiles (equal-count bins,
// ties split by stable input order). Data that already carries levels, or
// whose scores are integer levels 1..K, passes through unchanged.
inline Dataset bin_scores(const Dataset& d, int K) {
  if (K < 2) throw ValidationError("bin_scores: K must be >= 2");

  bool all_leveled = !d.records.empty();
  for (const auto& r : d.records) all_leveled &= r.has_level();
  if (all_leveled) return d;

  std::set<double> distinct;
  for (const auto& r : d.records) {
    if (!r.has_score()) throw ValidationError("bin_scores: record without numeric score");
    distinct.insert(r.score);
  }
  if (static_cast<int>(distinct.size()) < K)
    throw ValidationError("insufficient distinct scores: " + std::to_string(distinct.size()) +
                          " < K = " + std::to_string(K));

  Dataset out = d;

  bool integral_levels = true;
  for (const auto& r : d.records) {
    const double s = r.score;
    integral_levels &= (s == std::floor(s) && s >= 1.0 && s <= static_cast<double>(K));
  }
  if (integral_levels) {
    for (auto& r : out.records) r.level = static_cast<int>(r.score);
    return out;
  }

  const std::size_t n = d.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return d.records[a].score < d.records[b].score;
  });
  for (std::size_t pos = 0; pos < n; ++pos) {
    const int level = static_cast<int>((pos * static_cast<std::size_t>(K)) / n) + 1;
    out.records[order[pos]].level = level;
  }
  return out;
}

// Per-score-level 2x2 outcome-by-group counts; the noisy group fills the "w"
// slots, the baseline group the "b" slots.
struct ScoreBinTable {
  struct LevelCounts {
    std::int64_t w0 = 0, w1 = 0, b0 = 0, b1 = 0;
    std::int64_t total() const { return w0 + w1 + b0 + b1; }
  };
  int K = 0;
  std::vector<LevelCounts> counts;  // index k-1

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto& c : counts) s += c.total();
    return s;
  }
};

inline ScoreBinTable to_bin_table(const Dataset& d) {
  if (!d.pair_resolved())
    throw ValidationError("to_bin_table: audit pair not resolved (restrict_to_groups first)");
  int K = 0;
  for (const auto& r : d.records) {
    if (r.group != d.noisy && r.group != d.baseline) continue;
    if (!r.has_level()) throw ValidationError("to_bin_table: record without score level");
    K = std::max(K, r.level);
  }
  ScoreBinTable t;
  t.K = K;
  t.counts.assign(static_cast<std::size_t>(K), {});
  for (const auto& r : d.records) {
    if (r.group != d.noisy && r.group != d.baseline) continue;
    auto& c = t.counts[static_cast<std::size_t>(r.level - 1)];
    if (r.group == d.noisy)
      (r.y_obs ? c.w1 : c.w0)++;
    else
      (r.y_obs ? c.b1 : c.b0)++;
  }
  return t;
}

// k = ceil(n * alpha) with a small slack so that exact products do not round
// up through floating-point noise.
inline std::int64_t hidden_count(std::size_t n, double alpha) {
  if (alpha < 0.0) throw ValidationError("alpha must be nonnegative");
  return static_cast<std::int64_t>(std::ceil(static_cast<double>(n) * alpha - 1e-9));
}

}  // namespace tvb
