// tvb_audit: sensitivity analysis of fairness metrics under one-sided,
// group-differential label noise. Thin adapter over the library: every number
// printed or serialized here comes out of a library call.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tvb/auc.hpp"
#include "tvb/bounds.hpp"
#include "tvb/chisq.hpp"
#include "tvb/confusion.hpp"
#include "tvb/dataset.hpp"
#include "tvb/logistic.hpp"
#include "tvb/noise.hpp"
#include "tvb/report.hpp"
#include "tvb/sim.hpp"

namespace {

struct GlobalOpts {
  std::string out = "out";
  std::string format = "json";
  std::string noisy, baseline;
  unsigned jobs = 1;
  std::uint64_t seed = 1;
  std::string stamp;

  std::string score_col = "score";
  std::string group_col = "group";
  std::string label_col = "y_obs";
  std::string pred_col;
  std::string level_col;
};

tvb::ColMap make_colmap(const GlobalOpts& g) {
  tvb::ColMap m;
  m.score = g.score_col;
  m.group = g.group_col;
  m.label = g.label_col;
  m.pred = g.pred_col;
  m.level = g.level_col;
  m.auto_optional = true;
  return m;
}

tvb::Dataset load_and_restrict(const std::string& input, const GlobalOpts& g,
                               tvb::ColMap colmap) {
  tvb::Dataset d = tvb::load_csv(input, colmap);
  std::string noisy = g.noisy, baseline = g.baseline;
  if (noisy.empty() != baseline.empty())
    throw tvb::ValidationError("--noisy-group and --baseline-group must be given together");
  if (noisy.empty()) {
    const auto pair = tvb::default_group_pair(d);
    noisy = pair.first;
    baseline = pair.second;
  }
  return tvb::restrict_to_groups(d, noisy, baseline);
}

tvb::AuditReport base_report(const std::string& command, const GlobalOpts& g,
                             const std::string& input) {
  tvb::AuditReport rep;
  rep.set_metadata("command", command);
  if (!input.empty()) {
    rep.set_metadata("input", input);
    rep.set_metadata("input_fnv1a", tvb::fnv1a_hex(input));
  }
  rep.set_metadata("seed", g.seed);
  if (!g.stamp.empty()) rep.set_metadata("generated_at", g.stamp);
  return rep;
}

int finish(tvb::AuditReport& rep, const GlobalOpts& g) {
  const auto format = g.format == "csv" ? tvb::RenderFormat::kCsvBundle : tvb::RenderFormat::kJson;
  for (const auto& path : tvb::render(rep, format, g.out))
    std::cout << "wrote " << path << "\n";
  return 0;
}

std::vector<double> make_grid(double max, double step) {
  if (!(step > 0.0)) throw tvb::ValidationError("--alpha-step must be positive");
  if (max < 0.0) throw tvb::ValidationError("--alpha-max must be nonnegative");
  std::vector<double> grid;
  for (double a = 0.0; a <= max + 1e-12; a += step) grid.push_back(a);
  return grid;
}

std::vector<double> parse_alpha_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    double v;
    if (!tvb::parse_double(tok, v)) throw tvb::ValidationError("bad alpha value: " + tok);
    out.push_back(v);
  }
  if (out.empty()) throw tvb::ValidationError("empty alpha list");
  return out;
}

// "lo:hi:step" or a comma list.
std::vector<double> parse_alpha_grid(const std::string& s) {
  if (s.find(':') == std::string::npos) return parse_alpha_list(s);
  std::stringstream ss(s);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
    throw tvb::ValidationError("bad alpha grid, expected lo:hi:step");
  double lo, hi, step;
  if (!tvb::parse_double(a, lo) || !tvb::parse_double(b, hi) || !tvb::parse_double(c, step) ||
      step <= 0.0)
    throw tvb::ValidationError("bad alpha grid, expected lo:hi:step");
  std::vector<double> out;
  for (double v = lo; v <= hi + 1e-12; v += step) out.push_back(v);
  return out;
}

std::string fmt(double x) { return tvb::double_to_string_10sig(x); }

// ---------------------------------------------------------------------------

int run_rates(const std::string& input, const GlobalOpts& g, double alpha_max, double alpha_step,
              std::optional<double> threshold, std::optional<double> alpha0,
              std::optional<double> alpha1) {
  const tvb::Dataset d = load_and_restrict(input, g, make_colmap(g));
  const auto cm_noisy = tvb::group_confusion(d, d.noisy_name(), threshold);
  const auto cm_base = tvb::group_confusion(d, d.baseline_name(), threshold);

  std::vector<double> grid = make_grid(alpha_max, alpha_step);
  const double feasible_max = cm_noisy.p00() + cm_noisy.p01();
  std::size_t kept = 0;
  while (kept < grid.size() && grid[kept] < feasible_max - 1e-12) ++kept;
  const bool clipped = kept < grid.size();
  grid.resize(kept);
  const auto curve = tvb::bound_curve(cm_noisy, cm_base, grid);

  const auto tri = tvb::trichotomy(cm_noisy);
  const auto mw = tvb::metrics(cm_noisy);
  const auto mb = tvb::metrics(cm_base);

  tvb::AuditReport rep = base_report("audit rates", g, input);
  tvb::Json sec;
  sec["noisy_group"] = d.noisy_name();
  sec["baseline_group"] = d.baseline_name();
  const auto metrics_json = [](const tvb::Metrics& m) {
    tvb::Json j;
    j["fpr"] = m.fpr ? tvb::jnum(*m.fpr) : tvb::Json(nullptr);
    j["fnr"] = m.fnr ? tvb::jnum(*m.fnr) : tvb::Json(nullptr);
    j["ppv"] = m.ppv ? tvb::jnum(*m.ppv) : tvb::Json(nullptr);
    j["npv"] = m.npv ? tvb::jnum(*m.npv) : tvb::Json(nullptr);
    j["prevalence"] = tvb::jnum(m.prevalence);
    return j;
  };
  sec["observed_noisy"] = metrics_json(mw);
  sec["observed_baseline"] = metrics_json(mb);
  switch (tri) {
    case tvb::Trichotomy::kExcludesFnrUpFprDown:
      sec["trichotomy"] = "excludes {FNR <= FNR* and FPR >= FPR*}";
      break;
    case tvb::Trichotomy::kExcludesFnrDownFprUp:
      sec["trichotomy"] = "excludes {FNR >= FNR* and FPR <= FPR*}";
      break;
    default:
      sec["trichotomy"] = "boundary";
  }
  // Ratio thresholds from the direction conditions: the FPR condition needs
  // alpha1/alpha0 <= FPR/(1-FPR), the FNR condition alpha1/alpha0 >= (1-FNR)/FNR.
  if (mw.fpr && *mw.fpr < 1.0)
    sec["fpr_cond_max_ratio"] = tvb::jnum(*mw.fpr / (1.0 - *mw.fpr));
  if (mw.fnr && *mw.fnr > 0.0)
    sec["fnr_cond_min_ratio"] = tvb::jnum((1.0 - *mw.fnr) / *mw.fnr);
  if (alpha0 && alpha1) {
    const auto dc = tvb::direction_conditions(cm_noisy, tvb::NoiseSpec::split(*alpha0, *alpha1));
    tvb::Json j;
    j["alpha0"] = tvb::jnum(*alpha0);
    j["alpha1"] = tvb::jnum(*alpha1);
    j["fpr_cond"] = dc.fpr_cond;
    j["fnr_cond"] = dc.fnr_cond;
    j["odds_ratio_fpr"] = tvb::jnum(dc.odds_ratio_fpr);
    j["odds_ratio_fnr"] = tvb::jnum(dc.odds_ratio_fnr);
    sec["direction_conditions"] = j;
  }
  if (clipped) sec["grid_clipped_at"] = tvb::jnum(feasible_max);
  for (int m = 0; m < 3; ++m) {
    tvb::Json regions = tvb::Json::array();
    for (const auto& [lo, hi] : curve.flip_region[m])
      regions.push_back({tvb::jnum(lo), tvb::jnum(hi)});
    sec[std::string("flip_region_") + tvb::metric_name(static_cast<tvb::MetricKind>(m))] = regions;
  }
  rep.set_section("rate_bounds", sec);

  tvb::PlotTable table;
  table.name = "rate_bounds";
  table.header = {"alpha", "metric", "lower", "upper", "reference", "flip"};
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    for (int m = 0; m < 3; ++m) {
      const auto kind = static_cast<tvb::MetricKind>(m);
      const auto& bd = curve.bounds[i].by_kind(kind);
      table.rows.push_back({fmt(curve.alphas[i]), tvb::metric_name(kind), fmt(bd.lower),
                            fmt(bd.upper), fmt(curve.reference[m]),
                            curve.flip[i][m] ? "1" : "0"});
    }
  }
  rep.add_table(std::move(table));

  std::cout << "trichotomy: " << sec["trichotomy"].get<std::string>() << "\n";
  return finish(rep, g);
}

int run_auc(const std::string& input, const GlobalOpts& g, const std::string& alpha_list) {
  const tvb::Dataset d = load_and_restrict(input, g, make_colmap(g));
  const std::vector<double> alphas = parse_alpha_list(alpha_list);

  const auto scores_labels = [&](int group) {
    std::pair<std::vector<double>, std::vector<int>> out;
    for (const auto& r : d.records) {
      if (r.group != group) continue;
      if (!r.has_score()) throw tvb::ValidationError("record without score");
      out.first.push_back(r.score);
      out.second.push_back(r.y_obs);
    }
    return out;
  };
  const auto [sw, yw] = scores_labels(d.noisy);
  const auto [sb, yb] = scores_labels(d.baseline);

  tvb::AuditReport rep = base_report("audit auc", g, input);
  tvb::Json sec;
  sec["noisy_group"] = d.noisy_name();
  sec["baseline_group"] = d.baseline_name();
  sec["observed_auc_noisy"] = tvb::jnum(tvb::observed_auc(sw, yw));
  sec["observed_auc_baseline"] = tvb::jnum(tvb::observed_auc(sb, yb));

  tvb::PlotTable table;
  table.name = "auc_bounds";
  table.header = {"alpha", "k", "lower", "upper"};
  tvb::Json rows = tvb::Json::array();
  for (double a : alphas) {
    const std::int64_t k = tvb::hidden_count(sw.size(), a);
    const auto b = tvb::auc_bounds(sw, yw, k);
    tvb::Json j;
    j["alpha"] = tvb::jnum(a);
    j["k"] = k;
    j["lower"] = tvb::jnum(b.lower);
    j["upper"] = tvb::jnum(b.upper);
    rows.push_back(j);
    table.rows.push_back({fmt(a), std::to_string(k), fmt(b.lower), fmt(b.upper)});
    std::cout << "alpha = " << fmt(a) << ": AUC* in [" << fmt(b.lower) << ", " << fmt(b.upper)
              << "]\n";
  }
  sec["bounds"] = rows;
  rep.set_section("auc", sec);
  rep.add_table(std::move(table));
  return finish(rep, g);
}

int run_calib_logistic(const std::string& input, const GlobalOpts& g, double alpha_max,
                       double alpha_step, double level, int random_reps) {
  const tvb::Dataset d = load_and_restrict(input, g, make_colmap(g));
  const std::vector<double> grid = make_grid(alpha_max, alpha_step);

  const tvb::LogisticFit observed = tvb::fit_calibration(d);
  const auto env = tvb::coefficient_envelope(d, grid, level, g.jobs);

  tvb::AuditReport rep = base_report("audit calib-logistic", g, input);
  tvb::Json sec;
  sec["level"] = tvb::jnum(level);
  sec["observed"] = {{"beta", {tvb::jnum(observed.beta[0]), tvb::jnum(observed.beta[1]),
                               tvb::jnum(observed.beta[2])}},
                     {"se_beta_A", tvb::jnum(observed.se[2])},
                     {"wald_z", tvb::jnum(observed.wald_z)},
                     {"p_value", tvb::jnum(observed.p_value)},
                     {"condition3", tvb::jnum(observed.condition3)}};

  double first_mixed = -1.0, first_miscal = -1.0;
  int failures = 0;
  for (const auto& row : env.rows) {
    if (row.fit_failed) {
      ++failures;
      continue;
    }
    if (row.verdict != tvb::CalibVerdict::kCalibratedAll && first_mixed < 0.0)
      first_mixed = row.alpha;
    if (row.verdict == tvb::CalibVerdict::kMiscalibratedAll && first_miscal < 0.0)
      first_miscal = row.alpha;
  }
  sec["smallest_alpha_not_calibrated_all"] = first_mixed < 0 ? tvb::Json(nullptr)
                                                             : tvb::jnum(first_mixed);
  sec["smallest_alpha_miscalibrated_all"] = first_miscal < 0 ? tvb::Json(nullptr)
                                                             : tvb::jnum(first_miscal);
  sec["grid_points_failed"] = failures;
  rep.set_section("logistic", sec);

  tvb::PlotTable table;
  table.name = "logistic_envelope";
  table.header = {"alpha",  "beta_A_low", "beta_A_high", "beta_S_low",    "beta_S_high",
                  "p_low",  "p_high",     "verdict",     "condition3_ok"};
  for (const auto& row : env.rows) {
    if (row.fit_failed) {
      table.rows.push_back({fmt(row.alpha), "", "", "", "", "", "", "fit_failed", ""});
      continue;
    }
    table.rows.push_back({fmt(row.alpha), fmt(row.beta_a_low), fmt(row.beta_a_high),
                          fmt(row.beta_s_low), fmt(row.beta_s_high), fmt(row.pvalue_low_alloc),
                          fmt(row.pvalue_high_alloc), tvb::verdict_name(row.verdict),
                          row.condition3_ok ? "1" : "0"});
  }
  rep.add_table(std::move(table));

  if (random_reps > 0) {
    tvb::PlotTable rt;
    rt.name = "logistic_random_baseline";
    rt.header = {"alpha", "rep", "beta_S", "beta_A", "p_value"};
    for (double a : grid) {
      const auto draws = tvb::random_mechanism_baseline(d, a, random_reps, g.seed, g.jobs);
      for (std::size_t r = 0; r < draws.size(); ++r) {
        if (draws[r].failed) continue;
        rt.rows.push_back({fmt(a), std::to_string(r), fmt(draws[r].beta_s),
                           fmt(draws[r].beta_a), fmt(draws[r].p_value)});
      }
    }
    rep.add_table(std::move(rt));
  }

  std::cout << "observed beta_A p-value = " << fmt(observed.p_value) << "\n";
  if (first_miscal >= 0)
    std::cout << "smallest alpha with miscalibrated_all = " << fmt(first_miscal) << "\n";
  if (first_mixed >= 0)
    std::cout << "smallest alpha leaving calibrated_all = " << fmt(first_mixed) << "\n";
  return finish(rep, g);
}

int run_calib_chisq(const std::string& input, const GlobalOpts& g, const std::string& direction,
                    double level, std::optional<double> eps, std::optional<std::int64_t> budget,
                    int bins) {
  tvb::Dataset d = load_and_restrict(input, g, make_colmap(g));
  bool has_levels = !d.records.empty();
  for (const auto& r : d.records) has_levels &= r.has_level();
  if (!has_levels) d = tvb::bin_scores(d, bins);
  const tvb::ScoreBinTable tbl = tvb::to_bin_table(d);

  const tvb::ChiSqResult observed = tvb::chisq_statistic(tbl);
  const bool breaking = direction == "break";
  if (!breaking && direction != "achieve")
    throw tvb::ValidationError("--direction must be 'break' or 'achieve'");

  tvb::AuditReport rep = base_report("audit calib-chisq", g, input);
  tvb::Json sec;
  sec["direction"] = direction;
  sec["level"] = tvb::jnum(level);
  sec["constraint"] = {{"eps", eps ? tvb::jnum(*eps) : tvb::Json(nullptr)}};
  sec["observed"] = {{"T", tvb::jnum(observed.T)},
                     {"df", observed.df},
                     {"p_value", tvb::jnum(observed.p_value)}};

  std::vector<std::int64_t> h;
  tvb::ChiSqResult stat;
  if (budget) {
    const auto opt = breaking ? tvb::maximize_T_greedy(tbl, *budget, eps)
                              : tvb::minimize_T(tbl, *budget, eps);
    h = opt.h;
    stat = opt.stat;
    sec["N_h"] = *budget;
    std::cout << "N_h = " << *budget << ": T = " << fmt(stat.T)
              << ", p = " << fmt(stat.p_value) << "\n";
  } else {
    const auto res = tvb::minimal_budget(
        tbl, breaking ? tvb::BudgetDirection::kBreakCalibration
                      : tvb::BudgetDirection::kAchieveCalibration,
        level, eps);
    h = res.h;
    stat = res.stat;
    sec["reachable"] = res.reachable;
    sec["N_h"] = res.budget;
    sec["critical_value"] = tvb::jnum(res.critical_value);
    if (res.reachable)
      std::cout << "minimal N_h = " << res.budget << ": T = " << fmt(stat.T)
                << ", p = " << fmt(stat.p_value) << "\n";
    else
      std::cout << "target unreachable; extreme T = " << fmt(stat.T) << " at N_h = " << res.budget
                << "\n";
  }
  sec["T"] = tvb::jnum(stat.T);
  sec["df"] = stat.df;
  sec["p_value"] = tvb::jnum(stat.p_value);
  sec["h"] = h;
  tvb::Json warn = tvb::Json::array();
  for (const auto& w : stat.warnings) warn.push_back(w);
  if (!warn.empty()) sec["warnings"] = warn;
  rep.set_section("chisq", sec);

  {
    std::ostringstream hs;
    for (std::size_t k = 0; k < h.size(); ++k) hs << (k ? "," : "") << h[k];
    std::cout << "h = (" << hs.str() << ")\n";
  }

  tvb::PlotTable table;
  table.name = "chisq_rates";
  table.header = {"level",      "group",        "n",          "y1",          "rate",
                  "ci_lo",      "ci_hi",        "y1_shifted", "rate_shifted", "ci_shifted_lo",
                  "ci_shifted_hi"};
  for (int k = 0; k < tbl.K; ++k) {
    const auto& c = tbl.counts[static_cast<std::size_t>(k)];
    const auto add_row = [&](const std::string& grp, std::int64_t n, std::int64_t y1,
                             std::int64_t y1s) {
      if (n == 0) {
        table.rows.push_back({std::to_string(k + 1), grp, "0", "0", "", "", "", "0", "", "", ""});
        return;
      }
      const auto ci = tvb::binomial_ci(y1, n);
      const auto cis = tvb::binomial_ci(y1s, n);
      table.rows.push_back({std::to_string(k + 1), grp, std::to_string(n), std::to_string(y1),
                            fmt(double(y1) / double(n)), fmt(ci.lo), fmt(ci.hi),
                            std::to_string(y1s), fmt(double(y1s) / double(n)), fmt(cis.lo),
                            fmt(cis.hi)});
    };
    add_row(d.noisy_name(), c.w0 + c.w1, c.w1, c.w1 + h[static_cast<std::size_t>(k)]);
    add_row(d.baseline_name(), c.b0 + c.b1, c.b1, c.b1);
  }
  rep.add_table(std::move(table));
  return finish(rep, g);
}

int run_estimate_noise(const std::string& input, const GlobalOpts& g, const std::string& prob_col,
                       const std::string& estimator, double q) {
  tvb::ColMap colmap = make_colmap(g);
  colmap.prob = prob_col;
  tvb::Dataset d = tvb::load_csv(input, colmap);
  if (!g.noisy.empty() && !g.baseline.empty()) d = tvb::restrict_to_groups(d, g.noisy, g.baseline);

  tvb::NoiseEstimator est;
  if (estimator == "strong") est = tvb::NoiseEstimator::kStrongSep;
  else if (estimator == "weak") est = tvb::NoiseEstimator::kWeakSepSup;
  else throw tvb::ValidationError("--estimator must be 'strong' or 'weak'");

  const auto estimates = tvb::estimate_per_group(d, {}, est, q);

  tvb::AuditReport rep = base_report("estimate-noise", g, input);
  tvb::Json rows = tvb::Json::array();
  for (const auto& [group, e] : estimates) {
    tvb::Json j;
    j["group"] = group;
    j["estimator"] = estimator;
    j["gamma"] = tvb::jnum(e.gamma);
    j["rho"] = tvb::jnum(e.rho);
    j["q"] = tvb::jnum(e.quantile_used);
    rows.push_back(j);
    std::cout << group << ": gamma = " << fmt(e.gamma) << ", rho = " << fmt(e.rho) << "\n";
  }
  tvb::Json sec;
  sec["estimates"] = rows;
  rep.set_section("noise", sec);
  return finish(rep, g);
}

int run_simulate_example2(const GlobalOpts& g, long long n, const std::string& family, double b,
                          double rate) {
  tvb::CatchModel model;
  if (family == "inc") model.family = tvb::CatchFamily::kInc;
  else if (family == "dec") model.family = tvb::CatchFamily::kDec;
  else if (family == "const") model.family = tvb::CatchFamily::kConstant;
  else throw tvb::ValidationError("--family must be inc, dec or const");
  model.b = b;
  model.rate = rate;

  const auto res = tvb::simulate_example2(static_cast<std::size_t>(n), model, g.seed);

  tvb::AuditReport rep = base_report("simulate example2", g, "");
  tvb::Json sec;
  sec["n"] = n;
  sec["family"] = family;
  sec["b"] = tvb::jnum(b);
  sec["hidden_count"] = res.hidden_count;
  sec["frac_high_risk_hidden"] = tvb::jnum(res.frac_high_risk_hidden);
  sec["threshold"] = tvb::jnum(res.threshold);
  rep.set_section("sim", sec);

  // Canonical CSV plus the simulation-only y_true column.
  tvb::PlotTable table;
  table.name = "example2";
  table.header = {"score", "score_level", "group", "y_obs", "y_hat", "y_true"};
  for (std::size_t i = 0; i < res.data.size(); ++i) {
    const auto& r = res.data.records[i];
    table.rows.push_back({tvb::double_to_string(r.score), "", "all",
                          std::to_string(int(r.y_obs)), std::to_string(int(r.y_hat)),
                          std::to_string(int(res.y_true[i]))});
  }
  rep.add_table(std::move(table));

  std::cout << "hidden = " << res.hidden_count
            << ", frac_high_risk_hidden = " << fmt(res.frac_high_risk_hidden) << "\n";
  // The dataset is always wanted here; emit tables regardless of --format.
  GlobalOpts g2 = g;
  g2.format = "csv";
  return finish(rep, g2);
}

int run_simulate_smdi(const std::string& input, const GlobalOpts& g, const std::string& grid_expr,
                      int reps, const std::string& features, bool include_group,
                      std::optional<double> t0) {
  tvb::ColMap colmap = make_colmap(g);
  std::stringstream ss(features);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) colmap.features.push_back(tok);
  }
  if (colmap.features.empty()) throw tvb::ValidationError("--features must name columns");
  const tvb::Dataset d = load_and_restrict(input, g, colmap);

  tvb::SmdiExperimentConfig cfg;
  cfg.alpha_grid = parse_alpha_grid(grid_expr);
  cfg.reps = reps;
  cfg.include_group = include_group;
  cfg.t0 = t0;
  cfg.seed = g.seed;
  cfg.jobs = g.jobs;
  const auto rows = tvb::smdi_retrain_experiment(d, cfg);

  tvb::AuditReport rep = base_report("simulate smdi", g, input);
  tvb::PlotTable table;
  table.name = "smdi";
  table.header = {"alpha", "rep", "d_plus", "d_minus"};
  int failures = 0;
  for (const auto& r : rows) {
    if (r.failed) {
      ++failures;
      continue;
    }
    table.rows.push_back({fmt(r.alpha), std::to_string(r.rep), fmt(r.d_plus), fmt(r.d_minus)});
  }
  rep.add_table(std::move(table));

  tvb::Json sec;
  sec["reps"] = reps;
  sec["failures"] = failures;
  sec["include_group"] = include_group;
  tvb::Json means = tvb::Json::array();
  for (double a : cfg.alpha_grid) {
    double sp = 0.0, sm = 0.0;
    int cnt = 0;
    for (const auto& r : rows) {
      if (r.failed || r.alpha != a) continue;
      sp += r.d_plus;
      sm += r.d_minus;
      ++cnt;
    }
    if (cnt == 0) continue;
    means.push_back({{"alpha", tvb::jnum(a)},
                     {"mean_d_plus", tvb::jnum(sp / cnt)},
                     {"mean_d_minus", tvb::jnum(sm / cnt)}});
  }
  sec["summary"] = means;
  rep.set_section("smdi", sec);

  GlobalOpts g2 = g;
  g2.format = "csv";
  return finish(rep, g2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis of fairness metrics under one-sided label noise"};
  app.set_config("--config", "", "Flat key=value file mirroring the flags; flags win");

  GlobalOpts g;
  if (const char* env_seed = std::getenv("TVB_AUDIT_SEED")) {
    long long s;
    if (tvb::parse_long(env_seed, s)) g.seed = static_cast<std::uint64_t>(s);
  }
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--format", g.format, "Report format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  app.add_option("--noisy-group", g.noisy, "Group assumed to carry the label noise");
  app.add_option("--baseline-group", g.baseline, "Group assumed observed without bias");
  app.add_option("--jobs", g.jobs, "Max concurrent grid evaluations")->capture_default_str();
  app.add_option("--seed", g.seed, "Random seed (fallback: TVB_AUDIT_SEED)");
  app.add_option("--stamp", g.stamp, "Timestamp string for the report (omitted by default)");
  app.add_option("--score-col", g.score_col, "Score column")->capture_default_str();
  app.add_option("--group-col", g.group_col, "Group column")->capture_default_str();
  app.add_option("--label-col", g.label_col, "Observed outcome column")->capture_default_str();
  app.add_option("--pred-col", g.pred_col, "Predicted class column (optional)");
  app.add_option("--level-col", g.level_col, "Score level column (optional)");

  // audit
  auto* audit = app.add_subcommand("audit", "Sensitivity analyses on observed audit data");
  audit->require_subcommand(1);

  std::string in_rates;
  double rates_max = 0.2, rates_step = 0.005;
  std::optional<double> rates_threshold, rates_a0, rates_a1;
  auto* rates = audit->add_subcommand("rates", "Error-rate and PPV bounds over an alpha grid");
  rates->add_option("--input", in_rates, "Input CSV")->required();
  rates->add_option("--alpha-max", rates_max)->capture_default_str();
  rates->add_option("--alpha-step", rates_step)->capture_default_str();
  rates->add_option("--threshold", rates_threshold,
                    "Classification threshold s_HR when no y_hat column exists");
  rates->add_option("--alpha0", rates_a0, "Evaluate direction conditions at this alpha0");
  rates->add_option("--alpha1", rates_a1, "Evaluate direction conditions at this alpha1");

  std::string in_auc, auc_alphas = "0.05";
  auto* auc = audit->add_subcommand("auc", "Bounds on the true AUC");
  auc->add_option("--input", in_auc, "Input CSV")->required();
  auc->add_option("--alpha", auc_alphas, "Comma-separated alpha values")->capture_default_str();

  std::string in_cl;
  double cl_max = 0.16, cl_step = 0.005, cl_level = 0.05;
  int cl_reps = 0;
  auto* clog = audit->add_subcommand("calib-logistic",
                                     "Logistic calibration test envelope over alpha");
  clog->add_option("--input", in_cl, "Input CSV")->required();
  clog->add_option("--alpha-max", cl_max)->capture_default_str();
  clog->add_option("--alpha-step", cl_step)->capture_default_str();
  clog->add_option("--level", cl_level, "Significance level")->capture_default_str();
  clog->add_option("--random-reps", cl_reps, "Random-mechanism refits per grid point");

  std::string in_cc, cc_direction;
  double cc_level = 0.05;
  std::optional<double> cc_eps;
  std::optional<std::int64_t> cc_budget;
  int cc_bins = 10;
  auto* cchi = audit->add_subcommand("calib-chisq",
                                     "Chi-squared conditional-independence sensitivity");
  cchi->add_option("--input", in_cc, "Input CSV")->required();
  cchi->add_option("--direction", cc_direction, "break or achieve")->required();
  cchi->add_option("--level", cc_level, "Significance level")->capture_default_str();
  cchi->add_option("--eps", cc_eps, "Proportionality bound h_k <= floor(eps * n_w1)");
  cchi->add_option("--budget", cc_budget, "Fixed budget N_h instead of the minimal search");
  cchi->add_option("--bins", cc_bins, "Score levels when the data is not yet binned")
      ->capture_default_str();

  // estimate-noise
  std::string in_noise, noise_prob_col = "prob", noise_est = "weak";
  double noise_q = 0.99;
  auto* enoise = app.add_subcommand("estimate-noise", "Per-group noise-rate estimates");
  enoise->add_option("--input", in_noise, "Input CSV")->required();
  enoise->add_option("--prob-col", noise_prob_col, "Predicted probability column")
      ->capture_default_str();
  enoise->add_option("--estimator", noise_est, "strong or weak")->capture_default_str();
  enoise->add_option("--q", noise_q, "Quantile for the weak-separability estimator")
      ->capture_default_str();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Synthetic data and experiments");
  simulate->require_subcommand(1);

  long long ex2_n = 100000;
  std::string ex2_family = "inc";
  double ex2_b = 1.0, ex2_rate = 0.0;
  auto* ex2 = simulate->add_subcommand("example2", "Feature-dependent catch-probability draw");
  ex2->add_option("--n", ex2_n)->capture_default_str();
  ex2->add_option("--family", ex2_family, "inc, dec or const")->capture_default_str();
  ex2->add_option("--b", ex2_b, "Shape parameter")->capture_default_str();
  ex2->add_option("--rate", ex2_rate, "Constant-family noise rate")->capture_default_str();

  std::string in_smdi, smdi_grid = "0.01:0.12:0.01", smdi_features;
  int smdi_reps = 1000;
  bool smdi_no_group = false;
  std::optional<double> smdi_t0;
  auto* smdi = simulate->add_subcommand("smdi", "Random-flip retraining experiment");
  smdi->add_option("--input", in_smdi, "Input CSV")->required();
  smdi->add_option("--alpha-grid", smdi_grid, "lo:hi:step or comma list")->capture_default_str();
  smdi->add_option("--reps", smdi_reps)->capture_default_str();
  smdi->add_option("--features", smdi_features, "Comma-separated feature columns")->required();
  smdi->add_flag("--no-group-feature", smdi_no_group, "Exclude the group indicator from the model");
  smdi->add_option("--t0", smdi_t0, "SMDI threshold floor (default: equalizing threshold)");

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (rates->parsed()) return run_rates(in_rates, g, rates_max, rates_step, rates_threshold,
                                          rates_a0, rates_a1);
    if (auc->parsed()) return run_auc(in_auc, g, auc_alphas);
    if (clog->parsed()) return run_calib_logistic(in_cl, g, cl_max, cl_step, cl_level, cl_reps);
    if (cchi->parsed())
      return run_calib_chisq(in_cc, g, cc_direction, cc_level, cc_eps, cc_budget, cc_bins);
    if (enoise->parsed()) return run_estimate_noise(in_noise, g, noise_prob_col, noise_est,
                                                    noise_q);
    if (ex2->parsed()) return run_simulate_example2(g, ex2_n, ex2_family, ex2_b, ex2_rate);
    if (smdi->parsed())
      return run_simulate_smdi(in_smdi, g, smdi_grid, smdi_reps, smdi_features, !smdi_no_group,
                               smdi_t0);
  } catch (const tvb::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const tvb::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
