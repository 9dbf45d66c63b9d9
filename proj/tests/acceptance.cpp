// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failing criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cyclecount/report.hpp"
#include "cyclecount/synth.hpp"
#include "oracles.hpp"

using namespace cyclecount;

namespace {

const std::string kData = CYCLECOUNT_DATA_DIR;

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

bool exactly(double a, double b) { return std::abs(a - b) <= 4 * std::numeric_limits<double>::epsilon() * std::abs(b); }

// --- 1 -----------------------------------------------------------------------
Check parameter_counts() {
  Check c;
  const int base = FourierSpec{3, 7, false}.parameter_count();
  const int ext = FourierSpec{3, 7, true}.parameter_count();
  c.expect(base == 21, fmt("baseline (3,7) parameters = %.0f, want 21", base));
  c.expect(ext == 42, fmt("extended (3,7) parameters = %.0f, want 42", ext));
  GeneratorConfig g;
  g.weeks = 2;
  g.normalize_intercept = true;
  g.groups[0].n = 2000;
  g.groups[1].n = 500;
  const auto series = simulate_counts(g, 1);
  c.expect(fit_model(series, {3, 7, false}).parameters() == 21 && fit_model(series, {3, 7, true}).parameters() == 42,
           "fitted models carry 21 and 42 coefficients");
  return c;
}

// --- 2 -----------------------------------------------------------------------
Check anova_arithmetic() {
  Check c;
  const auto r = anova_nested(ModelSummary{27483, 28748}, ModelSummary{27462, 28676});
  const double ref = oracle::chi2_upper(r.deviance_drop, 21);
  const double ref_table = oracle::chi2_upper(71.64, 21);
  c.expect(r.df_drop == 21, fmt("df drop = %.0f", static_cast<double>(r.df_drop)));
  c.expect(std::abs(r.deviance_drop - 71.64) <= 0.5, fmt("deviance drop = %.2f, reference 71.64", r.deviance_drop));
  c.expect(r.p < 0.001, fmt("p = %.3g < .001", r.p));
  c.expect(r.p / ref < 2 && ref / r.p < 2, fmt("p / oracle = %.4f (oracle %.3g)", r.p / ref, ref));
  c.expect(std::abs(ref_table - 1.8e-7) < 0.2e-7, fmt("oracle tail at 71.64 = %.3g, about 1.8e-7", ref_table));
  return c;
}

// --- 3 -----------------------------------------------------------------------
Check chi_square_reproduction() {
  Check c;
  const auto adm = chi_square_2x2(Table2x2::from_rates(std::llround(0.916 * 6025), 6025, std::llround(0.467 * 42092), 42092));
  c.expect(std::abs(adm.statistic - 4260) <= 42.6, fmt("admission chi2 = %.2f, want 4260 +/- 1%%; p = %.3g", adm.statistic, adm.p));
  const auto t = Table2x2::from_rates(2903, 3152, 2584, 2837);
  const auto gp = chi_square_2x2(t);
  c.expect(std::abs(gp.statistic - 1.6) <= 0.1, fmt("GP-hours frail chi2 = %.4f, want 1.6 +/- 0.1", gp.statistic));
  c.expect(std::abs(gp.p - 0.20) <= 0.02, fmt("GP-hours frail p = %.4f, want .20 +/- .02", gp.p));
  ChiSquareOptions yates;
  yates.continuity_correction = true;
  const auto gy = chi_square_2x2(t, yates);
  const auto alt = chi_square_2x2(Table2x2::from_rates(2902, 3152, 2585, 2837), yates);
  c.notes.push_back(fmt("info 2903/2584 with Yates: chi2 = %.4f, p = %.4f", gy.statistic, gy.p));
  c.notes.push_back(fmt("info 2902/2585 with Yates: chi2 = %.4f, p = %.4f", alt.statistic, alt.p));
  return c;
}

// --- 4 -----------------------------------------------------------------------
Check cell_tabulation() {
  Check c;
  const auto g = load_generator_config(kData + "/synth_cells.json");
  const auto visits = simulate_arrivals(g, g.seed);
  std::ostringstream csv;
  write_simulated(csv, visits);
  std::istringstream in(csv.str());
  auto cfg = load_pipeline_config(kData + "/pipeline_config.json");
  const auto parsed = parse_visits(in, cfg.schema);
  auto [clean, rep] = cleanse(parsed.records, cfg.cleanse);
  const auto scored = score_visits(clean, WeightTable::load(cfg.hfrs_table), WeightTable::load(cfg.charlson_table), cfg.cohort);
  const auto t = cohort_table(scored, cfg.gp_hours);
  c.expect(parsed.malformed.empty() && rep.removed_total() == 0, "simulated rows all parse and survive cleansing");
  c.expect(t.cells[0][0] == 20693, fmt("within / non-frail = %.0f, want 20693", static_cast<double>(t.cells[0][0])));
  c.expect(t.cells[0][1] == 3152, fmt("within / frail = %.0f, want 3152", static_cast<double>(t.cells[0][1])));
  c.expect(t.cells[1][0] == 21399, fmt("outside / non-frail = %.0f, want 21399", static_cast<double>(t.cells[1][0])));
  c.expect(t.cells[1][1] == 2837, fmt("outside / frail = %.0f, want 2837", static_cast<double>(t.cells[1][1])));
  c.expect(t.row_total(0) == 23845, fmt("within total = %.0f, want 23845", static_cast<double>(t.row_total(0))));
  c.expect(t.row_total(1) == 24272, fmt("outside total = %.0f, want 24272", static_cast<double>(t.row_total(1))));
  c.expect(t.col_total(0) == 42092, fmt("non-frail total = %.0f, want 42092", static_cast<double>(t.col_total(0))));
  c.expect(t.col_total(1) == 6025, fmt("frail total = %.0f, want 6025", static_cast<double>(t.col_total(1))));
  c.expect(t.total() == 48117, fmt("grand total = %.0f, want 48117", static_cast<double>(t.total())));
  return c;
}

// --- 5 and 8 -----------------------------------------------------------------
CoverageReport recovery() {
  const auto g = load_generator_config(kData + "/synth_reference.json");
  return recovery_experiment(g, 100);
}

Check glm_recovery(const CoverageReport& r) {
  Check c;
  c.expect(r.failed == 0, fmt("failed replicates = %.0f", static_cast<double>(r.failed)));
  c.expect(r.truth == FourierSpec{3, 7, false}, "true spec is (3, 7) without interaction");
  std::size_t worst = r.replicates;
  std::string worst_name;
  for (const auto& [name, hits] : r.coverage)
    if (hits < worst) {
      worst = hits;
      worst_name = name;
    }
  c.expect(r.coverage.size() == 21, fmt("coefficients tracked = %.0f", static_cast<double>(r.coverage.size())));
  c.expect(worst >= 90, "lowest 95% coverage = " + std::to_string(worst) + "/100 (" + worst_name + "), want >= 90");
  c.expect(r.order_recovered >= 80, fmt("order (3,7) selected in %.0f/100, want >= 80", static_cast<double>(r.order_recovered)));
  c.expect(r.dispersion_mean >= 0.95 && r.dispersion_mean <= 1.05, fmt("mean Pearson dispersion = %.4f", r.dispersion_mean));
  std::map<std::pair<int, int>, int> picks;
  for (const auto& o : r.outcomes)
    if (o.selected) ++picks[*o.selected];
  std::string s = "info selected orders:";
  for (const auto& [k, n] : picks) s += " (" + std::to_string(k.first) + "," + std::to_string(k.second) + ")x" + std::to_string(n);
  c.notes.push_back(s);
  return c;
}

Check type_one_error(const CoverageReport& r) {
  Check c;
  c.expect(!r.truth.frail_interaction, "generator has zero interaction");
  c.expect(r.anova_rejections <= 10, fmt("ANOVA rejections at .05 = %.0f/100, want <= 10", static_cast<double>(r.anova_rejections)));
  return c;
}

// --- 6 -----------------------------------------------------------------------
Check oracle_equivalence() {
  Check c;
  Rng rng(20170101);
  double worst = 0;
  bool u_ok = true;
  for (int trial = 0; trial < 300; ++trial) {
    const auto nx = 1 + rng.below(7), ny = 1 + rng.below(7);
    std::vector<double> x, y;
    for (std::uint64_t i = 0; i < nx; ++i) x.push_back(static_cast<double>(rng.below(6)));
    for (std::uint64_t i = 0; i < ny; ++i) y.push_back(static_cast<double>(rng.below(6)));
    bool constant = true;
    for (double v : x) constant = constant && v == x[0];
    for (double v : y) constant = constant && v == x[0];
    if (constant) continue;
    const auto r = mann_whitney_u(x, y);
    worst = std::max(worst, std::abs(r.p - oracle::mw_permutation_p(x, y)));
    u_ok = u_ok && r.statistic == oracle::u_pairs(x, y);
  }
  c.expect(worst <= 0.02, fmt("max |p - permutation p| over 300 samples (n <= 7) = %.3g", worst));
  c.expect(u_ok, "U equals the pair count in every sample");

  const auto km = kaplan_meier({4, 2, 7, 3, 5, 4}, {true, true, true, false, false, true});
  const std::vector<double> s{5.0 / 6, 5.0 / 6, 5.0 / 12, 5.0 / 12, 0.0};
  bool km_ok = km.times == std::vector<double>{2, 3, 4, 5, 7} && km.survival.size() == s.size();
  for (std::size_t i = 0; km_ok && i < s.size(); ++i) km_ok = exactly(km.survival[i], s[i]);
  km_ok = km_ok && exactly(km.greenwood_var[0], 25.0 / 36 / 30) &&
          exactly(km.greenwood_var[2], 25.0 / 144 * (1.0 / 30 + 2.0 / 8)) && exactly(rmst(km, 6), 2 + 10.0 / 6 + 10.0 / 12);
  c.expect(km_ok, "Kaplan-Meier six-point table matches the hand values");

  double rmst_err = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> t;
    const auto n = 2 + rng.below(400);
    for (std::uint64_t i = 0; i < n; ++i) t.push_back(1 + std::floor(rng.exponential(150)));
    const double tau = 20 + static_cast<double>(rng.below(400));
    double mean = 0;
    for (double v : t) mean += std::min(v, tau);
    mean /= static_cast<double>(t.size());
    rmst_err = std::max(rmst_err, std::abs(rmst(kaplan_meier(t, std::vector<bool>(t.size(), true)), tau) - mean));
  }
  c.expect(rmst_err <= 1e-12, fmt("max |RMST - truncated mean| without censoring = %.3g", rmst_err));
  return c;
}

// --- 7 -----------------------------------------------------------------------
Check invariants() {
  Check c;
  GeneratorConfig g;
  g.weeks = 6;
  g.normalize_intercept = true;
  g.groups[0].n = 6000;
  g.groups[1].n = 1500;
  g.coefficients = {{"a1", 0.05}, {"b1", -0.03}, {"alpha1", -0.6}, {"beta1", -0.5}, {"alpha2", -0.2}, {"beta2", 0.25}, {"xi1", 0.2}};
  const auto series = simulate_counts(g, 5);

  double worst_score = 0;
  bool nested = true;
  int converged = 0, rank_failures = 0;
  std::map<std::pair<int, int>, double> dev;
  for (int kw = 0; kw <= kMaxWeeklyHarmonics; ++kw)
    for (int kd = 0; kd <= kMaxDailyHarmonics; ++kd)
      for (bool inter : {false, true}) {
        try {
          const auto d = build_design(series, {kw, kd, inter});
          const auto m = fit_poisson(d);
          if (!m.converged) continue;
          ++converged;
          const VectorXd r = d.x.transpose() * (d.y - m.fitted);
          worst_score = std::max(worst_score, r.cwiseAbs().maxCoeff() / d.y.sum());
          if (!inter) dev[{kw, kd}] = m.deviance;
          else if (dev.count({kw, kd})) nested = nested && m.deviance <= dev[{kw, kd}] + 1e-7;
        } catch (const RankDeficientError&) {
          ++rank_failures;
        }
      }
  for (const auto& [k, d] : dev) {
    if (dev.count({k.first - 1, k.second})) nested = nested && d <= dev[{k.first - 1, k.second}] + 1e-7;
    if (dev.count({k.first, k.second - 1})) nested = nested && d <= dev[{k.first, k.second - 1}] + 1e-7;
  }
  c.expect(worst_score < 1e-6, fmt("max |X'(y - mu)| / sum y over %.0f converged fits = %.3g", converged, worst_score));
  c.expect(nested, "deviance never rises when a harmonic or the interaction is added");
  c.notes.push_back(fmt("info %.0f grid cells rank-deficient (K_d = 12 at hourly resolution)", rank_failures));

  Rng rng(77);
  bool u_identity = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng.below(80)), y(1 + rng.below(80));
    for (auto& v : x) v = static_cast<double>(rng.below(10));
    for (auto& v : y) v = static_cast<double>(rng.below(12));
    if (x.size() == 1 && y.size() == 1 && x[0] == y[0]) continue;
    try {
      const auto r = mann_whitney_u(x, y);
      u_identity = u_identity && r.statistic + r.detail("u_y") == static_cast<double>(x.size() * y.size()) &&
                   r.statistic == oracle::u_pairs(x, y);
    } catch (const DomainError&) {
    }
  }
  c.expect(u_identity, "U_x + U_y = n_x n_y and U_x equals the pair count");

  double rho_err = 0;
  for (const SlotSeries* s : {&series.non_frail, &series.frail}) {
    const auto rho = normalized_rates(*s);
    const auto w = s->slot_occurrences();
    double sum = 0;
    for (int i = 0; i < kSlotsPerWeek; ++i) sum += rho[static_cast<std::size_t>(i)] * static_cast<double>(w[static_cast<std::size_t>(i)]);
    rho_err = std::max(rho_err, std::abs(sum - 1));
  }
  c.expect(rho_err < 1e-12, fmt("|sum rho W - 1| = %.3g", rho_err));

  // Cleansing over simulated visits with injected faults.
  auto small = load_generator_config(kData + "/synth_small.json");
  auto sim = simulate_arrivals(small, 8);
  std::vector<VisitRecord> recs;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    auto v = sim[i].visit;
    switch (rng.below(10)) {
      case 0: recs.push_back(v); break;  // duplicate
      case 1: v.departure = v.arrival.plus_minutes(-static_cast<std::int64_t>(rng.below(30))); break;
      case 2: v.departure = v.arrival.plus_minutes(601 + static_cast<std::int64_t>(rng.below(300))); break;
      case 3: v.age = static_cast<int>(rng.below(18)); break;
      case 4: v.icd_codes.clear(); break;
      default: break;
    }
    recs.push_back(v);
  }
  auto [kept, rep] = cleanse(recs);
  auto [again, rep2] = cleanse(kept);
  c.expect(rep.input_count == rep.retained_count + rep.removed_total() && rep.input_count == recs.size(),
           fmt("cleanse conservation: %.0f in = %.0f kept + %.0f removed", static_cast<double>(rep.input_count),
               static_cast<double>(rep.retained_count), static_cast<double>(rep.removed_total())));
  c.expect(again == kept && rep2.removed_total() == 0, "cleanse is idempotent");

  std::ostringstream raw;
  write_simulated(raw, sim);
  auto cfg = load_pipeline_config(kData + "/pipeline_config.json");
  std::istringstream a(raw.str()), b(raw.str());
  const auto fa = render_report(run_pipeline(a, cfg), {true, true});
  const auto fb = render_report(run_pipeline(b, cfg), {true, true});
  c.expect(fa == fb, fmt("pipeline output byte-identical across runs (%.0f files)", static_cast<double>(fa.size())));
  return c;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Check()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = f();
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d: %s (%.2f s)\n", c.ok ? "PASS" : "FAIL", n, title, secs);
    for (const auto& note : c.notes) std::printf("    %s\n", note.c_str());
    std::fflush(stdout);
    failures += c.ok ? 0 : 1;
  };

  report(1, "parameter counts", parameter_counts);
  report(2, "ANOVA arithmetic", anova_arithmetic);
  report(3, "chi-square reproduction", chi_square_reproduction);
  report(4, "cohort tabulation", cell_tabulation);
  std::optional<CoverageReport> rec;
  report(5, "GLM recovery", [&] {
    rec = recovery();
    return glm_recovery(*rec);
  });
  report(6, "oracle equivalence", oracle_equivalence);
  report(7, "invariant suite", invariants);
  report(8, "type-I error", [&] {
    if (!rec) throw DomainError("recovery runs unavailable");
    return type_one_error(*rec);
  });
  return failures;
}
