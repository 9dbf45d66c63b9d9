#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecount/cohort.hpp"
#include "cyclecount/complexity_stats.hpp"
#include "cyclecount/harmonic_glm.hpp"
#include "cyclecount/ingest.hpp"
#include "cyclecount/timeseries.hpp"

#ifndef CYCLECOUNT_DATA_DIR
#define CYCLECOUNT_DATA_DIR "data"
#endif

namespace cyclecount {

inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Complexity comparisons over scored visits

enum class Comparison { cohort, gp_hours };

enum class Subset { all, frail, non_frail };

struct ComplexityOptions {
  Comparison by = Comparison::cohort;
  std::vector<std::string> measures{"admitted", "triage", "charlson", "los"};
  double tau = 600.0;
  // Restricts the gp_hours comparison; cohort comparisons always use all visits.
  Subset gp_subset = Subset::frail;
  GpHoursConfig gp_hours;
};

struct LabelledTest {
  std::string measure;
  std::string comparison;  // "<group a> vs <group b>"
  TestResult result;
};

inline Subset parse_subset(std::string_view s) {
  if (s == "all") return Subset::all;
  if (s == "frail") return Subset::frail;
  if (s == "non-frail" || s == "non_frail") return Subset::non_frail;
  throw DomainError("unknown subset '" + std::string(s) + "'");
}

inline Comparison parse_comparison(std::string_view s) {
  if (s == "cohort") return Comparison::cohort;
  if (s == "gp_hours") return Comparison::gp_hours;
  throw DomainError("unknown comparison '" + std::string(s) + "' (expected cohort or gp_hours)");
}

// Splits visits into (a, b): frail vs non-frail, or within vs outside GP hours.
inline std::pair<std::vector<const ScoredVisit*>, std::vector<const ScoredVisit*>> split_groups(
    const std::vector<ScoredVisit>& visits, const ComplexityOptions& opt) {
  std::vector<const ScoredVisit*> a, b;
  for (const auto& v : visits) {
    if (opt.by == Comparison::cohort) {
      (v.label.frail ? a : b).push_back(&v);
    } else {
      if (opt.gp_subset == Subset::frail && !v.label.frail) continue;
      if (opt.gp_subset == Subset::non_frail && v.label.frail) continue;
      (gp_hours_flag(v.visit.arrival, opt.gp_hours) ? a : b).push_back(&v);
    }
  }
  return {std::move(a), std::move(b)};
}

inline std::vector<LabelledTest> compare_complexity(const std::vector<ScoredVisit>& visits,
                                                    const ComplexityOptions& opt = {}) {
  const auto [a, b] = split_groups(visits, opt);
  std::string label = opt.by == Comparison::cohort ? "frail vs non-frail" : "within vs outside GP hours";
  if (opt.by == Comparison::gp_hours && opt.gp_subset != Subset::all)
    label += opt.gp_subset == Subset::frail ? " (frail)" : " (non-frail)";
  if (a.empty() || b.empty()) throw DomainError("complexity comparison '" + label + "' has an empty group");

  auto values = [](const std::vector<const ScoredVisit*>& g, auto f) {
    std::vector<double> v;
    v.reserve(g.size());
    for (const auto* s : g) v.push_back(f(*s));
    return v;
  };
  std::vector<LabelledTest> out;
  for (const auto& m : opt.measures) {
    TestResult r;
    if (m == "admitted") {
      std::int64_t ea = 0, eb = 0;
      for (const auto* s : a) ea += s->visit.admitted;
      for (const auto* s : b) eb += s->visit.admitted;
      r = chi_square_2x2(Table2x2::from_rates(ea, static_cast<std::int64_t>(a.size()), eb, static_cast<std::int64_t>(b.size())));
    } else if (m == "triage") {
      r = mann_whitney_u(values(a, [](const ScoredVisit& s) { return double(s.visit.triage); }),
                         values(b, [](const ScoredVisit& s) { return double(s.visit.triage); }));
    } else if (m == "charlson") {
      r = mann_whitney_u(values(a, [](const ScoredVisit& s) { return double(s.label.charlson); }),
                         values(b, [](const ScoredVisit& s) { return double(s.label.charlson); }));
    } else if (m == "los") {
      auto la = SurvivalSample::complete(values(a, [](const ScoredVisit& s) { return double(s.visit.los_minutes()); }));
      auto lb = SurvivalSample::complete(values(b, [](const ScoredVisit& s) { return double(s.visit.los_minutes()); }));
      const double max_a = *std::max_element(la.times.begin(), la.times.end());
      const double max_b = *std::max_element(lb.times.begin(), lb.times.end());
      const double tau = std::min({opt.tau, max_a, max_b});
      r = rmst_diff(la, lb, tau);
      r.details.emplace_back("tau_requested", opt.tau);
    } else {
      throw DomainError("unknown measure '" + m + "'");
    }
    out.push_back({m, label, std::move(r)});
  }
  return out;
}

inline nlohmann::json to_json(const LabelledTest& t) {
  auto j = to_json(t.result);
  j["measure"] = t.measure;
  j["comparison"] = t.comparison;
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline configuration

struct PipelineConfig {
  Schema schema;
  CleanseConfig cleanse;
  CohortConfig cohort;
  std::string hfrs_table = std::string(CYCLECOUNT_DATA_DIR) + "/hfrs_weights.json";
  std::string charlson_table = std::string(CYCLECOUNT_DATA_DIR) + "/charlson_weights.json";
  GpHoursConfig gp_hours;
  std::optional<StudyPeriod> study_period;
  bool select_orders = true;
  SearchSpace search;
  FourierSpec fixed_orders{3, 7, false};  // used when select_orders is false
  std::optional<Group> baseline_group;
  FitControls fit;
  double tau = 600.0;
  Subset gp_subset = Subset::frail;
  double los_bin_minutes = 30.0;
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  PipelineConfig c;
  auto rel = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
  };
  if (j.contains("input")) {
    const auto& in = j.at("input");
    const auto d = in.value("delimiter", std::string{","});
    if (d.size() != 1) throw DomainError("input.delimiter must be one character");
    c.schema.delimiter = d[0];
    if (in.contains("columns")) {
      const auto& cols = in.at("columns");
      c.schema.visit_id = cols.value("visit_id", c.schema.visit_id);
      c.schema.arrival = cols.value("arrival", c.schema.arrival);
      c.schema.departure = cols.value("departure", c.schema.departure);
      c.schema.age = cols.value("age", c.schema.age);
      c.schema.icd_admission = cols.value("icd_admission", c.schema.icd_admission);
      c.schema.icd_discharge = cols.value("icd_discharge", c.schema.icd_discharge);
      c.schema.mts = cols.value("mts", c.schema.mts);
      c.schema.admitted = cols.value("admitted", c.schema.admitted);
    }
  }
  if (j.contains("cleanse")) {
    const auto& s = j.at("cleanse");
    c.cleanse.los_cap_minutes = s.value("los_cap_minutes", c.cleanse.los_cap_minutes);
    c.cleanse.min_age = s.value("min_age", c.cleanse.min_age);
    if (s.contains("rule_order")) c.cleanse.rule_order = s.at("rule_order").get<std::vector<std::string>>();
  }
  if (j.contains("cohort")) {
    const auto& s = j.at("cohort");
    c.cohort.frail_age_min = s.value("frail_age_min", c.cohort.frail_age_min);
    c.cohort.hfrs_threshold = s.value("hfrs_threshold", c.cohort.hfrs_threshold);
    if (s.contains("hfrs_table")) c.hfrs_table = rel(s.at("hfrs_table").get<std::string>());
    if (s.contains("charlson_table")) c.charlson_table = rel(s.at("charlson_table").get<std::string>());
  }
  if (j.contains("gp_hours")) {
    const auto& s = j.at("gp_hours");
    if (s.contains("days")) {
      c.gp_hours.days.fill(false);
      for (int d : s.at("days").get<std::vector<int>>()) {
        if (d < 0 || d > 6) throw DomainError("gp_hours.days entries must be 0 (Monday) .. 6 (Sunday)");
        c.gp_hours.days[static_cast<std::size_t>(d)] = true;
      }
    }
    c.gp_hours.start_hour = s.value("start_hour", c.gp_hours.start_hour);
    c.gp_hours.end_hour = s.value("end_hour", c.gp_hours.end_hour);
  }
  if (j.contains("study_period")) {
    const auto& s = j.at("study_period");
    auto start = parse_timestamp(s.at("start").get<std::string>());
    auto end = parse_timestamp(s.at("end").get<std::string>());
    if (!start || !end) throw DomainError("study_period start/end must be ISO-8601 timestamps");
    const Timestamp a = start->floor_hour();
    const Timestamp b{((end->minutes + 59) / 60) * 60};
    if (b <= a) throw DomainError("study_period end must be after start");
    c.study_period = StudyPeriod{a, (b.minutes - a.minutes) / 60};
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    c.select_orders = s.value("select_orders", c.select_orders);
    c.search.weekly_min = s.value("K_w_min", c.search.weekly_min);
    c.search.weekly_max = s.value("K_w_max", c.search.weekly_max);
    c.search.daily_min = s.value("K_d_min", c.search.daily_min);
    c.search.daily_max = s.value("K_d_max", c.search.daily_max);
    c.fixed_orders.weekly = s.value("K_w", c.fixed_orders.weekly);
    c.fixed_orders.daily = s.value("K_d", c.fixed_orders.daily);
    if (s.contains("baseline_group")) c.baseline_group = parse_group(s.at("baseline_group").get<std::string>());
    c.fit.tolerance = s.value("tolerance", c.fit.tolerance);
    c.fit.max_iterations = s.value("max_iterations", c.fit.max_iterations);
  }
  if (j.contains("complexity")) {
    const auto& s = j.at("complexity");
    c.tau = s.value("tau", c.tau);
    if (s.contains("gp_subset")) c.gp_subset = parse_subset(s.at("gp_subset").get<std::string>());
    c.los_bin_minutes = s.value("los_bin_minutes", c.los_bin_minutes);
  }
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("config " + path + ": " + e.what());
  }
  return pipeline_config_from_json(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  std::vector<int> days;
  for (int d = 0; d < 7; ++d)
    if (c.gp_hours.days[static_cast<std::size_t>(d)]) days.push_back(d);
  nlohmann::json j{
      {"cleanse", {{"los_cap_minutes", c.cleanse.los_cap_minutes}, {"min_age", c.cleanse.min_age}, {"rule_order", c.cleanse.rule_order}}},
      {"cohort", {{"frail_age_min", c.cohort.frail_age_min}, {"hfrs_threshold", c.cohort.hfrs_threshold},
                  {"hfrs_table", std::filesystem::path(c.hfrs_table).filename().string()},
                  {"charlson_table", std::filesystem::path(c.charlson_table).filename().string()}}},
      {"gp_hours", {{"days", days}, {"start_hour", c.gp_hours.start_hour}, {"end_hour", c.gp_hours.end_hour}}},
      {"model", {{"select_orders", c.select_orders},
                 {"K_w_min", c.search.weekly_min}, {"K_w_max", c.search.weekly_max},
                 {"K_d_min", c.search.daily_min}, {"K_d_max", c.search.daily_max},
                 {"K_w", c.fixed_orders.weekly}, {"K_d", c.fixed_orders.daily},
                 {"tolerance", c.fit.tolerance}, {"max_iterations", c.fit.max_iterations}}},
      {"complexity", {{"tau", c.tau}, {"gp_subset", c.gp_subset == Subset::all ? "all" : c.gp_subset == Subset::frail ? "frail" : "non-frail"},
                      {"los_bin_minutes", c.los_bin_minutes}}}};
  if (c.baseline_group) j["model"]["baseline_group"] = group_name(*c.baseline_group);
  return j;
}

// ---------------------------------------------------------------------------
// Run report

struct Histogram {
  std::string measure;
  Group group = Group::non_frail;
  std::vector<std::pair<double, double>> bins;  // [lo, hi)
  std::vector<std::int64_t> counts;
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  std::int64_t n = 0;
};

struct RunReport {
  PipelineConfig config;
  std::size_t input_rows = 0;
  std::vector<MalformedRow> malformed;
  CleanseReport cleanse;
  StudyPeriod period;
  CohortTable cohort_counts;
  std::optional<OrderSelection> selection;
  FittedModel baseline;
  FittedModel extended;
  std::optional<FittedModel> baseline_group_model;
  AnovaResult anova;
  std::array<double, 2> extended_group_dispersion{};
  std::vector<LabelledTest> by_cohort;
  std::vector<LabelledTest> by_gp_hours;
  std::array<std::array<double, kSlotsPerWeek>, 2> observed_rates{};
  std::array<std::array<double, kSlotsPerWeek>, 2> fitted_rates{};
  std::array<std::int64_t, kSlotsPerWeek> slot_occurrences{};
  std::vector<Histogram> histograms;
  // Median LOS by hour of arrival: [group][hour], NaN when no visits.
  std::array<std::array<double, 24>, 2> los_median_by_hour{};
};

inline Histogram make_histogram(std::string measure, Group g, const std::vector<double>& values,
                                const std::vector<std::pair<double, double>>& bins) {
  Histogram h;
  h.measure = std::move(measure);
  h.group = g;
  h.bins = bins;
  h.counts.assign(bins.size(), 0);
  h.n = static_cast<std::int64_t>(values.size());
  for (double v : values)
    for (std::size_t b = 0; b < bins.size(); ++b)
      if (v >= bins[b].first && (v < bins[b].second || (b + 1 == bins.size() && v <= bins[b].second))) {
        ++h.counts[b];
        break;
      }
  if (!values.empty()) {
    h.median = quantile(values, 0.5);
    h.q1 = quantile(values, 0.25);
    h.q3 = quantile(values, 0.75);
  }
  return h;
}

namespace report_detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace report_detail

// parse → cleanse → score → bin → select orders → fit baseline → fit extended
// → anova → dispersion → complexity tests → plot data.
inline RunReport run_pipeline(std::istream& input, const PipelineConfig& cfg) {
  using report_detail::stage;
  RunReport rep;
  rep.config = cfg;

  const auto parsed = stage("parse", [&] { return parse_visits(input, cfg.schema); });
  rep.input_rows = parsed.records.size() + parsed.malformed.size();
  rep.malformed = parsed.malformed;

  auto [clean, creport] = stage("cleanse", [&] { return cleanse(parsed.records, cfg.cleanse); });
  rep.cleanse = creport;

  const auto scored = stage("score", [&] {
    const auto hfrs = WeightTable::load(cfg.hfrs_table);
    const auto charlson = WeightTable::load(cfg.charlson_table);
    return score_visits(clean, hfrs, charlson, cfg.cohort);
  });

  const auto series = stage("bin", [&] {
    if (scored.empty()) throw DomainError("no visits left after cleansing; nothing to bin");
    rep.period = cfg.study_period ? *cfg.study_period : StudyPeriod::covering(scored);
    return bin_hourly(scored, rep.period);
  });
  rep.cohort_counts = cohort_table(scored, cfg.gp_hours);

  FourierSpec spec = cfg.fixed_orders;
  spec.frail_interaction = false;
  if (cfg.select_orders) {
    rep.selection = stage("select_orders", [&] { return select_orders(series, cfg.search, {}, cfg.fit); });
    spec.weekly = rep.selection->weekly;
    spec.daily = rep.selection->daily;
  }

  rep.baseline = stage("fit_baseline", [&] { return fit_model(series, spec, {}, cfg.fit); });
  if (cfg.baseline_group)
    rep.baseline_group_model = stage("fit_baseline", [&] { return fit_model(series, spec, {cfg.baseline_group}, cfg.fit); });
  rep.extended = stage("fit_extended", [&] {
    return fit_model(series, {spec.weekly, spec.daily, true}, {}, cfg.fit);
  });
  rep.anova = stage("anova", [&] { return anova_nested(rep.baseline, rep.extended); });
  stage("dispersion", [&] {
    const auto design = build_design(series, rep.extended.spec);
    rep.extended_group_dispersion = {group_dispersion(rep.extended, design, Group::non_frail),
                                     group_dispersion(rep.extended, design, Group::frail)};
    (void)dispersion(rep.baseline);
    return 0;
  });

  stage("complexity", [&] {
    ComplexityOptions opt;
    opt.tau = cfg.tau;
    opt.gp_hours = cfg.gp_hours;
    opt.gp_subset = cfg.gp_subset;
    opt.by = Comparison::cohort;
    rep.by_cohort = compare_complexity(scored, opt);
    opt.by = Comparison::gp_hours;
    rep.by_gp_hours = compare_complexity(scored, opt);
    return 0;
  });

  stage("plot_data", [&] {
    rep.slot_occurrences = series.non_frail.slot_occurrences();
    rep.observed_rates = {normalized_rates(series.non_frail), normalized_rates(series.frail)};
    rep.fitted_rates = {predict_rates(rep.extended, Group::non_frail), predict_rates(rep.extended, Group::frail)};

    std::vector<std::pair<double, double>> los_bins, triage_bins, charlson_bins;
    for (double lo = 0; lo < static_cast<double>(cfg.cleanse.los_cap_minutes); lo += cfg.los_bin_minutes)
      los_bins.emplace_back(lo, std::min(lo + cfg.los_bin_minutes, static_cast<double>(cfg.cleanse.los_cap_minutes)));
    for (int t = 1; t <= 5; ++t) triage_bins.emplace_back(t, t + 1);
    int max_charlson = 0;
    for (const auto& s : scored) max_charlson = std::max(max_charlson, s.label.charlson);
    for (int c = 0; c <= max_charlson; ++c) charlson_bins.emplace_back(c, c + 1);

    for (Group g : {Group::non_frail, Group::frail}) {
      std::vector<double> los, triage, charlson;
      std::array<std::vector<double>, 24> los_hour;
      for (const auto& s : scored) {
        if (s.label.frail != (g == Group::frail)) continue;
        los.push_back(static_cast<double>(s.visit.los_minutes()));
        triage.push_back(s.visit.triage);
        charlson.push_back(s.label.charlson);
        los_hour[static_cast<std::size_t>(s.visit.arrival.hour_of_day())].push_back(static_cast<double>(s.visit.los_minutes()));
      }
      rep.histograms.push_back(make_histogram("los", g, los, los_bins));
      rep.histograms.push_back(make_histogram("triage", g, triage, triage_bins));
      rep.histograms.push_back(make_histogram("charlson", g, charlson, charlson_bins));
      for (int h = 0; h < 24; ++h)
        rep.los_median_by_hour[static_cast<int>(g)][static_cast<std::size_t>(h)] =
            los_hour[static_cast<std::size_t>(h)].empty() ? std::nan("") : median(los_hour[static_cast<std::size_t>(h)]);
    }
    return 0;
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Emission

namespace report_detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json table_rows(const RunReport& r) {
  using nlohmann::json;
  json tables = json::object();

  json cohort = json::array();
  const char* windows[2] = {"within", "outside"};
  for (int w = 0; w < 2; ++w)
    cohort.push_back({{"window", windows[w]}, {"non_frail", r.cohort_counts.cells[w][0]},
                      {"frail", r.cohort_counts.cells[w][1]}, {"total", r.cohort_counts.row_total(w)}});
  cohort.push_back({{"window", "total"}, {"non_frail", r.cohort_counts.col_total(0)}, {"frail", r.cohort_counts.col_total(1)},
                    {"total", r.cohort_counts.total()}});
  tables["cohort_table"] = std::move(cohort);

  json cleanse = json::array();
  for (const auto& rule : r.cleanse.rule_order) cleanse.push_back({{"rule", rule}, {"removed", r.cleanse.removed_by_rule.at(rule)}});
  tables["cleanse"] = std::move(cleanse);

  json coefs = json::array();
  auto add_model = [&](const char* label, const FittedModel& m) {
    const double z975 = dist::normal_quantile(0.975);
    for (int j = 0; j < m.parameters(); ++j) {
      const double est = m.coefficients(j), se = m.standard_error(j);
      coefs.push_back({{"model", label}, {"name", m.names[static_cast<std::size_t>(j)]}, {"estimate", est}, {"se", se},
                       {"z", est / se}, {"p", dist::normal_two_sided_p(est / se)},
                       {"ci_lo", est - z975 * se}, {"ci_hi", est + z975 * se}});
    }
  };
  add_model("baseline", r.baseline);
  add_model("extended", r.extended);
  if (r.baseline_group_model) add_model("baseline_group", *r.baseline_group_model);
  tables["coefficients"] = std::move(coefs);

  if (r.selection) {
    json trace = json::array();
    for (const auto& e : r.selection->trace)
      trace.push_back({{"K_w", e.weekly}, {"K_d", e.daily}, {"ok", e.ok}, {"aic", e.ok ? json(e.aic) : json(nullptr)},
                       {"deviance", e.ok ? json(e.deviance) : json(nullptr)}, {"parameters", e.ok ? json(e.parameters) : json(nullptr)},
                       {"error", e.ok ? json(nullptr) : json(e.error)}});
    tables["order_trace"] = std::move(trace);
  }

  json tests = json::array();
  auto add_tests = [&](const char* section, const std::vector<LabelledTest>& v) {
    for (const auto& t : v) {
      const auto& res = t.result;
      tests.push_back({{"section", section}, {"measure", t.measure}, {"comparison", t.comparison}, {"test", test_name(res.test)},
                       {"statistic", res.statistic}, {"df", res.df ? json(*res.df) : json(nullptr)}, {"p", res.p},
                       {"effect", res.effect ? json(*res.effect) : json(nullptr)},
                       {"ci_lo", res.ci95 ? json(res.ci95->first) : json(nullptr)},
                       {"ci_hi", res.ci95 ? json(res.ci95->second) : json(nullptr)}});
    }
  };
  add_tests("by_cohort", r.by_cohort);
  add_tests("by_gp_hours", r.by_gp_hours);
  tables["tests"] = std::move(tests);

  json rates = json::array();
  for (int s = 0; s < kSlotsPerWeek; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const auto slot = WeekSlot::from_index(s);
    rates.push_back({{"slot", s}, {"day", slot.day}, {"hour", slot.hour}, {"occurrences", r.slot_occurrences[i]},
                     {"observed_non_frail", r.observed_rates[0][i]}, {"observed_frail", r.observed_rates[1][i]},
                     {"fitted_non_frail", r.fitted_rates[0][i]}, {"fitted_frail", r.fitted_rates[1][i]}});
  }
  tables["rates"] = std::move(rates);

  json hist = json::array();
  for (const auto& h : r.histograms)
    for (std::size_t b = 0; b < h.bins.size(); ++b)
      hist.push_back({{"measure", h.measure}, {"group", group_name(h.group)}, {"bin_lo", h.bins[b].first}, {"bin_hi", h.bins[b].second},
                      {"count", h.counts[b]},
                      {"rel_freq", h.n ? static_cast<double>(h.counts[b]) / static_cast<double>(h.n) : 0.0}});
  tables["histograms"] = std::move(hist);

  json by_hour = json::array();
  for (int h = 0; h < 24; ++h)
    by_hour.push_back({{"hour", h}, {"median_los_non_frail", number_or_null(r.los_median_by_hour[0][static_cast<std::size_t>(h)])},
                       {"median_los_frail", number_or_null(r.los_median_by_hour[1][static_cast<std::size_t>(h)])}});
  tables["los_by_hour"] = std::move(by_hour);
  return tables;
}

}  // namespace report_detail

inline nlohmann::json to_json(const RunReport& r) {
  using nlohmann::json;
  json malformed = json::array();
  for (const auto& m : r.malformed) malformed.push_back({{"line", m.line}, {"field", m.field}, {"reason", m.reason}});
  json tests_cohort = json::array(), tests_gp = json::array();
  for (const auto& t : r.by_cohort) tests_cohort.push_back(to_json(t));
  for (const auto& t : r.by_gp_hours) tests_gp.push_back(to_json(t));
  json hist = json::array();
  for (const auto& h : r.histograms)
    hist.push_back({{"measure", h.measure}, {"group", group_name(h.group)}, {"n", h.n}, {"median", h.median}, {"q1", h.q1},
                    {"q3", h.q3}, {"iqr", h.q3 - h.q1}, {"counts", h.counts}});

  json j;
  j["schema_version"] = kSchemaVersion;
  j["metadata"] = {{"tool", "cyclecount"}, {"version", kToolVersion}};
  j["config"] = to_json(r.config);
  j["input"] = {{"rows", r.input_rows}, {"malformed", std::move(malformed)}};
  j["cleanse"] = {{"input_count", r.cleanse.input_count},
                  {"retained_count", r.cleanse.retained_count},
                  {"removed_by_rule", r.cleanse.removed_by_rule},
                  {"rule_order", r.cleanse.rule_order},
                  {"note", "rule order is fixed: dedupe, then LOS, age and diagnosis; each removal is attributed to the first failing rule"}};
  j["study_period"] = {{"start", format_timestamp(r.period.start)}, {"hours", r.period.hours},
                       {"timestamps", "local wall-clock, no DST adjustment"}};
  j["order_selection"] = r.selection ? to_json(*r.selection) : json(nullptr);
  j["models"] = {{"baseline", to_json(r.baseline)}, {"extended", to_json(r.extended)}};
  if (r.baseline_group_model) j["models"]["baseline_group"] = to_json(*r.baseline_group_model);
  j["anova"] = to_json(r.anova);
  j["dispersion"] = {{"baseline", dispersion(r.baseline)},
                     {"extended", dispersion(r.extended)},
                     {"extended_by_group", {{"non-frail", r.extended_group_dispersion[0]}, {"frail", r.extended_group_dispersion[1]}}}};
  j["complexity"] = {{"by_cohort", std::move(tests_cohort)}, {"by_gp_hours", std::move(tests_gp)}};
  j["plot_data"] = {{"histograms", std::move(hist)}};
  j["tables"] = report_detail::table_rows(r);
  return j;
}

// Flat JSON rows -> CSV. Columns follow the first row's key order (nlohmann
// sorts keys, so the order is stable).
inline std::string table_to_csv(const nlohmann::json& rows) {
  std::ostringstream out;
  if (rows.empty()) return "";
  std::vector<std::string> cols;
  for (auto it = rows.front().begin(); it != rows.front().end(); ++it) cols.push_back(it.key());
  csv::write_row(out, cols);
  for (const auto& row : rows) {
    std::vector<std::string> f;
    for (const auto& c : cols) {
      const auto& v = row.at(c);
      if (v.is_null()) f.emplace_back();
      else if (v.is_string()) f.push_back(v.get<std::string>());
      else if (v.is_boolean()) f.push_back(v.get<bool>() ? "true" : "false");
      else if (v.is_number_integer()) f.push_back(std::to_string(v.get<std::int64_t>()));
      else {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        f.emplace_back(buf);
      }
    }
    csv::write_row(out, f);
  }
  return out.str();
}

// CSV -> flat JSON rows. Empty cells become null, integers and reals are
// parsed back to numbers, true/false to booleans.
inline nlohmann::json table_from_csv(std::istream& in) {
  const auto t = csv::read(in);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      const std::string v = i < r.fields.size() ? r.fields[i] : "";
      if (v.empty()) {
        row[t.header[i]] = nullptr;
        continue;
      }
      if (v == "true" || v == "false") {
        row[t.header[i]] = v == "true";
        continue;
      }
      std::int64_t iv;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), iv);
      if (ec == std::errc{} && p == v.data() + v.size()) {
        row[t.header[i]] = iv;
        continue;
      }
      char* end = nullptr;
      const double dv = std::strtod(v.c_str(), &end);
      if (end == v.c_str() + v.size()) row[t.header[i]] = dv;
      else row[t.header[i]] = v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// SVG

namespace svg_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<double> y;
  bool dashed = false;
  std::string color;
};

inline std::string line_chart(const std::string& title, const std::vector<Series>& series) {
  const double w = 900, h = 360, pad = 40;
  double ymax = 0;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) ymax = std::max(ymax, v);
  }
  if (ymax <= 0) ymax = 1;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<text x=\"" << pad << "\" y=\"20\">" << title << "</text>\n";
  o << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n";
  for (const auto& s : series) {
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\"" << (s.dashed ? " stroke-dasharray=\"4 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double x = pad + (w - 2 * pad) * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
      const double y = h - pad - (h - 2 * pad) * s.y[i] / ymax;
      o << fmt(x) << ',' << fmt(y) << ' ';
    }
    o << "\"><title>" << s.label << "</title></polyline>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string bar_chart(const std::string& title, const Histogram& a, const Histogram& b) {
  const double w = 600, h = 300, pad = 40;
  const std::size_t n = a.counts.size();
  double ymax = 0;
  auto rel = [](const Histogram& hh, std::size_t i) { return hh.n ? static_cast<double>(hh.counts[i]) / static_cast<double>(hh.n) : 0.0; };
  for (std::size_t i = 0; i < n; ++i) ymax = std::max({ymax, rel(a, i), rel(b, i)});
  if (ymax <= 0) ymax = 1;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<text x=\"" << pad << "\" y=\"20\">" << title << " (m=" << fmt(a.median) << "/" << fmt(b.median)
    << ", IQR=" << fmt(a.q3 - a.q1) << "/" << fmt(b.q3 - b.q1) << ")</text>\n";
  const double bw = (w - 2 * pad) / static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) {
    const Histogram* hs[2] = {&a, &b};
    for (int k = 0; k < 2; ++k) {
      const double v = rel(*hs[k], i);
      const double bh = (h - 2 * pad) * v / ymax;
      o << "<rect x=\"" << fmt(pad + bw * static_cast<double>(i) + k * bw / 2) << "\" y=\"" << fmt(h - pad - bh) << "\" width=\""
        << fmt(bw / 2) << "\" height=\"" << fmt(bh) << "\" fill=\"" << (k ? "grey" : "black") << "\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace svg_detail

struct EmitOptions {
  bool csv = true;
  bool svg = false;
};

// All file contents are rendered in memory first; nothing is written if
// rendering fails.
inline std::map<std::string, std::string> render_report(const RunReport& r, const EmitOptions& opt = {}) {
  std::map<std::string, std::string> files;
  const auto j = to_json(r);
  files["report.json"] = j.dump(2) + "\n";
  if (opt.csv)
    for (auto it = j.at("tables").begin(); it != j.at("tables").end(); ++it)
      files[it.key() + ".csv"] = table_to_csv(it.value());
  if (opt.svg) {
    using svg_detail::Series;
    std::vector<double> obs0(r.observed_rates[0].begin(), r.observed_rates[0].end());
    std::vector<double> obs1(r.observed_rates[1].begin(), r.observed_rates[1].end());
    std::vector<double> fit0(r.fitted_rates[0].begin(), r.fitted_rates[0].end());
    std::vector<double> fit1(r.fitted_rates[1].begin(), r.fitted_rates[1].end());
    files["rates.svg"] = svg_detail::line_chart("normalised arrival rate by week slot",
                                                {{"observed non-frail", obs0, true, "black"},
                                                 {"observed frail", obs1, true, "grey"},
                                                 {"fitted non-frail", fit0, false, "black"},
                                                 {"fitted frail", fit1, false, "grey"}});
    std::vector<double> l0(r.los_median_by_hour[0].begin(), r.los_median_by_hour[0].end());
    std::vector<double> l1(r.los_median_by_hour[1].begin(), r.los_median_by_hour[1].end());
    files["los_by_hour.svg"] = svg_detail::line_chart("median LOS by hour of arrival",
                                                      {{"non-frail", l0, false, "black"}, {"frail", l1, true, "grey"}});
    for (const char* m : {"los", "triage", "charlson"}) {
      const Histogram *a = nullptr, *b = nullptr;
      for (const auto& h : r.histograms)
        if (h.measure == m) (h.group == Group::non_frail ? a : b) = &h;
      if (a && b) files[std::string("hist_") + m + ".svg"] = svg_detail::bar_chart(m, *a, *b);
    }
  }
  return files;
}

inline void write_files(const std::filesystem::path& dir, const std::map<std::string, std::string>& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& [name, content] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << content;
    if (!out) throw IoError("write failed for " + (dir / name).string());
  }
}

inline void emit_report(const RunReport& r, const std::filesystem::path& dir, const EmitOptions& opt = {}) {
  write_files(dir, render_report(r, opt));
}

}  // namespace cyclecount
