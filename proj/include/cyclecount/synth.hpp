#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecount/harmonic_glm.hpp"
#include "cyclecount/ingest.hpp"
#include "cyclecount/random.hpp"
#include "cyclecount/timeseries.hpp"

namespace cyclecount {

// Non-arrival attributes drawn per simulated visit.
struct AttributeModel {
  double admission_prob = 0.5;
  std::array<double, 5> triage_probs{0.02, 0.1, 0.4, 0.4, 0.08};
  int age_min = 18, age_max = 74;
  // Share of visits drawn from [elderly_age_min, age_max_elderly] instead.
  double elderly_share = 0.0;
  int elderly_age_min = 75, elderly_age_max = 100;
  std::vector<std::string> base_codes;  // always present
  std::vector<std::pair<std::string, double>> optional_codes;  // (code, inclusion probability)
  double los_meanlog = 5.0, los_sdlog = 0.6;  // lognormal minutes, redrawn until within [1, cap]
  std::int64_t los_cap_minutes = 600;
};

struct GroupConfig {
  double n = 0.0;  // N: expected visits of the group
  AttributeModel attributes;
};

struct GeneratorConfig {
  Timestamp start = Timestamp::from_civil(2017, 1, 2);
  std::int64_t weeks = 83;
  std::optional<std::int64_t> hours;  // overrides weeks when set
  std::uint64_t seed = 1;
  // Named coefficients a0, a_k, b_k, alpha_k, beta_k, x_k, y_k, xi_k, eta_k.
  // Interaction names apply to the frail group only. Missing names are 0.
  std::map<std::string, double> coefficients;
  // Replace a0 so the non-frail expected total equals its N.
  bool normalize_intercept = false;
  std::array<GroupConfig, 2> groups;  // [non-frail, frail]
  // Exact visit counts per (GP window, group) instead of Poisson hourly draws:
  // [within=0 / outside=1][non-frail=0 / frail=1].
  std::optional<std::array<std::array<std::int64_t, 2>, 2>> cell_counts;
  GpHoursConfig gp_hours;

  std::int64_t period_hours() const { return hours ? *hours : weeks * 168; }
  StudyPeriod period() const { return {start, period_hours()}; }

  // Smallest Fourier spec holding every non-zero coefficient.
  FourierSpec implied_spec() const {
    FourierSpec s;
    for (const auto& [name, v] : coefficients) {
      if (v == 0.0) continue;
      if (name == "x0") s.frail_interaction = true;
      auto order = [&](std::string_view prefix) -> int {
        if (name.rfind(prefix, 0) != 0) return -1;
        const auto rest = std::string_view(name).substr(prefix.size());
        if (rest.empty() || rest.find_first_not_of("0123456789") != std::string_view::npos) return -1;
        return std::stoi(std::string(rest));
      };
      for (auto p : {"alpha", "beta"})
        if (int k = order(p); k > 0) s.daily = std::max(s.daily, k);
      for (auto p : {"xi", "eta"})
        if (int k = order(p); k > 0) {
          s.daily = std::max(s.daily, k);
          s.frail_interaction = true;
        }
      for (auto p : {"a", "b"})
        if (int k = order(p); k > 0) s.weekly = std::max(s.weekly, k);
      for (auto p : {"x", "y"})
        if (int k = order(p); k > 0) {
          s.weekly = std::max(s.weekly, k);
          s.frail_interaction = true;
        }
    }
    return s;
  }
};

namespace synth_detail {

inline double linear_predictor(const GeneratorConfig& cfg, const FourierSpec& spec, const std::vector<std::string>& names,
                               int slot, bool frail, double a0) {
  const auto row = fourier_row(spec, WeekSlot::from_index(slot), frail);
  double eta = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (names[j] == "a0") {
      eta += a0 * row[j];
      continue;
    }
    auto it = cfg.coefficients.find(names[j]);
    if (it != cfg.coefficients.end()) eta += it->second * row[j];
  }
  return eta;
}

}  // namespace synth_detail

// True coefficient vector in FourierSpec order (a0 normalized if configured).
inline std::map<std::string, double> true_coefficients(const GeneratorConfig& cfg) {
  const FourierSpec spec = cfg.implied_spec();
  auto names = FourierSpec{spec.weekly, spec.daily, true}.coefficient_names();
  std::map<std::string, double> out;
  for (const auto& n : names) {
    auto it = cfg.coefficients.find(n);
    out[n] = it == cfg.coefficients.end() ? 0.0 : it->second;
  }
  if (cfg.normalize_intercept) {
    const auto period = cfg.period();
    const int first = week_slot_of(period.start).index();
    double sum = 0.0;
    const auto snames = spec.coefficient_names();
    for (std::int64_t t = 0; t < period.hours; ++t)
      sum += std::exp(synth_detail::linear_predictor(cfg, spec, snames, static_cast<int>((first + t) % kSlotsPerWeek), false, 0.0));
    out["a0"] = -std::log(sum);
  }
  return out;
}

// Expected count per hour and group: N·exp(linear predictor).
inline std::array<std::vector<double>, 2> expected_counts(const GeneratorConfig& cfg) {
  const FourierSpec spec = cfg.implied_spec();
  const auto names = spec.coefficient_names();
  const double a0 = true_coefficients(cfg).at("a0");
  const auto period = cfg.period();
  if (period.hours <= 0) throw DomainError("generator period must span at least one hour");
  const int first = week_slot_of(period.start).index();
  std::array<std::array<double, kSlotsPerWeek>, 2> per_slot{};
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < kSlotsPerWeek; ++s)
      per_slot[g][s] = cfg.groups[g].n * std::exp(synth_detail::linear_predictor(cfg, spec, names, s, g == 1, a0));
  std::array<std::vector<double>, 2> out;
  for (int g = 0; g < 2; ++g) {
    out[g].resize(static_cast<std::size_t>(period.hours));
    for (std::int64_t t = 0; t < period.hours; ++t) {
      const double v = per_slot[g][static_cast<std::size_t>((first + t) % kSlotsPerWeek)];
      if (!std::isfinite(v) || v < 0) throw DomainError("generator intensity is not finite");
      out[g][static_cast<std::size_t>(t)] = v;
    }
  }
  return out;
}

// Hourly Poisson counts per group from the configured intensity.
inline SeriesPair simulate_counts(const GeneratorConfig& cfg, std::uint64_t seed) {
  const auto mu = expected_counts(cfg);
  Rng rng(seed);
  const auto period = cfg.period();
  SeriesPair out;
  for (int g = 0; g < 2; ++g) {
    SlotSeries s{static_cast<Group>(g), period.start, std::vector<std::int64_t>(mu[g].size()), 0};
    for (std::size_t t = 0; t < mu[g].size(); ++t) {
      s.counts[t] = rng.poisson(mu[g][t]);
      s.total += s.counts[t];
    }
    (g ? out.frail : out.non_frail) = std::move(s);
  }
  return out;
}

struct SimulatedVisit {
  VisitRecord visit;
  bool frail = false;  // ground-truth group
};

namespace synth_detail {

inline VisitRecord draw_attributes(Rng& rng, const AttributeModel& m, std::string id, Timestamp arrival) {
  VisitRecord v;
  v.visit_id = std::move(id);
  v.arrival = arrival;
  const bool elderly = m.elderly_share > 0 && rng.bernoulli(m.elderly_share);
  const int lo = elderly ? m.elderly_age_min : m.age_min, hi = elderly ? m.elderly_age_max : m.age_max;
  v.age = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  v.triage = 1 + static_cast<int>(rng.categorical({m.triage_probs.begin(), m.triage_probs.end()}));
  v.admitted = rng.bernoulli(m.admission_prob);
  for (const auto& c : m.base_codes) v.icd_codes.push_back({normalize_icd(c), CodeStage::admission});
  for (const auto& [c, p] : m.optional_codes)
    if (rng.bernoulli(p)) v.icd_codes.push_back({normalize_icd(c), CodeStage::discharge});
  std::int64_t los = 0;
  for (int tries = 0; tries < 1000; ++tries) {
    los = std::llround(std::exp(m.los_meanlog + m.los_sdlog * rng.normal()));
    if (los >= 1 && los <= m.los_cap_minutes) break;
  }
  los = std::clamp<std::int64_t>(los, 1, m.los_cap_minutes);
  v.departure = arrival.plus_minutes(los);
  return v;
}

}  // namespace synth_detail

// Visits with attributes. Hourly counts come from simulate_counts (or the
// exact cell counts when configured); each arrival minute is uniform within
// its hour. Deterministic for a given (config, seed).
inline std::vector<SimulatedVisit> simulate_arrivals(const GeneratorConfig& cfg, std::uint64_t seed) {
  const auto period = cfg.period();
  std::array<std::vector<std::int64_t>, 2> counts;
  if (cfg.cell_counts) {
    std::array<std::vector<std::int64_t>, 2> window_hours;  // within / outside
    for (std::int64_t t = 0; t < period.hours; ++t)
      window_hours[gp_hours_flag(period.start.plus_minutes(t * 60), cfg.gp_hours) ? 0 : 1].push_back(t);
    Rng placement(seed ^ 0x7461626c6531ULL);
    for (int g = 0; g < 2; ++g) counts[g].assign(static_cast<std::size_t>(period.hours), 0);
    for (int w = 0; w < 2; ++w)
      for (int g = 0; g < 2; ++g) {
        const auto n = (*cfg.cell_counts)[w][g];
        if (n > 0 && window_hours[w].empty()) throw DomainError("period has no hours in a requested GP window");
        for (std::int64_t i = 0; i < n; ++i)
          ++counts[g][static_cast<std::size_t>(window_hours[w][placement.below(window_hours[w].size())])];
      }
  } else {
    const auto series = simulate_counts(cfg, seed);
    counts[0] = series.non_frail.counts;
    counts[1] = series.frail.counts;
  }

  Rng rng(seed ^ 0x6174747273ULL);
  std::vector<SimulatedVisit> out;
  std::int64_t serial = 0;
  for (std::int64_t t = 0; t < period.hours; ++t)
    for (int g = 0; g < 2; ++g)
      for (std::int64_t i = 0; i < counts[g][static_cast<std::size_t>(t)]; ++i) {
        const Timestamp arrival = period.start.plus_minutes(t * 60 + static_cast<std::int64_t>(rng.below(60)));
        char id[40];
        std::snprintf(id, sizeof id, "S%llu-%07lld", static_cast<unsigned long long>(seed), static_cast<long long>(++serial));
        out.push_back({synth_detail::draw_attributes(rng, cfg.groups[g].attributes, id, arrival), g == 1});
      }
  return out;
}

// ---------------------------------------------------------------------------
// Recovery experiment

struct RecoveryOptions {
  bool select_orders = true;
  SearchSpace search;
  double alpha = 0.05;
  FitControls controls;
};

struct ReplicateOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::optional<std::pair<int, int>> selected;
  std::map<std::string, bool> covered;
  double dispersion = 0.0;
  double anova_p = 1.0;
};

struct CoverageReport {
  FourierSpec truth;
  std::map<std::string, double> true_values;
  std::size_t replicates = 0;
  std::size_t failed = 0;
  std::size_t order_recovered = 0;
  std::map<std::string, std::size_t> coverage;  // replicates whose 95% interval holds the truth
  std::size_t anova_rejections = 0;
  double dispersion_mean = 0.0;
  std::vector<ReplicateOutcome> outcomes;
};

inline ReplicateOutcome run_replicate(const GeneratorConfig& cfg, const FourierSpec& truth,
                                      const std::map<std::string, double>& true_values, std::size_t index,
                                      const RecoveryOptions& opt) {
  ReplicateOutcome r;
  r.index = index;
  r.seed = cfg.seed ^ static_cast<std::uint64_t>(index);
  try {
    const auto series = simulate_counts(cfg, r.seed);
    if (opt.select_orders) {
      const auto sel = select_orders(series, opt.search, {}, opt.controls);
      r.selected = std::pair{sel.weekly, sel.daily};
    }
    const FourierSpec base{truth.weekly, truth.daily, false};
    const FourierSpec ext{truth.weekly, truth.daily, true};
    const auto m_base = fit_model(series, base, {}, opt.controls);
    const auto m_ext = fit_model(series, ext, {}, opt.controls);
    if (!m_base.converged || !m_ext.converged) throw DomainError("IRLS did not converge");
    const auto& m_true = truth.frail_interaction ? m_ext : m_base;
    const double z = dist::normal_quantile(0.975);
    for (int j = 0; j < m_true.parameters(); ++j) {
      const auto& name = m_true.names[static_cast<std::size_t>(j)];
      const double se = m_true.standard_error(j);
      r.covered[name] = std::abs(m_true.coefficients(j) - true_values.at(name)) <= z * se;
    }
    r.dispersion = dispersion(m_true);
    r.anova_p = anova_nested(m_base, m_ext).p;
  } catch (const Error& e) {
    r.ok = false;
    r.error = "replicate " + std::to_string(index) + ": " + e.what();
  }
  return r;
}

inline CoverageReport recovery_experiment(const GeneratorConfig& cfg, std::size_t replicates,
                                          const RecoveryOptions& opt = {}) {
  if (replicates < 1) throw DomainError("need at least one replicate");
  CoverageReport rep;
  rep.truth = cfg.implied_spec();
  rep.true_values = true_coefficients(cfg);
  rep.replicates = replicates;
  double disp_sum = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < replicates; ++i) {
    auto r = run_replicate(cfg, rep.truth, rep.true_values, i, opt);
    if (!r.ok) {
      ++rep.failed;
    } else {
      ++ok;
      if (r.selected && r.selected->first == rep.truth.weekly && r.selected->second == rep.truth.daily) ++rep.order_recovered;
      for (const auto& [name, hit] : r.covered) rep.coverage[name] += hit ? 1 : 0;
      if (r.anova_p < opt.alpha) ++rep.anova_rejections;
      disp_sum += r.dispersion;
    }
    rep.outcomes.push_back(std::move(r));
  }
  rep.dispersion_mean = ok ? disp_sum / static_cast<double>(ok) : 0.0;
  return rep;
}

inline nlohmann::json to_json(const CoverageReport& r) {
  nlohmann::json cov = nlohmann::json::object();
  for (const auto& [k, v] : r.coverage) cov[k] = v;
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::json j{{"index", o.index}, {"seed", o.seed}, {"ok", o.ok}};
    if (!o.ok) j["error"] = o.error;
    else {
      if (o.selected) j["selected"] = {o.selected->first, o.selected->second};
      j["dispersion"] = o.dispersion;
      j["anova_p"] = o.anova_p;
    }
    outcomes.push_back(std::move(j));
  }
  return {{"truth", to_json(r.truth)},
          {"true_coefficients", r.true_values},
          {"replicates", r.replicates},
          {"failed", r.failed},
          {"order_recovered", r.order_recovered},
          {"coverage", std::move(cov)},
          {"anova_rejections", r.anova_rejections},
          {"dispersion_mean", r.dispersion_mean},
          {"outcomes", std::move(outcomes)}};
}

// ---------------------------------------------------------------------------
// Config file

inline AttributeModel attributes_from_json(const nlohmann::json& j) {
  AttributeModel m;
  m.admission_prob = j.value("admission_prob", m.admission_prob);
  if (j.contains("triage_probs")) {
    const auto v = j.at("triage_probs").get<std::vector<double>>();
    if (v.size() != 5) throw DomainError("triage_probs needs 5 entries");
    std::copy(v.begin(), v.end(), m.triage_probs.begin());
  }
  m.age_min = j.value("age_min", m.age_min);
  m.age_max = j.value("age_max", m.age_max);
  m.elderly_share = j.value("elderly_share", m.elderly_share);
  m.elderly_age_min = j.value("elderly_age_min", m.elderly_age_min);
  m.elderly_age_max = j.value("elderly_age_max", m.elderly_age_max);
  m.base_codes = j.value("base_codes", m.base_codes);
  if (j.contains("optional_codes"))
    for (auto it = j.at("optional_codes").begin(); it != j.at("optional_codes").end(); ++it)
      m.optional_codes.emplace_back(it.key(), it.value().get<double>());
  m.los_meanlog = j.value("los_meanlog", m.los_meanlog);
  m.los_sdlog = j.value("los_sdlog", m.los_sdlog);
  m.los_cap_minutes = j.value("los_cap_minutes", m.los_cap_minutes);
  return m;
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  if (j.contains("start")) {
    auto ts = parse_timestamp(j.at("start").get<std::string>());
    if (!ts || ts->minutes % 60 != 0) throw DomainError("generator start must be an hour-aligned timestamp");
    c.start = *ts;
  }
  c.weeks = j.value("weeks", c.weeks);
  if (j.contains("hours")) c.hours = j.at("hours").get<std::int64_t>();
  c.seed = j.value("seed", c.seed);
  c.coefficients = j.value("coefficients", c.coefficients);
  c.normalize_intercept = j.value("normalize_intercept", c.normalize_intercept);
  if (!c.normalize_intercept && !c.coefficients.count("a0")) throw DomainError("generator config needs a0 or normalize_intercept");
  const auto& groups = j.at("groups");
  for (int g = 0; g < 2; ++g) {
    const auto& gj = groups.at(group_name(static_cast<Group>(g)));
    c.groups[g].n = gj.at("N").get<double>();
    if (!(c.groups[g].n >= 0)) throw DomainError("group N must be non-negative");
    c.groups[g].attributes = attributes_from_json(gj.value("attributes", nlohmann::json::object()));
  }
  if (j.contains("cell_counts")) {
    std::array<std::array<std::int64_t, 2>, 2> cells{};
    const auto& cc = j.at("cell_counts");
    const char* windows[2] = {"within", "outside"};
    for (int w = 0; w < 2; ++w)
      for (int g = 0; g < 2; ++g) cells[w][g] = cc.at(windows[w]).at(group_name(static_cast<Group>(g))).get<std::int64_t>();
    c.cell_counts = cells;
  }
  c.implied_spec().validate();
  return c;
}

inline GeneratorConfig load_generator_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generator config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("generator config " + path + ": " + e.what());
  }
  return generator_from_json(j);
}

inline void write_simulated(std::ostream& out, const std::vector<SimulatedVisit>& visits) {
  auto header = visit_columns();
  header.push_back("true_frail");
  csv::write_row(out, header);
  for (const auto& s : visits) {
    auto f = visit_fields(s.visit);
    f.push_back(s.frail ? "1" : "0");
    csv::write_row(out, f);
  }
}

}  // namespace cyclecount
