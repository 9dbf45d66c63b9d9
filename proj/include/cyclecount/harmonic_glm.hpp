#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cyclecount/distributions.hpp"
#include "cyclecount/errors.hpp"
#include "cyclecount/timeseries.hpp"

namespace cyclecount {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kMaxWeeklyHarmonics = 3;
inline constexpr int kMaxDailyHarmonics = 12;

// Harmonic orders of the log-linear arrival model
//
//   ln E(n_t) = ln N + a0 + Σ_k [a_k cos(2πk d/7) + b_k sin(2πk d/7)]
//                         + Σ_k [α_k cos(2πk h/24) + β_k sin(2πk h/24)]
//             + 1{frail} (Σ_k [x_k cos + y_k sin](d) + Σ_k [ξ_k cos + η_k sin](h))
//
// Coefficient order: a0; a1 b1 a2 b2 ...; alpha1 beta1 ...; x1 y1 ...; xi1 eta1 ...
struct FourierSpec {
  int weekly = 0;  // K_w
  int daily = 0;   // K_d
  bool frail_interaction = false;

  void validate() const {
    if (weekly < 0 || weekly > kMaxWeeklyHarmonics)
      throw DomainError("K_w must be in 0.." + std::to_string(kMaxWeeklyHarmonics));
    if (daily < 0 || daily > kMaxDailyHarmonics)
      throw DomainError("K_d must be in 0.." + std::to_string(kMaxDailyHarmonics));
  }

  int main_effect_count() const { return 1 + 2 * weekly + 2 * daily; }
  // The interaction block repeats every main-effect column for frail rows,
  // the intercept included (its coefficient is x0).
  int parameter_count() const { return main_effect_count() * (frail_interaction ? 2 : 1); }

  std::vector<std::string> coefficient_names() const {
    std::vector<std::string> n{"a0"};
    auto block = [&](const char* c, const char* s, int k_max) {
      for (int k = 1; k <= k_max; ++k) {
        n.push_back(c + std::to_string(k));
        n.push_back(s + std::to_string(k));
      }
    };
    block("a", "b", weekly);
    block("alpha", "beta", daily);
    if (frail_interaction) {
      n.push_back("x0");
      block("x", "y", weekly);
      block("xi", "eta", daily);
    }
    return n;
  }

  friend bool operator==(const FourierSpec&, const FourierSpec&) = default;
};

// Regressor vector for one (day, hour, group) cell.
inline void fourier_row(const FourierSpec& spec, int day, int hour, bool frail, double* out) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::size_t j = 0;
  out[j++] = 1.0;
  auto harmonics = [&](int k_max, double phase, double scale) {
    for (int k = 1; k <= k_max; ++k) {
      out[j++] = scale * std::cos(k * phase);
      out[j++] = scale * std::sin(k * phase);
    }
  };
  const double wphase = two_pi * day / 7.0;
  const double dphase = two_pi * hour / 24.0;
  harmonics(spec.weekly, wphase, 1.0);
  harmonics(spec.daily, dphase, 1.0);
  if (spec.frail_interaction) {
    const double ind = frail ? 1.0 : 0.0;
    out[j++] = ind;
    harmonics(spec.weekly, wphase, ind);
    harmonics(spec.daily, dphase, ind);
  }
}

inline std::vector<double> fourier_row(const FourierSpec& spec, WeekSlot slot, bool frail) {
  std::vector<double> r(static_cast<std::size_t>(spec.parameter_count()));
  fourier_row(spec, slot.day, slot.hour, frail, r.data());
  return r;
}

struct Design {
  FourierSpec spec;
  std::vector<std::string> names;
  MatrixXd x;       // rows × parameters
  VectorXd y;       // n_t
  VectorXd offset;  // ln N of the row's group
  std::vector<Group> row_group;
  std::vector<int> row_slot;
};

struct DesignOptions {
  // Restrict rows to one group (the single-group baseline variant). Not
  // compatible with an interaction block.
  std::optional<Group> only_group;
};

// Rows stacked non-frail block first, then frail, each in hour order.
inline Design build_design(const SeriesPair& series, const FourierSpec& spec, const DesignOptions& opt = {}) {
  spec.validate();
  if (opt.only_group && spec.frail_interaction)
    throw DomainError("single-group design cannot carry a frail interaction block");
  std::vector<const SlotSeries*> groups;
  if (!opt.only_group || *opt.only_group == Group::non_frail) groups.push_back(&series.non_frail);
  if (!opt.only_group || *opt.only_group == Group::frail) groups.push_back(&series.frail);
  std::size_t rows = 0;
  for (const auto* s : groups) {
    if (s->total <= 0) throw DomainError(std::string("group ") + group_name(s->group) + " has N = 0; offset ln N undefined");
    if (s->counts.empty()) throw DomainError(std::string("group ") + group_name(s->group) + " series is empty");
    rows += s->counts.size();
  }
  const int p = spec.parameter_count();

  // One regressor row per (slot, group); rows are copies.
  std::array<std::vector<double>, 2 * kSlotsPerWeek> cache;
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < kSlotsPerWeek; ++s) cache[g * kSlotsPerWeek + s] = fourier_row(spec, WeekSlot::from_index(s), g == 1);

  Design d;
  d.spec = spec;
  d.names = spec.coefficient_names();
  d.x.resize(static_cast<Eigen::Index>(rows), p);
  d.y.resize(static_cast<Eigen::Index>(rows));
  d.offset.resize(static_cast<Eigen::Index>(rows));
  d.row_group.reserve(rows);
  d.row_slot.reserve(rows);
  Eigen::Index i = 0;
  for (const auto* s : groups) {
    const double off = std::log(static_cast<double>(s->total));
    const int g = s->group == Group::frail ? 1 : 0;
    const int first = s->slot_of(0).index();
    for (std::size_t t = 0; t < s->counts.size(); ++t, ++i) {
      const int slot = static_cast<int>((first + t) % kSlotsPerWeek);
      const auto& row = cache[g * kSlotsPerWeek + slot];
      for (int j = 0; j < p; ++j) d.x(i, j) = row[static_cast<std::size_t>(j)];
      d.y(i) = static_cast<double>(s->counts[t]);
      d.offset(i) = off;
      d.row_group.push_back(s->group);
      d.row_slot.push_back(slot);
    }
  }
  return d;
}

struct FitControls {
  double tolerance = 1e-8;  // relative deviance change
  int max_iterations = 50;
  double rank_tolerance = 1e-10;  // relative to the largest pivot
  // Merge rows with identical regressors and offset into weighted sufficient
  // statistics before iterating. Exact for the Poisson likelihood.
  bool collapse_duplicate_rows = true;
};

struct FittedModel {
  FourierSpec spec;
  std::vector<std::string> names;
  VectorXd coefficients;
  MatrixXd covariance;
  double deviance = 0.0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  double pearson_chi2 = 0.0;
  double min_fitted = 0.0;
  std::int64_t n_obs = 0;
  std::int64_t df_residual = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> deviance_trace;
  std::uint64_t data_fingerprint = 0;
  std::optional<Group> only_group;
  VectorXd fitted;  // μ̂ per row; empty when loaded from JSON

  int parameters() const { return static_cast<int>(names.size()); }
  double standard_error(int j) const { return std::sqrt(covariance(j, j)); }

  int index_of(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<int>(j);
    return -1;
  }

  double coefficient(const std::string& name) const {
    const int j = index_of(name);
    return j < 0 ? 0.0 : coefficients(j);
  }
};

namespace glm_detail {

inline std::uint64_t fingerprint(const VectorXd& y, const VectorXd& offset) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      const double value = v(i);
      std::memcpy(&bits, &value, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ULL;
      }
    }
  };
  mix(y);
  mix(offset);
  return h;
}

inline double unit_deviance(double y, double mu) {
  return 2.0 * ((y > 0 ? y * std::log(y / mu) : 0.0) - (y - mu));
}

struct Collapsed {
  MatrixXd x;
  VectorXd offset;
  VectorXd weight;  // multiplicity
  VectorXd ysum;
  std::vector<Eigen::Index> row_to_unique;
};

inline Collapsed collapse(const MatrixXd& x, const VectorXd& y, const VectorXd& offset, bool enabled) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Collapsed c;
  c.row_to_unique.resize(static_cast<std::size_t>(n));
  if (!enabled) {
    c.x = x;
    c.offset = offset;
    c.weight = VectorXd::Ones(n);
    c.ysum = y;
    for (Eigen::Index i = 0; i < n; ++i) c.row_to_unique[static_cast<std::size_t>(i)] = i;
    return c;
  }
  struct KeyHash {
    std::size_t operator()(const std::vector<double>& k) const {
      std::uint64_t h = 1469598103934665603ULL;
      for (double v : k) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = (h ^ bits) * 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };
  std::unordered_map<std::vector<double>, Eigen::Index, KeyHash> index;
  std::vector<Eigen::Index> firsts;
  std::vector<double> key(static_cast<std::size_t>(p + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) key[static_cast<std::size_t>(j)] = x(i, j);
    key[static_cast<std::size_t>(p)] = offset(i);
    auto [it, inserted] = index.emplace(key, static_cast<Eigen::Index>(firsts.size()));
    if (inserted) firsts.push_back(i);
    c.row_to_unique[static_cast<std::size_t>(i)] = it->second;
  }
  const auto u = static_cast<Eigen::Index>(firsts.size());
  c.x.resize(u, p);
  c.offset.resize(u);
  c.weight = VectorXd::Zero(u);
  c.ysum = VectorXd::Zero(u);
  for (Eigen::Index k = 0; k < u; ++k) {
    c.x.row(k) = x.row(firsts[static_cast<std::size_t>(k)]);
    c.offset(k) = offset(firsts[static_cast<std::size_t>(k)]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = c.row_to_unique[static_cast<std::size_t>(i)];
    c.weight(k) += 1.0;
    c.ysum(k) += y(i);
  }
  return c;
}

}  // namespace glm_detail

// Poisson log-link regression with offset, fitted by IRLS.
inline FittedModel fit_poisson(const MatrixXd& x, const VectorXd& y, const VectorXd& offset,
                               const std::vector<std::string>& names, const FitControls& ctl = {}) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n || offset.size() != n) throw DomainError("design, response and offset lengths differ");
  if (static_cast<Eigen::Index>(names.size()) != p) throw DomainError("coefficient name count does not match design columns");
  if (n == 0) throw DomainError("empty design");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(y(i) >= 0) || y(i) != std::floor(y(i))) throw DomainError("response must be non-negative integers");

  const auto c = glm_detail::collapse(x, y, offset, ctl.collapse_duplicate_rows);

  {
    const MatrixXd xw = c.weight.cwiseSqrt().asDiagonal() * c.x;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(xw);
    qr.setThreshold(ctl.rank_tolerance);
    if (qr.rank() < p) {
      std::vector<std::string> dependent;
      for (Eigen::Index k = qr.rank(); k < p; ++k) dependent.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()(k))]);
      std::string msg = "design is rank deficient (rank " + std::to_string(qr.rank()) + " of " + std::to_string(p) + "); dependent columns:";
      for (const auto& d : dependent) msg += " " + d;
      throw RankDeficientError(msg, dependent);
    }
  }

  const VectorXd ybar = c.ysum.cwiseQuotient(c.weight);

  auto full_deviance = [&](const VectorXd& mu_u) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) dev += glm_detail::unit_deviance(y(i), mu_u(c.row_to_unique[static_cast<std::size_t>(i)]));
    return dev;
  };

  VectorXd mu = (ybar.array() + 0.5).matrix();
  VectorXd eta = mu.array().log().matrix();
  VectorXd beta = VectorXd::Zero(p);
  double dev_old = full_deviance(mu);

  FittedModel m;
  m.names = names;
  bool converged = false;
  int iter = 0;
  for (iter = 1; iter <= ctl.max_iterations; ++iter) {
    const VectorXd w = c.weight.cwiseProduct(mu);
    const VectorXd z = (eta - c.offset) + (ybar - mu).cwiseQuotient(mu);
    const MatrixXd xtwx = c.x.transpose() * w.asDiagonal() * c.x;
    const VectorXd xtwz = c.x.transpose() * w.cwiseProduct(z);
    Eigen::LDLT<MatrixXd> ldlt(xtwx);
    VectorXd beta_new = ldlt.solve(xtwz);

    VectorXd eta_new = c.x * beta_new + c.offset;
    VectorXd mu_new = eta_new.array().exp().matrix();
    double dev = full_deviance(mu_new);
    // Step halving when the update overshoots into non-finite territory.
    for (int half = 0; !std::isfinite(dev) && half < 30 && iter > 1; ++half) {
      beta_new = 0.5 * (beta_new + beta);
      eta_new = c.x * beta_new + c.offset;
      mu_new = eta_new.array().exp().matrix();
      dev = full_deviance(mu_new);
    }
    if (!std::isfinite(dev)) break;
    beta = beta_new;
    eta = eta_new;
    mu = mu_new;
    m.deviance_trace.push_back(dev);
    const bool done = std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < ctl.tolerance;
    dev_old = dev;
    if (done) {
      converged = true;
      break;
    }
  }

  m.coefficients = beta;
  m.converged = converged;
  m.iterations = std::min(iter, ctl.max_iterations);
  const VectorXd w = c.weight.cwiseProduct(mu);
  const MatrixXd info = c.x.transpose() * w.asDiagonal() * c.x;
  m.covariance = info.ldlt().solve(MatrixXd::Identity(p, p));
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose());

  m.fitted.resize(n);
  double dev = 0.0, ll = 0.0, pearson = 0.0, min_mu = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mi = mu(c.row_to_unique[static_cast<std::size_t>(i)]);
    const double yi = y(i);
    m.fitted(i) = mi;
    dev += glm_detail::unit_deviance(yi, mi);
    ll += (yi > 0 ? yi * std::log(mi) : 0.0) - mi - std::lgamma(yi + 1.0);
    pearson += (yi - mi) * (yi - mi) / mi;
    min_mu = std::min(min_mu, mi);
  }
  m.deviance = dev;
  m.log_likelihood = ll;
  m.aic = -2.0 * ll + 2.0 * static_cast<double>(p);
  m.pearson_chi2 = pearson;
  m.min_fitted = min_mu;
  m.n_obs = n;
  m.df_residual = n - p;
  m.data_fingerprint = glm_detail::fingerprint(y, offset);
  return m;
}

inline FittedModel fit_poisson(const Design& d, const FitControls& ctl = {}) {
  FittedModel m = fit_poisson(d.x, d.y, d.offset, d.names, ctl);
  m.spec = d.spec;
  return m;
}

inline FittedModel fit_model(const SeriesPair& series, const FourierSpec& spec, const DesignOptions& opt = {},
                             const FitControls& ctl = {}) {
  FittedModel m = fit_poisson(build_design(series, spec, opt), ctl);
  m.only_group = opt.only_group;
  return m;
}

inline std::pair<double, double> deviance_aic(const FittedModel& m) { return {m.deviance, m.aic}; }

// Pearson χ² / residual df.
inline double dispersion(const FittedModel& m) {
  if (m.df_residual <= 0) throw DomainError("dispersion undefined: no residual degrees of freedom");
  if (!(m.min_fitted > 0)) throw DomainError("dispersion undefined: a fitted mean is zero");
  return m.pearson_chi2 / static_cast<double>(m.df_residual);
}

// Pearson dispersion restricted to the rows of one group.
inline double group_dispersion(const FittedModel& m, const Design& d, Group g) {
  if (m.fitted.size() != d.y.size()) throw DomainError("model and design row counts differ");
  double chi2 = 0.0;
  std::int64_t rows = 0;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    if (d.row_group[static_cast<std::size_t>(i)] != g) continue;
    const double mu = m.fitted(i);
    if (!(mu > 0)) throw DomainError("dispersion undefined: a fitted mean is zero");
    chi2 += (d.y(i) - mu) * (d.y(i) - mu) / mu;
    ++rows;
  }
  // Residual df shared out in proportion to the group's rows.
  const double df = static_cast<double>(rows) - static_cast<double>(m.parameters()) * rows / static_cast<double>(d.y.size());
  if (df <= 0) throw DomainError("dispersion undefined: no residual degrees of freedom");
  return chi2 / df;
}

// E(n_t)/N at a week slot.
inline double predict_rate(const FittedModel& m, WeekSlot slot, Group group) {
  const auto row = fourier_row(m.spec, slot, group == Group::frail);
  if (static_cast<Eigen::Index>(row.size()) != m.coefficients.size())
    throw DomainError("model coefficients do not match its Fourier spec");
  double eta = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) eta += row[j] * m.coefficients(static_cast<Eigen::Index>(j));
  return std::exp(eta);
}

inline std::array<double, kSlotsPerWeek> predict_rates(const FittedModel& m, Group group) {
  std::array<double, kSlotsPerWeek> out{};
  for (int s = 0; s < kSlotsPerWeek; ++s) out[static_cast<std::size_t>(s)] = predict_rate(m, WeekSlot::from_index(s), group);
  return out;
}

// ---------------------------------------------------------------------------
// Order selection

struct SearchSpace {
  int weekly_min = 0, weekly_max = kMaxWeeklyHarmonics;
  int daily_min = 0, daily_max = kMaxDailyHarmonics;
};

struct OrderTraceEntry {
  int weekly = 0, daily = 0;
  bool ok = false;
  double aic = 0.0;
  double deviance = 0.0;
  int parameters = 0;
  std::string error;
};

struct OrderSelection {
  int weekly = 0, daily = 0;
  double aic = 0.0;
  std::vector<OrderTraceEntry> trace;
};

// Exhaustive AIC grid without interaction. Cells that fail to fit (rank
// deficiency, non-convergence) stay in the trace with ok = false.
inline OrderSelection select_orders(const SeriesPair& series, const SearchSpace& space = {},
                                    const DesignOptions& opt = {}, const FitControls& ctl = {}) {
  if (space.weekly_min > space.weekly_max || space.daily_min > space.daily_max)
    throw DomainError("empty order search space");
  OrderSelection sel;
  bool found = false;
  for (int kw = space.weekly_min; kw <= space.weekly_max; ++kw) {
    for (int kd = space.daily_min; kd <= space.daily_max; ++kd) {
      OrderTraceEntry e;
      e.weekly = kw;
      e.daily = kd;
      try {
        const FittedModel m = fit_model(series, {kw, kd, false}, opt, ctl);
        e.parameters = m.parameters();
        e.aic = m.aic;
        e.deviance = m.deviance;
        e.ok = m.converged;
        if (!m.converged) e.error = "IRLS did not converge";
      } catch (const Error& ex) {
        e.error = ex.what();
      }
      if (e.ok) {
        const bool better = !found || e.aic < sel.aic ||
                            (e.aic == sel.aic && (kd < sel.daily || (kd == sel.daily && kw < sel.weekly)));
        if (better) {
          sel.weekly = kw;
          sel.daily = kd;
          sel.aic = e.aic;
          found = true;
        }
      }
      sel.trace.push_back(std::move(e));
    }
  }
  if (!found) throw DomainError("order selection failed: no grid cell could be fitted");
  return sel;
}

// ---------------------------------------------------------------------------
// Nested comparison

struct AnovaResult {
  std::array<std::int64_t, 2> resid_df{};
  std::array<double, 2> resid_deviance{};
  double deviance_drop = 0.0;
  std::int64_t df_drop = 0;
  double p = 1.0;
};

struct ModelSummary {
  std::int64_t resid_df = 0;
  double deviance = 0.0;
};

// Deviance-drop χ² test from residual df and deviance alone.
inline AnovaResult anova_nested(const ModelSummary& small, const ModelSummary& large) {
  AnovaResult r;
  r.resid_df = {small.resid_df, large.resid_df};
  r.resid_deviance = {small.deviance, large.deviance};
  r.df_drop = small.resid_df - large.resid_df;
  if (r.df_drop < 0) throw DomainError("models are not nested: the larger model has more residual df");
  double drop = small.deviance - large.deviance;
  const double slack = 1e-7 * (1.0 + std::abs(small.deviance));
  if (drop < -slack) throw DomainError("models are not nested: deviance increases with the larger model");
  drop = std::max(0.0, drop);
  r.deviance_drop = drop;
  r.p = r.df_drop == 0 ? 1.0 : dist::chi_square_upper(drop, static_cast<double>(r.df_drop));
  return r;
}

inline AnovaResult anova_nested(const FittedModel& small, const FittedModel& large) {
  if (small.n_obs != large.n_obs || small.data_fingerprint != large.data_fingerprint)
    throw DomainError("models were not fitted to the same data");
  for (const auto& n : small.names)
    if (large.index_of(n) < 0) throw DomainError("models are not nested: coefficient " + n + " missing from the larger model");
  return anova_nested(ModelSummary{small.df_residual, small.deviance}, ModelSummary{large.df_residual, large.deviance});
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const FourierSpec& s) {
  return {{"K_w", s.weekly}, {"K_d", s.daily}, {"frail_interaction", s.frail_interaction}};
}

inline nlohmann::json to_json(const FittedModel& m) {
  using nlohmann::json;
  json coefs = json::array();
  const double z975 = dist::normal_quantile(0.975);
  for (int j = 0; j < m.parameters(); ++j) {
    const double est = m.coefficients(j), se = m.standard_error(j);
    const double z = est / se;
    coefs.push_back({{"name", m.names[static_cast<std::size_t>(j)]},
                     {"estimate", est},
                     {"se", se},
                     {"z", z},
                     {"p", dist::normal_two_sided_p(z)},
                     {"ci95", {est - z975 * se, est + z975 * se}}});
  }
  json cov = json::array();
  for (int i = 0; i < m.parameters(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.parameters(); ++j) row.push_back(m.covariance(i, j));
    cov.push_back(std::move(row));
  }
  char fp[24];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(m.data_fingerprint));
  json j{{"spec", to_json(m.spec)},
         {"parameters", m.parameters()},
         {"coefficients", std::move(coefs)},
         {"covariance", std::move(cov)},
         {"deviance", m.deviance},
         {"log_likelihood", m.log_likelihood},
         {"aic", m.aic},
         {"pearson_chi2", m.pearson_chi2},
         {"n_obs", m.n_obs},
         {"df_residual", m.df_residual},
         {"converged", m.converged},
         {"iterations", m.iterations},
         {"deviance_trace", m.deviance_trace},
         {"data_fingerprint", fp},
         {"rows", m.only_group ? group_name(*m.only_group) : "both"}};
  if (m.df_residual > 0 && m.min_fitted > 0) j["dispersion"] = dispersion(m);
  j["min_fitted"] = m.min_fitted;
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  FittedModel m;
  const auto& s = j.at("spec");
  m.spec = {s.at("K_w").get<int>(), s.at("K_d").get<int>(), s.at("frail_interaction").get<bool>()};
  const auto& coefs = j.at("coefficients");
  const auto p = static_cast<Eigen::Index>(coefs.size());
  m.coefficients.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    m.names.push_back(coefs[static_cast<std::size_t>(k)].at("name").get<std::string>());
    m.coefficients(k) = coefs[static_cast<std::size_t>(k)].at("estimate").get<double>();
  }
  if (m.names != m.spec.coefficient_names()) throw DomainError("model JSON: coefficient names do not match spec");
  m.covariance = MatrixXd::Zero(p, p);
  if (j.contains("covariance"))
    for (Eigen::Index a = 0; a < p; ++a)
      for (Eigen::Index b = 0; b < p; ++b)
        m.covariance(a, b) = j.at("covariance").at(static_cast<std::size_t>(a)).at(static_cast<std::size_t>(b)).get<double>();
  m.deviance = j.at("deviance").get<double>();
  m.log_likelihood = j.value("log_likelihood", 0.0);
  m.aic = j.value("aic", 0.0);
  m.pearson_chi2 = j.value("pearson_chi2", 0.0);
  m.min_fitted = j.value("min_fitted", 0.0);
  m.n_obs = j.at("n_obs").get<std::int64_t>();
  m.df_residual = j.at("df_residual").get<std::int64_t>();
  m.converged = j.value("converged", false);
  m.iterations = j.value("iterations", 0);
  m.deviance_trace = j.value("deviance_trace", std::vector<double>{});
  m.data_fingerprint = std::stoull(j.at("data_fingerprint").get<std::string>(), nullptr, 16);
  const auto rows = j.value("rows", std::string{"both"});
  if (rows != "both") m.only_group = parse_group(rows);
  return m;
}

inline nlohmann::json to_json(const AnovaResult& a) {
  return {{"resid_df", a.resid_df},       {"resid_deviance", a.resid_deviance}, {"deviance_drop", a.deviance_drop},
          {"df_drop", a.df_drop},         {"p", a.p}};
}

inline nlohmann::json to_json(const OrderSelection& s) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : s.trace) {
    nlohmann::json t{{"K_w", e.weekly}, {"K_d", e.daily}, {"ok", e.ok}};
    if (e.ok) {
      t["aic"] = e.aic;
      t["deviance"] = e.deviance;
      t["parameters"] = e.parameters;
    } else {
      t["error"] = e.error;
    }
    trace.push_back(std::move(t));
  }
  return {{"K_w", s.weekly}, {"K_d", s.daily}, {"aic", s.aic}, {"trace", std::move(trace)}};
}

}  // namespace cyclecount
