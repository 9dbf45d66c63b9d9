#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecount/distributions.hpp"
#include "cyclecount/errors.hpp"

namespace cyclecount {

enum class TestKind { mann_whitney, chi_square_2x2, rmst_diff };

inline const char* test_name(TestKind k) {
  switch (k) {
    case TestKind::mann_whitney: return "mann_whitney";
    case TestKind::chi_square_2x2: return "chi_square_2x2";
    case TestKind::rmst_diff: return "rmst_diff";
  }
  return "?";
}

struct TestResult {
  TestKind test = TestKind::mann_whitney;
  double statistic = 0.0;
  std::optional<int> df;
  double p = 1.0;
  std::optional<double> effect;
  std::optional<std::pair<double, double>> ci95;
  std::optional<double> ci95_lower_one_sided;
  // Supporting numbers (sample sizes, medians, group rates, ...), in insertion order.
  std::vector<std::pair<std::string, double>> details;

  double detail(const std::string& key) const {
    for (const auto& [k, v] : details)
      if (k == key) return v;
    throw DomainError("no detail named " + key);
  }
};

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

// ---------------------------------------------------------------------------
// Mann-Whitney U

namespace mw_detail {

// Midranks of the pooled sample; first n_x entries belong to x.
inline std::vector<double> midranks(const std::vector<double>& pooled, double& tie_term) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(n);
  tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[idx[j]] == pooled[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = r;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  return rank;
}

// Exact two-sided p of the rank sum of x under random allocation, ties kept
// as midranks. Works on doubled ranks so every value is an integer.
inline double exact_two_sided_p(const std::vector<double>& ranks, std::size_t n_x, double rank_sum_x) {
  const std::size_t n = ranks.size();
  std::vector<int> r2(n);
  int total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    total += r2[i];
  }
  // dp[k][s]: number of k-subsets with doubled rank sum s
  std::vector<std::vector<double>> dp(n_x + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
  dp[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t kmax = std::min(i + 1, n_x);
    for (std::size_t k = kmax; k >= 1; --k) {
      auto& dst = dp[k];
      const auto& src = dp[k - 1];
      for (int s = total; s >= r2[i]; --s) dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r2[i])];
    }
  }
  const auto obs = static_cast<long long>(std::llround(2.0 * rank_sum_x));
  const long long mean2 = static_cast<long long>(n_x) * static_cast<long long>(n + 1);  // 2·E[R]
  const long long dev = std::llabs(obs - mean2);
  double hit = 0.0, all = 0.0;
  for (int s = 0; s <= total; ++s) {
    const double c = dp[n_x][static_cast<std::size_t>(s)];
    if (c == 0.0) continue;
    all += c;
    if (std::llabs(static_cast<long long>(s) - mean2) >= dev) hit += c;
  }
  return std::min(1.0, hit / all);
}

// Number of pairs with x_i - y_j <= d. x, y ascending.
inline std::uint64_t count_le(std::span<const double> x, std::span<const double> y, double d) {
  std::uint64_t count = 0;
  std::size_t j = 0;  // first y index with x_i - y_j <= d; non-decreasing in i
  for (double xi : x) {
    while (j < y.size() && !(xi - y[j] <= d)) ++j;
    count += y.size() - j;
  }
  return count;
}

inline std::int64_t ordered_bits(double v) {
  const auto b = std::bit_cast<std::int64_t>(v);
  return b < 0 ? std::numeric_limits<std::int64_t>::min() - b : b;
}

inline double from_ordered_bits(std::int64_t o) {
  return std::bit_cast<double>(o < 0 ? std::numeric_limits<std::int64_t>::min() - o : o);
}

// k-th smallest (1-based) of the n·m differences x_i - y_j, found by
// bisection over the ordered bit patterns of doubles.
inline double kth_difference(std::span<const double> x, std::span<const double> y, std::uint64_t k) {
  std::int64_t lo = ordered_bits(x.front() - y.back());
  std::int64_t hi = ordered_bits(x.back() - y.front());
  while (lo < hi) {
    // hi - lo can exceed the int64 range when the bracket straddles zero.
    const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
    const auto mid = static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + span / 2);
    if (count_le(x, y, from_ordered_bits(mid)) >= k) hi = mid;
    else lo = mid + 1;
  }
  return from_ordered_bits(lo);
}

}  // namespace mw_detail

struct MannWhitneyOptions {
  // Use the exact permutation distribution when n_x + n_y is at most this.
  std::size_t exact_max_total = 50;
};

// U statistic of x, two-sided p, Hodges-Lehmann shift median(x_i - y_j) with
// a distribution-free 95% interval and one-sided 95% lower bound.
inline TestResult mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y,
                                 const MannWhitneyOptions& opt = {}) {
  if (x.empty() || y.empty()) throw DomainError("Mann-Whitney needs two non-empty samples");
  const std::size_t nx = x.size(), ny = y.size(), n = nx + ny;
  std::vector<double> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  double tie_term = 0.0;
  const auto ranks = mw_detail::midranks(pooled, tie_term);
  const double dn = static_cast<double>(n), dnx = static_cast<double>(nx), dny = static_cast<double>(ny);
  if (tie_term == dn * dn * dn - dn) throw DomainError("Mann-Whitney undefined: all values identical (zero variance)");

  double rank_sum_x = 0.0;
  for (std::size_t i = 0; i < nx; ++i) rank_sum_x += ranks[i];
  const double u_x = rank_sum_x - dnx * (dnx + 1.0) / 2.0;
  const double mean_u = dnx * dny / 2.0;
  const double var_u = dnx * dny / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  const double sd_u = std::sqrt(var_u);
  const double z = std::max(0.0, std::abs(u_x - mean_u) - 0.5) / sd_u * (u_x >= mean_u ? 1.0 : -1.0);

  TestResult r;
  r.test = TestKind::mann_whitney;
  r.statistic = u_x;
  const bool exact = n <= opt.exact_max_total;
  r.p = exact ? mw_detail::exact_two_sided_p(ranks, nx, rank_sum_x) : dist::normal_two_sided_p(z);

  std::vector<double> xs(x), ys(y);
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const std::uint64_t pairs = static_cast<std::uint64_t>(nx) * ny;
  const double hl = pairs % 2 ? mw_detail::kth_difference(xs, ys, pairs / 2 + 1)
                              : 0.5 * (mw_detail::kth_difference(xs, ys, pairs / 2) +
                                       mw_detail::kth_difference(xs, ys, pairs / 2 + 1));
  r.effect = hl;
  auto order_index = [&](double zq) {
    const double c = std::floor(mean_u - zq * sd_u);
    return static_cast<std::uint64_t>(std::clamp(c, 1.0, static_cast<double>(pairs)));
  };
  const std::uint64_t k2 = order_index(dist::normal_quantile(0.975));
  r.ci95 = std::pair{mw_detail::kth_difference(xs, ys, k2), mw_detail::kth_difference(xs, ys, pairs - k2 + 1)};
  r.ci95_lower_one_sided = mw_detail::kth_difference(xs, ys, order_index(dist::normal_quantile(0.95)));

  r.details = {{"n_x", dnx},           {"n_y", dny},     {"u_y", dnx * dny - u_x},
               {"z", z},               {"exact", exact ? 1.0 : 0.0},
               {"median_x", median(x)}, {"median_y", median(y)}};
  return r;
}

// ---------------------------------------------------------------------------
// 2×2 χ²

struct Table2x2 {
  // Row 1: group A (events, non-events); row 2: group B.
  std::int64_t a = 0, b = 0, c = 0, d = 0;

  static Table2x2 from_rates(std::int64_t events_a, std::int64_t n_a, std::int64_t events_b, std::int64_t n_b) {
    return {events_a, n_a - events_a, events_b, n_b - events_b};
  }
};

struct ChiSquareOptions {
  bool continuity_correction = false;  // Yates
};

inline TestResult chi_square_2x2(const Table2x2& t, const ChiSquareOptions& opt = {}) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) throw DomainError("2x2 table counts must be non-negative");
  const double a = static_cast<double>(t.a), b = static_cast<double>(t.b), c = static_cast<double>(t.c),
               d = static_cast<double>(t.d);
  const double r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d, n = r1 + r2;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) throw DomainError("2x2 table has a zero marginal");
  double diff = std::abs(a * d - b * c);
  if (opt.continuity_correction) diff = std::max(0.0, diff - n / 2.0);
  // (r1 r2 c1 c2) can overflow int64 at registry scale; stay in double.
  const double chi2 = n * diff * diff / (r1 * r2 * c1 * c2);

  TestResult res;
  res.test = TestKind::chi_square_2x2;
  res.statistic = chi2;
  res.df = 1;
  res.p = dist::chi_square_upper(chi2, 1.0);
  const double p1 = a / r1, p2 = c / r2;
  const double se = std::sqrt(p1 * (1 - p1) / r1 + p2 * (1 - p2) / r2);
  const double z = dist::normal_quantile(0.975);
  res.effect = p1 - p2;
  res.ci95 = std::pair{p1 - p2 - z * se, p1 - p2 + z * se};
  res.details = {{"n_a", r1}, {"n_b", r2}, {"rate_a", p1}, {"rate_b", p2}};
  return res;
}

// ---------------------------------------------------------------------------
// Kaplan-Meier and RMST

struct SurvivalCurve {
  std::vector<double> times;  // distinct observed times, ascending
  std::vector<double> survival;  // S(t) just after each time
  std::vector<std::int64_t> at_risk;
  std::vector<std::int64_t> events;
  std::vector<std::int64_t> censored;
  std::vector<double> greenwood_var;

  // Right-continuous step function.
  double at(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s = survival[i];
    return s;
  }

  double max_time() const { return times.empty() ? 0.0 : times.back(); }
};

inline SurvivalCurve kaplan_meier(const std::vector<double>& times, const std::vector<bool>& events) {
  if (times.empty()) throw DomainError("Kaplan-Meier needs at least one observation");
  if (times.size() != events.size()) throw DomainError("times and event flags differ in length");
  for (double t : times)
    if (!(t > 0) || !std::isfinite(t)) throw DomainError("survival times must be positive and finite");
  std::map<double, std::pair<std::int64_t, std::int64_t>> tally;  // time -> (events, censored)
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto& e = tally[times[i]];
    (events[i] ? e.first : e.second) += 1;
  }
  SurvivalCurve c;
  auto risk = static_cast<std::int64_t>(times.size());
  double s = 1.0, gw_sum = 0.0;
  for (const auto& [t, de] : tally) {
    const auto [d, cens] = de;
    c.times.push_back(t);
    c.at_risk.push_back(risk);
    c.events.push_back(d);
    c.censored.push_back(cens);
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(risk);
      if (risk > d) gw_sum += static_cast<double>(d) / (static_cast<double>(risk) * static_cast<double>(risk - d));
    }
    c.survival.push_back(s);
    c.greenwood_var.push_back(s > 0 ? s * s * gw_sum : 0.0);
    risk -= d + cens;
  }
  return c;
}

// ∫₀^τ S(t) dt, exact for the step function.
inline double rmst(const SurvivalCurve& c, double tau) {
  if (tau < 0) throw DomainError("tau must be non-negative");
  double area = 0.0, prev_t = 0.0, prev_s = 1.0;
  for (std::size_t i = 0; i < c.times.size() && c.times[i] < tau; ++i) {
    area += (c.times[i] - prev_t) * prev_s;
    prev_t = c.times[i];
    prev_s = c.survival[i];
  }
  return area + (tau - prev_t) * prev_s;
}

// Greenwood-type variance: Σ_{t_j ≤ τ} A_j² d_j / (n_j (n_j - d_j)),
// A_j = ∫_{t_j}^τ S(t) dt.
inline double rmst_variance(const SurvivalCurve& c, double tau) {
  const double total = rmst(c, tau);
  double var = 0.0, before = 0.0, prev_t = 0.0, prev_s = 1.0;
  for (std::size_t i = 0; i < c.times.size() && c.times[i] <= tau; ++i) {
    before += (c.times[i] - prev_t) * prev_s;  // ∫₀^{t_i}
    prev_t = c.times[i];
    prev_s = c.survival[i];
    const auto n = c.at_risk[i], d = c.events[i];
    if (d == 0 || n == d) continue;
    const double a = total - before;
    var += a * a * static_cast<double>(d) / (static_cast<double>(n) * static_cast<double>(n - d));
  }
  return var;
}

struct SurvivalSample {
  std::vector<double> times;
  std::vector<bool> events;

  static SurvivalSample complete(std::vector<double> t) {
    SurvivalSample s{std::move(t), {}};
    s.events.assign(s.times.size(), true);
    return s;
  }
};

// RMST(a) - RMST(b) up to τ with a z-based 95% interval.
inline TestResult rmst_diff(const SurvivalSample& a, const SurvivalSample& b, double tau) {
  const auto ka = kaplan_meier(a.times, a.events);
  const auto kb = kaplan_meier(b.times, b.events);
  if (!(tau > 0)) throw DomainError("tau must be positive");
  if (tau > ka.max_time() || tau > kb.max_time())
    throw DomainError("tau " + std::to_string(tau) + " exceeds follow-up (max observed " +
                      std::to_string(std::min(ka.max_time(), kb.max_time())) + ")");
  const double ra = rmst(ka, tau), rb = rmst(kb, tau);
  const double va = rmst_variance(ka, tau), vb = rmst_variance(kb, tau);
  const double diff = ra - rb, se = std::sqrt(va + vb);
  TestResult r;
  r.test = TestKind::rmst_diff;
  r.effect = diff;
  if (se > 0) {
    r.statistic = diff / se;
    r.p = dist::normal_two_sided_p(r.statistic);
  } else {
    r.statistic = 0.0;
    r.p = diff == 0.0 ? 1.0 : 0.0;
  }
  const double z = dist::normal_quantile(0.975);
  r.ci95 = std::pair{diff - z * se, diff + z * se};
  r.details = {{"rmst_a", ra}, {"rmst_b", rb}, {"se_a", std::sqrt(va)}, {"se_b", std::sqrt(vb)}, {"tau", tau},
               {"n_a", static_cast<double>(a.times.size())}, {"n_b", static_cast<double>(b.times.size())}};
  return r;
}

inline nlohmann::json to_json(const TestResult& r) {
  nlohmann::json j{{"test", test_name(r.test)}, {"statistic", r.statistic}, {"p", r.p}};
  j["df"] = r.df ? nlohmann::json(*r.df) : nlohmann::json(nullptr);
  j["effect"] = r.effect ? nlohmann::json(*r.effect) : nlohmann::json(nullptr);
  j["ci95"] = r.ci95 ? nlohmann::json{r.ci95->first, r.ci95->second} : nlohmann::json(nullptr);
  if (r.ci95_lower_one_sided) j["ci95_lower_one_sided"] = *r.ci95_lower_one_sided;
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [k, v] : r.details) d[k] = v;
  j["details"] = std::move(d);
  return j;
}

}  // namespace cyclecount
