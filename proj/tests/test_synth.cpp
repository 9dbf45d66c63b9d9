#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cyclecount/cohort.hpp"
#include "cyclecount/random.hpp"
#include "cyclecount/synth.hpp"

using namespace cyclecount;

namespace {

GeneratorConfig flat(std::int64_t weeks, double n_nf, double n_f) {
  GeneratorConfig g;
  g.weeks = weeks;
  g.normalize_intercept = true;
  g.groups[0].n = n_nf;
  g.groups[1].n = n_f;
  return g;
}

template <class F>
std::pair<double, double> moments(int n, F draw) {
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  return {m, (s2 - n * m * m) / (n - 1)};
}

}  // namespace

TEST(Rng, VersionAndStreamArePinned) {
  EXPECT_EQ(Rng::kRngVersion, 1);
  // splitmix64 seeding of xoshiro256**: reference values for seed 0.
  Rng a(0), b(0), c(1);
  const auto first = a.next();
  EXPECT_EQ(first, b.next());
  EXPECT_NE(first, c.next());
}

TEST(Rng, UniformAndBelow) {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
  auto [m, v] = moments(200000, [&] { return rng.uniform(); });
  EXPECT_NEAR(m, 0.5, 0.005);
  EXPECT_NEAR(v, 1.0 / 12, 0.002);
}

TEST(Rng, PoissonMoments) {
  Rng rng(2);
  for (double lambda : {0.3, 3.0, 9.9, 10.0, 47.0, 1500.0}) {
    auto [m, v] = moments(100000, [&] { return static_cast<double>(rng.poisson(lambda)); });
    const double se = std::sqrt(lambda / 100000);
    EXPECT_NEAR(m, lambda, 5 * se) << lambda;
    EXPECT_NEAR(v / lambda, 1.0, 0.03) << lambda;
  }
  EXPECT_EQ(rng.poisson(0), 0);
  EXPECT_THROW(rng.poisson(-1), DomainError);
}

TEST(Rng, GammaNormalNegativeBinomialMoments) {
  Rng rng(3);
  for (double shape : {0.5, 1.0, 4.0}) {
    auto [m, v] = moments(100000, [&] { return rng.gamma(shape, 2.0); });
    EXPECT_NEAR(m, 2 * shape, 0.03 * 2 * shape);
    EXPECT_NEAR(v, 4 * shape, 0.06 * 4 * shape);
  }
  auto [mn, vn] = moments(100000, [&] { return rng.normal(); });
  EXPECT_NEAR(mn, 0.0, 0.015);
  EXPECT_NEAR(vn, 1.0, 0.02);
  auto [mb, vb] = moments(100000, [&] { return static_cast<double>(rng.negative_binomial(6.0, 3.0)); });
  EXPECT_NEAR(mb, 6.0, 0.05);
  EXPECT_NEAR(vb, 6.0 + 36.0 / 3.0, 0.6);
}

TEST(SimulateCounts, SameSeedSameData) {
  GeneratorConfig g = flat(3, 2000, 500);
  g.coefficients = {{"alpha1", -0.5}, {"xi1", 0.2}};
  const auto a = simulate_counts(g, 42), b = simulate_counts(g, 42), c = simulate_counts(g, 43);
  EXPECT_EQ(a.non_frail.counts, b.non_frail.counts);
  EXPECT_EQ(a.frail.counts, b.frail.counts);
  EXPECT_NE(a.non_frail.counts, c.non_frail.counts);
}

TEST(SimulateCounts, FlatIntensityTotalsAndDispersion) {
  const std::int64_t weeks = 20;
  const double hours = weeks * 168.0, lambda = 6.0;
  const auto s = simulate_counts(flat(weeks, lambda * hours, 1.0 * hours), 5);
  EXPECT_NEAR(static_cast<double>(s.non_frail.total), lambda * hours, 4 * std::sqrt(lambda * hours));
  double pearson = 0;
  for (auto c : s.non_frail.counts) pearson += (static_cast<double>(c) - lambda) * (static_cast<double>(c) - lambda) / lambda;
  const double phi = pearson / (hours - 1);
  EXPECT_GE(phi, 0.9);
  EXPECT_LE(phi, 1.1);
}

TEST(SimulateCounts, FlatModelGivesFlatRates) {
  const std::int64_t weeks = 200;
  const auto s = simulate_counts(flat(weeks, 3.0 * weeks * 168, 1.0), 6);
  const auto rho = normalized_rates(s.non_frail);
  const double n = static_cast<double>(s.non_frail.total);
  for (double r : rho) EXPECT_NEAR(r * n, 3.0, 4 * std::sqrt(3.0 / weeks));
}

TEST(SimulateCounts, PerSlotVarianceMatchesMeanOverLongRuns) {
  GeneratorConfig g = flat(500, 4.0 * 500 * 168, 1.0);
  g.coefficients = {{"alpha1", -0.6}, {"beta1", 0.4}, {"a1", 0.1}};
  const auto s = simulate_counts(g, 7);
  std::array<double, kSlotsPerWeek> sum{}, sum2{};
  for (std::size_t t = 0; t < s.non_frail.hours(); ++t) {
    const auto i = static_cast<std::size_t>(s.non_frail.slot_of(t).index());
    const double c = static_cast<double>(s.non_frail.counts[t]);
    sum[i] += c;
    sum2[i] += c * c;
  }
  double ratio_mean = 0;
  for (std::size_t i = 0; i < kSlotsPerWeek; ++i) {
    const double m = sum[i] / 500, v = (sum2[i] - 500 * m * m) / 499;
    ratio_mean += v / m / kSlotsPerWeek;
  }
  EXPECT_NEAR(ratio_mean, 1.0, 0.05);
}

TEST(TrueCoefficients, InterceptNormalizesExpectedTotal) {
  GeneratorConfig g = flat(7, 12345, 678);
  g.coefficients = {{"a1", 0.2}, {"beta3", -0.4}, {"x1", 0.3}, {"eta2", 0.1}};
  const auto mu = expected_counts(g);
  double total = 0;
  for (double m : mu[0]) total += m;
  EXPECT_NEAR(total, 12345, 1e-6);
  const auto spec = g.implied_spec();
  EXPECT_EQ(spec.weekly, 1);
  EXPECT_EQ(spec.daily, 3);
  EXPECT_TRUE(spec.frail_interaction);
  EXPECT_EQ(true_coefficients(g).at("eta2"), 0.1);
}

TEST(SimulateArrivals, DeterministicBytesAndValidAttributes) {
  auto g = load_generator_config(std::string(CYCLECOUNT_DATA_DIR) + "/synth_small.json");
  const auto a = simulate_arrivals(g, 11), b = simulate_arrivals(g, 11);
  std::ostringstream oa, ob;
  write_simulated(oa, a);
  write_simulated(ob, b);
  EXPECT_EQ(oa.str(), ob.str());
  const auto period = g.period();
  for (const auto& s : a) {
    const auto& v = s.visit;
    EXPECT_TRUE(period.contains(v.arrival));
    EXPECT_GE(v.los_minutes(), 1);
    EXPECT_LE(v.los_minutes(), 600);
    EXPECT_GE(v.triage, 1);
    EXPECT_LE(v.triage, 5);
    if (s.frail) EXPECT_GE(v.age, 75);
    EXPECT_FALSE(v.icd_codes.empty());
  }
}

TEST(SimulateArrivals, ArrivalsMatchHourlyCounts) {
  auto g = load_generator_config(std::string(CYCLECOUNT_DATA_DIR) + "/synth_small.json");
  const auto counts = simulate_counts(g, 12);
  const auto visits = simulate_arrivals(g, 12);
  std::vector<std::int64_t> nf(counts.non_frail.hours()), f(counts.frail.hours());
  std::array<int, 60> minute{};
  for (const auto& s : visits) {
    const auto t = static_cast<std::size_t>(s.visit.arrival.hour_index() - g.period().start.hour_index());
    ++(s.frail ? f : nf)[t];
    ++minute[static_cast<std::size_t>(s.visit.arrival.minutes % 60)];
  }
  EXPECT_EQ(nf, counts.non_frail.counts);
  EXPECT_EQ(f, counts.frail.counts);
  // Minutes uniform within the hour: a loose χ² bound on 59 df.
  const double expect = static_cast<double>(visits.size()) / 60;
  double chi2 = 0;
  for (int m : minute) chi2 += (m - expect) * (m - expect) / expect;
  EXPECT_LT(chi2, 110);
}

TEST(SimulateArrivals, ShippedConfigsSeparateCohorts) {
  const auto hfrs = WeightTable::load(std::string(CYCLECOUNT_DATA_DIR) + "/hfrs_weights.json");
  const auto charlson = WeightTable::load(std::string(CYCLECOUNT_DATA_DIR) + "/charlson_weights.json");
  auto g = load_generator_config(std::string(CYCLECOUNT_DATA_DIR) + "/synth_small.json");
  for (const auto& s : simulate_arrivals(g, 13)) EXPECT_EQ(score_visit(s.visit, hfrs, charlson).label.frail, s.frail);
}

TEST(SimulateArrivals, ExactCellCounts) {
  auto g = load_generator_config(std::string(CYCLECOUNT_DATA_DIR) + "/synth_small.json");
  g.cell_counts = std::array<std::array<std::int64_t, 2>, 2>{{{300, 40}, {500, 70}}};
  std::array<std::array<std::int64_t, 2>, 2> seen{};
  for (const auto& s : simulate_arrivals(g, 14)) ++seen[gp_hours_flag(s.visit.arrival) ? 0 : 1][s.frail ? 1 : 0];
  EXPECT_EQ(seen, *g.cell_counts);
}

TEST(GeneratorConfig, ShippedReferenceConfig) {
  const auto g = load_generator_config(std::string(CYCLECOUNT_DATA_DIR) + "/synth_reference.json");
  EXPECT_EQ(g.implied_spec(), (FourierSpec{3, 7, false}));
  EXPECT_EQ(g.period_hours(), 83 * 168);
  EXPECT_EQ(g.groups[0].n, 42092);
  EXPECT_EQ(g.groups[1].n, 6025);
  EXPECT_THROW(generator_from_json(nlohmann::json::parse(R"({"groups":{}})")), DomainError);
  EXPECT_THROW(generator_from_json(nlohmann::json::parse(
                   R"({"normalize_intercept":true,"coefficients":{"alpha13":1},"groups":{"non-frail":{"N":1},"frail":{"N":1}}})")),
               DomainError);
}

TEST(Recovery, SmallExperimentAggregates) {
  GeneratorConfig g = flat(4, 4000, 1000);
  g.seed = 99;
  g.coefficients = {{"alpha1", -0.6}, {"beta1", -0.5}, {"a1", 0.1}};
  RecoveryOptions opt;
  opt.search = {0, 2, 0, 3};
  const auto r = recovery_experiment(g, 5, opt);
  EXPECT_EQ(r.replicates, 5u);
  EXPECT_EQ(r.failed, 0u);
  EXPECT_EQ(r.outcomes.size(), 5u);
  EXPECT_EQ(r.outcomes[3].seed, 99u ^ 3u);
  EXPECT_EQ(r.coverage.size(), 5u);
  for (const auto& [name, hits] : r.coverage) EXPECT_LE(hits, 5u) << name;
  EXPECT_NEAR(r.dispersion_mean, 1.0, 0.1);
  EXPECT_THROW(recovery_experiment(g, 0), DomainError);
}

TEST(Recovery, FitFailuresCarryReplicateIndex) {
  GeneratorConfig g = flat(2, 1000, 0);  // empty frail group
  g.coefficients = {{"alpha1", -0.5}};
  RecoveryOptions opt;
  opt.select_orders = false;
  const auto r = recovery_experiment(g, 2, opt);
  EXPECT_EQ(r.failed, 2u);
  EXPECT_NE(r.outcomes[1].error.find("replicate 1"), std::string::npos) << r.outcomes[1].error;
}
