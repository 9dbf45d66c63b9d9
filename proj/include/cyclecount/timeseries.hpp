#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cyclecount/cohort.hpp"
#include "cyclecount/csv.hpp"
#include "cyclecount/errors.hpp"
#include "cyclecount/time.hpp"

namespace cyclecount {

inline constexpr int kSlotsPerWeek = 168;

struct WeekSlot {
  int day = 0;   // 0 = Monday
  int hour = 0;  // 0..23

  constexpr int index() const { return 24 * day + hour; }
  static constexpr WeekSlot from_index(int i) { return {i / 24, i % 24}; }
  friend constexpr bool operator==(const WeekSlot&, const WeekSlot&) = default;
};

inline WeekSlot week_slot_of(Timestamp t) { return {t.iso_weekday0(), t.hour_of_day()}; }

enum class Group { non_frail = 0, frail = 1 };

inline const char* group_name(Group g) { return g == Group::frail ? "frail" : "non-frail"; }

inline Group parse_group(std::string_view s) {
  if (s == "frail") return Group::frail;
  if (s == "non-frail" || s == "non_frail" || s == "nonfrail") return Group::non_frail;
  throw DomainError("unknown group '" + std::string(s) + "'");
}

// Half-open hour window, [start, end) on selected weekdays.
struct GpHoursConfig {
  std::array<bool, 7> days{true, true, true, true, true, false, false};
  int start_hour = 7;
  int end_hour = 17;
};

inline bool gp_hours_flag(WeekSlot slot, const GpHoursConfig& cfg = {}) {
  return cfg.days[static_cast<std::size_t>(slot.day)] && slot.hour >= cfg.start_hour && slot.hour < cfg.end_hour;
}

inline bool gp_hours_flag(Timestamp t, const GpHoursConfig& cfg = {}) { return gp_hours_flag(week_slot_of(t), cfg); }

// [start, start + hours·60) with start on an hour boundary.
struct StudyPeriod {
  Timestamp start;
  std::int64_t hours = 0;

  Timestamp end() const { return start.plus_minutes(hours * 60); }
  bool contains(Timestamp t) const { return t >= start && t < end(); }

  // Smallest hour-aligned window holding every arrival.
  static StudyPeriod covering(const std::vector<ScoredVisit>& visits) {
    if (visits.empty()) throw DomainError("cannot derive a study period from zero visits");
    auto [lo, hi] = std::minmax_element(visits.begin(), visits.end(), [](const auto& a, const auto& b) {
      return a.visit.arrival < b.visit.arrival;
    });
    const Timestamp start = lo->visit.arrival.floor_hour();
    const Timestamp last = hi->visit.arrival.floor_hour();
    return {start, (last.minutes - start.minutes) / 60 + 1};
  }
};

struct SlotSeries {
  Group group = Group::non_frail;
  Timestamp start;
  std::vector<std::int64_t> counts;  // one per absolute hour
  std::int64_t total = 0;            // N

  std::size_t hours() const { return counts.size(); }
  Timestamp time_of(std::size_t t) const { return start.plus_minutes(static_cast<std::int64_t>(t) * 60); }
  WeekSlot slot_of(std::size_t t) const { return week_slot_of(time_of(t)); }

  // W_s: how many hours of the window fall in each slot.
  std::array<std::int64_t, kSlotsPerWeek> slot_occurrences() const {
    std::array<std::int64_t, kSlotsPerWeek> w{};
    if (counts.empty()) return w;
    const int first = slot_of(0).index();
    for (std::size_t t = 0; t < counts.size(); ++t) ++w[static_cast<std::size_t>((first + t) % kSlotsPerWeek)];
    return w;
  }
};

struct SeriesPair {
  SlotSeries non_frail;
  SlotSeries frail;

  const SlotSeries& operator[](Group g) const { return g == Group::frail ? frail : non_frail; }
};

// Counts each visit once in the hour of its arrival.
inline SeriesPair bin_hourly(const std::vector<ScoredVisit>& visits, const StudyPeriod& period) {
  if (period.hours <= 0) throw DomainError("study period must span at least one hour");
  if (period.start.minutes % 60 != 0) throw DomainError("study period must start on an hour boundary");
  SeriesPair out;
  out.non_frail = {Group::non_frail, period.start, std::vector<std::int64_t>(static_cast<std::size_t>(period.hours)), 0};
  out.frail = {Group::frail, period.start, std::vector<std::int64_t>(static_cast<std::size_t>(period.hours)), 0};
  for (const auto& v : visits) {
    const Timestamp a = v.visit.arrival;
    if (!period.contains(a))
      throw DomainError("visit " + v.visit.visit_id + " arrives at " + format_timestamp(a) +
                        ", outside the study period [" + format_timestamp(period.start) + ", " +
                        format_timestamp(period.end()) + ")");
    auto& s = v.label.frail ? out.frail : out.non_frail;
    ++s.counts[static_cast<std::size_t>((a.minutes - period.start.minutes) / 60)];
    ++s.total;
  }
  return out;
}

inline SeriesPair bin_hourly(const std::vector<ScoredVisit>& visits) {
  if (visits.empty()) throw DomainError("no visits to bin: input is empty after cleansing");
  return bin_hourly(visits, StudyPeriod::covering(visits));
}

// ρ_s = (mean count over occurrences of slot s) / N. Slots that never occur
// in the window get 0.
inline std::array<double, kSlotsPerWeek> normalized_rates(const SlotSeries& s) {
  if (s.total <= 0) throw DomainError(std::string("normalized rate undefined: group ") + group_name(s.group) + " has N = 0");
  std::array<double, kSlotsPerWeek> sums{};
  const auto w = s.slot_occurrences();
  const int first = s.hours() ? s.slot_of(0).index() : 0;
  for (std::size_t t = 0; t < s.counts.size(); ++t)
    sums[static_cast<std::size_t>((first + t) % kSlotsPerWeek)] += static_cast<double>(s.counts[t]);
  std::array<double, kSlotsPerWeek> rho{};
  for (std::size_t i = 0; i < rho.size(); ++i)
    rho[i] = w[i] ? sums[i] / static_cast<double>(w[i]) / static_cast<double>(s.total) : 0.0;
  return rho;
}

// Visit counts by GP-hours window (rows) and cohort (columns).
struct CohortTable {
  // [within=0 / outside=1][non-frail=0 / frail=1]
  std::array<std::array<std::int64_t, 2>, 2> cells{};

  std::int64_t row_total(int r) const { return cells[r][0] + cells[r][1]; }
  std::int64_t col_total(int c) const { return cells[0][c] + cells[1][c]; }
  std::int64_t total() const { return row_total(0) + row_total(1); }
};

inline CohortTable cohort_table(const std::vector<ScoredVisit>& visits, const GpHoursConfig& gp = {}) {
  CohortTable t;
  for (const auto& v : visits) ++t.cells[gp_hours_flag(v.visit.arrival, gp) ? 0 : 1][v.label.frail ? 1 : 0];
  return t;
}

inline void write_counts(std::ostream& out, const SeriesPair& series) {
  csv::write_row(out, {"t_iso", "slot_index", "group", "count"});
  for (const SlotSeries* s : {&series.non_frail, &series.frail})
    for (std::size_t t = 0; t < s->hours(); ++t)
      csv::write_row(out, {format_timestamp(s->time_of(t)), std::to_string(s->slot_of(t).index()),
                           group_name(s->group), std::to_string(s->counts[t])});
}

// Inverse of write_counts. Both groups must cover the same contiguous hours.
inline SeriesPair read_counts(std::istream& in) {
  const auto table = csv::read(in);
  for (const char* c : {"t_iso", "group", "count"})
    if (table.column(c) < 0) throw SchemaError(c);
  const int it = table.column("t_iso"), ig = table.column("group"), ic = table.column("count");
  std::map<std::int64_t, std::int64_t> by_group[2];
  for (const auto& row : table.rows) {
    auto ts = parse_timestamp(row.fields.at(static_cast<std::size_t>(it)));
    if (!ts) throw DomainError("line " + std::to_string(row.line) + ": unparseable t_iso");
    if (ts->minutes % 60 != 0) throw DomainError("line " + std::to_string(row.line) + ": t_iso not on an hour boundary");
    auto n = detail::parse_int(row.fields.at(static_cast<std::size_t>(ic)));
    if (!n || *n < 0) throw DomainError("line " + std::to_string(row.line) + ": count must be a non-negative integer");
    const Group g = parse_group(row.fields.at(static_cast<std::size_t>(ig)));
    by_group[static_cast<int>(g)][ts->minutes / 60] += *n;
  }
  if (by_group[0].empty() && by_group[1].empty()) throw DomainError("counts file has no rows");
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& m : by_group)
    if (!m.empty()) {
      lo = std::min(lo, m.begin()->first);
      hi = std::max(hi, m.rbegin()->first);
    }
  SeriesPair out;
  for (int g = 0; g < 2; ++g) {
    SlotSeries s{static_cast<Group>(g), Timestamp{lo * 60}, std::vector<std::int64_t>(static_cast<std::size_t>(hi - lo + 1)), 0};
    for (const auto& [h, n] : by_group[g]) {
      s.counts[static_cast<std::size_t>(h - lo)] = n;
      s.total += n;
    }
    (g ? out.frail : out.non_frail) = std::move(s);
  }
  return out;
}

}  // namespace cyclecount
