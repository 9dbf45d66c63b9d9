#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace cyclecount {

// Wall-clock timestamp at minute precision, stored as minutes since
// 1970-01-01T00:00 of the local civil calendar. No time zone or DST rules are
// applied: a recorded 02:30 is simply 02:30.
struct Timestamp {
  std::int64_t minutes = 0;

  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;

  constexpr Timestamp plus_minutes(std::int64_t m) const { return {minutes + m}; }
  constexpr std::int64_t hour_index() const { return floor_div(minutes, 60); }
  constexpr Timestamp floor_hour() const { return {hour_index() * 60}; }

  static constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
  }

  static Timestamp from_civil(int y, unsigned mo, unsigned d, int h = 0, int mi = 0) {
    using namespace std::chrono;
    const sys_days days{year{y} / month{mo} / day{d}};
    return {static_cast<std::int64_t>(days.time_since_epoch().count()) * 1440 + h * 60 + mi};
  }

  // 0 = Monday ... 6 = Sunday.
  int iso_weekday0() const {
    using namespace std::chrono;
    const sys_days days{std::chrono::days{floor_div(minutes, 1440)}};
    return static_cast<int>(weekday{days}.iso_encoding()) - 1;
  }

  int hour_of_day() const { return static_cast<int>((minutes - floor_div(minutes, 1440) * 1440) / 60); }
};

// Accepts "YYYY-MM-DDTHH:MM", optional ":SS" (truncated), and a space in
// place of 'T'. A bare date means midnight.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '"' || s.back() == '\r')) s.remove_suffix(1);
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
  };
  int y, mo, d, h = 0, mi = 0, sec = 0;
  if (!digits(0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
      !digits(8, 2, d))
    return std::nullopt;
  if (s.size() > 10) {
    if ((s[10] != 'T' && s[10] != ' ') || !digits(11, 2, h) || s.size() < 16 || s[13] != ':' ||
        !digits(14, 2, mi))
      return std::nullopt;
    std::size_t pos = 16;
    if (s.size() > pos) {
      if (s[pos] != ':' || !digits(pos + 1, 2, sec)) return std::nullopt;
      pos += 3;
      if (s.size() > pos && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
      }
      if (s.size() != pos) return std::nullopt;
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return Timestamp::from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi);
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const std::int64_t day_index = Timestamp::floor_div(t.minutes, 1440);
  const year_month_day ymd{sys_days{days{day_index}}};
  const std::int64_t rem = t.minutes - day_index * 1440;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 60), static_cast<int>(rem % 60));
  return buf;
}

}  // namespace cyclecount
