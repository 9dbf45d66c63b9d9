#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "cyclecount/csv.hpp"
#include "cyclecount/errors.hpp"
#include "cyclecount/time.hpp"

namespace cyclecount {

enum class CodeStage { admission, discharge };

struct IcdCode {
  std::string code;
  CodeStage stage = CodeStage::admission;
  bool operator==(const IcdCode&) const = default;
};

struct VisitRecord {
  std::string visit_id;
  Timestamp arrival;
  Timestamp departure;
  int age = 0;
  std::vector<IcdCode> icd_codes;
  int triage = 0;  // MTS category 1..5
  bool admitted = false;

  std::int64_t los_minutes() const { return departure.minutes - arrival.minutes; }

  // Admission and discharge codes pooled, in record order.
  std::vector<std::string> codes() const {
    std::vector<std::string> out;
    out.reserve(icd_codes.size());
    for (const auto& c : icd_codes) out.push_back(c.code);
    return out;
  }

  bool operator==(const VisitRecord&) const = default;
};

// Uppercase, drop dots and whitespace: "f05.0 " -> "F050".
inline std::string normalize_icd(std::string_view code) {
  std::string out;
  out.reserve(code.size());
  for (char c : code) {
    if (c == '.' || std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

// Logical field -> header name in the input file.
struct Schema {
  char delimiter = ',';
  std::string visit_id = "visit_id";
  std::string arrival = "arrival";
  std::string departure = "departure";
  std::string age = "age";
  std::string icd_admission = "icd_admission";
  std::string icd_discharge = "icd_discharge";
  std::string mts = "mts";
  std::string admitted = "admitted";
};

struct MalformedRow {
  std::size_t line = 0;
  std::string field;
  std::string reason;
};

struct ParseResult {
  std::vector<VisitRecord> records;
  std::vector<MalformedRow> malformed;
};

namespace detail {

inline std::optional<int> parse_int(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  std::string v;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)))
      v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (v == "1" || v == "true" || v == "yes" || v == "y" || v == "t") return true;
  if (v == "0" || v == "false" || v == "no" || v == "n" || v == "f") return false;
  return std::nullopt;
}

inline std::vector<std::string> split_codes(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(';', start);
    if (end == std::string_view::npos) end = s.size();
    auto code = normalize_icd(s.substr(start, end - start));
    if (!code.empty()) out.push_back(std::move(code));
    start = end + 1;
  }
  return out;
}

}  // namespace detail

// Column indices resolved against a header; throws SchemaError naming the
// first missing column.
struct ResolvedSchema {
  int visit_id, arrival, departure, age, icd_admission, icd_discharge, mts, admitted;

  static ResolvedSchema resolve(const csv::Table& t, const Schema& s) {
    auto need = [&](const std::string& name) {
      int i = t.column(name);
      if (i < 0) throw SchemaError(name);
      return i;
    };
    return {need(s.visit_id), need(s.arrival),       need(s.departure), need(s.age),
            need(s.icd_admission), need(s.icd_discharge), need(s.mts), need(s.admitted)};
  }
};

// Parses one data row; returns the first field-level problem instead of a
// record when the row is malformed.
inline std::variant<VisitRecord, MalformedRow> parse_visit_row(const csv::Row& row,
                                                                const ResolvedSchema& rs,
                                                                const Schema& s) {
  auto bad = [&](const std::string& field, std::string reason) {
    return MalformedRow{row.line, field, std::move(reason)};
  };
  const int max_index = std::max({rs.visit_id, rs.arrival, rs.departure, rs.age, rs.icd_admission,
                                  rs.icd_discharge, rs.mts, rs.admitted});
  if (static_cast<int>(row.fields.size()) <= max_index)
    return bad("", "expected at least " + std::to_string(max_index + 1) + " fields, got " +
                       std::to_string(row.fields.size()));
  const auto& f = row.fields;
  VisitRecord r;
  r.visit_id = f[rs.visit_id];
  if (r.visit_id.empty()) return bad(s.visit_id, "empty visit id");
  auto arrival = parse_timestamp(f[rs.arrival]);
  if (!arrival) return bad(s.arrival, "unparseable timestamp '" + f[rs.arrival] + "'");
  auto departure = parse_timestamp(f[rs.departure]);
  if (!departure) return bad(s.departure, "unparseable timestamp '" + f[rs.departure] + "'");
  auto age = detail::parse_int(f[rs.age]);
  if (!age) return bad(s.age, "unparseable age '" + f[rs.age] + "'");
  auto mts = detail::parse_int(f[rs.mts]);
  if (!mts || *mts < 1 || *mts > 5) return bad(s.mts, "triage must be an integer 1-5, got '" + f[rs.mts] + "'");
  auto admitted = detail::parse_bool(f[rs.admitted]);
  if (!admitted) return bad(s.admitted, "unparseable admission flag '" + f[rs.admitted] + "'");
  r.arrival = *arrival;
  r.departure = *departure;
  r.age = *age;
  r.triage = *mts;
  r.admitted = *admitted;
  for (auto& c : detail::split_codes(f[rs.icd_admission])) r.icd_codes.push_back({std::move(c), CodeStage::admission});
  for (auto& c : detail::split_codes(f[rs.icd_discharge])) r.icd_codes.push_back({std::move(c), CodeStage::discharge});
  return r;
}

inline ParseResult parse_visits(const csv::Table& table, const Schema& schema = {}) {
  const auto rs = ResolvedSchema::resolve(table, schema);
  ParseResult out;
  for (const auto& row : table.rows) {
    auto parsed = parse_visit_row(row, rs, schema);
    if (auto* rec = std::get_if<VisitRecord>(&parsed)) out.records.push_back(std::move(*rec));
    else out.malformed.push_back(std::get<MalformedRow>(std::move(parsed)));
  }
  return out;
}

inline ParseResult parse_visits(std::istream& in, const Schema& schema = {}) {
  return parse_visits(csv::read(in, schema.delimiter), schema);
}

// ---------------------------------------------------------------------------
// Cleansing

inline constexpr std::string_view kRuleDedupe = "dedupe";
inline constexpr std::string_view kRuleNonPositiveLos = "non_positive_los";
inline constexpr std::string_view kRuleExcessiveLos = "excessive_los";
inline constexpr std::string_view kRuleMinAge = "min_age";
inline constexpr std::string_view kRuleNoDiagnosis = "no_diagnosis";

struct CleanseConfig {
  std::int64_t los_cap_minutes = 600;  // LOS > cap removed; == cap kept
  int min_age = 18;
  // Per-record rules after deduplication; attribution follows this order.
  std::vector<std::string> rule_order{std::string(kRuleNonPositiveLos), std::string(kRuleExcessiveLos),
                                      std::string(kRuleMinAge), std::string(kRuleNoDiagnosis)};
};

struct CleanseReport {
  std::size_t input_count = 0;
  std::size_t retained_count = 0;
  std::map<std::string, std::size_t> removed_by_rule;
  std::vector<std::string> rule_order;

  std::size_t removed_total() const {
    std::size_t s = 0;
    for (const auto& [_, n] : removed_by_rule) s += n;
    return s;
  }
};

inline bool violates(std::string_view rule, const VisitRecord& r, const CleanseConfig& cfg) {
  if (rule == kRuleNonPositiveLos) return r.los_minutes() <= 0;
  if (rule == kRuleExcessiveLos) return r.los_minutes() > cfg.los_cap_minutes;
  if (rule == kRuleMinAge) return r.age < cfg.min_age;
  if (rule == kRuleNoDiagnosis) return r.icd_codes.empty();
  throw DomainError("unknown cleansing rule: " + std::string(rule));
}

// Dedupe (first visit_id occurrence wins) then the per-record rules in
// cfg.rule_order. Each removed record is attributed to the first rule it fails.
inline std::pair<std::vector<VisitRecord>, CleanseReport> cleanse(const std::vector<VisitRecord>& records,
                                                                   const CleanseConfig& cfg = {}) {
  CleanseReport report;
  report.input_count = records.size();
  report.rule_order.push_back(std::string(kRuleDedupe));
  report.removed_by_rule[std::string(kRuleDedupe)] = 0;
  for (const auto& rule : cfg.rule_order) {
    (void)violates(rule, VisitRecord{}, cfg);  // validates the name
    report.rule_order.push_back(rule);
    report.removed_by_rule[rule] = 0;
  }

  std::vector<VisitRecord> kept;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.visit_id).second) {
      ++report.removed_by_rule[std::string(kRuleDedupe)];
      continue;
    }
    bool removed = false;
    for (const auto& rule : cfg.rule_order) {
      if (violates(rule, r, cfg)) {
        ++report.removed_by_rule[rule];
        removed = true;
        break;
      }
    }
    if (!removed) kept.push_back(r);
  }
  report.retained_count = kept.size();
  return {std::move(kept), std::move(report)};
}

inline const std::vector<std::string>& visit_columns() {
  static const std::vector<std::string> cols{"visit_id", "arrival",       "departure", "age",
                                             "icd_admission", "icd_discharge", "mts",  "admitted"};
  return cols;
}

inline std::vector<std::string> visit_fields(const VisitRecord& r) {
  std::string adm, dis;
  for (const auto& c : r.icd_codes) {
    auto& dst = c.stage == CodeStage::admission ? adm : dis;
    if (!dst.empty()) dst.push_back(';');
    dst += c.code;
  }
  return {r.visit_id, format_timestamp(r.arrival), format_timestamp(r.departure), std::to_string(r.age),
          adm, dis, std::to_string(r.triage), r.admitted ? "1" : "0"};
}

inline void write_visits(std::ostream& out, const std::vector<VisitRecord>& records) {
  csv::write_row(out, visit_columns());
  for (const auto& r : records) csv::write_row(out, visit_fields(r));
}

}  // namespace cyclecount
