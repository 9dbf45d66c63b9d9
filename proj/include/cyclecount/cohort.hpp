#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecount/csv.hpp"
#include "cyclecount/errors.hpp"
#include "cyclecount/ingest.hpp"

namespace cyclecount {

// ICD-10 prefix -> weight table with longest-prefix matching. Entries sharing
// a category are deduplicated per visit: a category contributes its largest
// matched weight once.
class WeightTable {
public:
  struct Entry {
    std::string prefix;
    double weight = 0.0;
    std::string category;
  };

  WeightTable() = default;

  WeightTable(std::string name, std::vector<Entry> entries) : name_(std::move(name)) {
    for (auto& e : entries) add(std::move(e));
  }

  void add(Entry e) {
    e.prefix = normalize_icd(e.prefix);
    if (e.prefix.empty()) throw DomainError("weight table '" + name_ + "': empty prefix");
    if (!std::isfinite(e.weight)) throw DomainError("weight table '" + name_ + "': non-finite weight for " + e.prefix);
    if (e.category.empty()) e.category = e.prefix;
    if (index_.count(e.prefix)) throw DomainError("weight table '" + name_ + "': duplicate prefix " + e.prefix);
    max_prefix_ = std::max(max_prefix_, e.prefix.size());
    index_.emplace(e.prefix, entries_.size());
    entries_.push_back(std::move(e));
  }

  const std::string& name() const { return name_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // nullptr when no prefix of `code` is in the table.
  const Entry* match(std::string_view code) const {
    const std::size_t longest = std::min(code.size(), max_prefix_);
    for (std::size_t len = longest; len > 0; --len) {
      auto it = index_.find(std::string(code.substr(0, len)));
      if (it != index_.end()) return &entries_[it->second];
    }
    return nullptr;
  }

  // Sum over distinct matched categories. Codes are normalized here too, so
  // raw "F05.0" works.
  double score(const std::vector<std::string>& codes) const {
    std::map<std::string_view, double> best;
    for (const auto& raw : codes) {
      const auto code = normalize_icd(raw);
      if (const Entry* e = match(code)) {
        auto [it, inserted] = best.emplace(e->category, e->weight);
        if (!inserted) it->second = std::max(it->second, e->weight);
      }
    }
    double total = 0.0;
    for (const auto& [_, w] : best) total += w;
    return total;
  }

  // Accepts {"name": ..., "entries": {"F05": 3.2, "C77": {"weight": 6, "category": "metastatic"}}}
  // or "entries" as an array of {"prefix", "weight", "category"} objects.
  static WeightTable from_json(const nlohmann::json& j) {
    WeightTable t;
    t.name_ = j.value("name", std::string{"table"});
    if (!j.contains("entries")) throw DomainError("weight table '" + t.name_ + "': missing 'entries'");
    const auto& entries = j.at("entries");
    auto from_value = [&](const std::string& prefix, const nlohmann::json& v) {
      Entry e{prefix, 0.0, {}};
      if (v.is_number()) {
        e.weight = v.get<double>();
      } else if (v.is_object()) {
        e.weight = v.at("weight").get<double>();
        e.category = v.value("category", std::string{});
      } else {
        throw DomainError("weight table '" + t.name_ + "': bad entry for " + prefix);
      }
      t.add(std::move(e));
    };
    if (entries.is_object()) {
      for (auto it = entries.begin(); it != entries.end(); ++it) from_value(it.key(), it.value());
    } else if (entries.is_array()) {
      for (const auto& v : entries) from_value(v.at("prefix").get<std::string>(), v);
    } else {
      throw DomainError("weight table '" + t.name_ + "': 'entries' must be an object or array");
    }
    return t;
  }

  static WeightTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weight table: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DomainError("weight table " + path + ": " + e.what());
    }
    return from_json(j);
  }

private:
  std::string name_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t max_prefix_ = 0;
};

inline double hfrs_score(const std::vector<std::string>& codes, const WeightTable& table) {
  return table.score(codes);
}

inline int charlson_score(const std::vector<std::string>& codes, const WeightTable& table) {
  const double s = table.score(codes);
  const double r = std::round(s);
  if (std::abs(s - r) > 1e-9) throw DomainError("charlson table '" + table.name() + "' has non-integer weights");
  return static_cast<int>(r);
}

struct CohortConfig {
  int frail_age_min = 75;
  double hfrs_threshold = 5.0;
};

// Both thresholds inclusive.
inline bool classify_frail(int age, double hfrs, const CohortConfig& cfg = {}) {
  return age >= cfg.frail_age_min && hfrs >= cfg.hfrs_threshold;
}

struct CohortLabel {
  bool frail = false;
  double hfrs = 0.0;
  int charlson = 0;
  int age = 0;
};

struct ScoredVisit {
  VisitRecord visit;
  CohortLabel label;
};

inline ScoredVisit score_visit(const VisitRecord& v, const WeightTable& hfrs, const WeightTable& charlson,
                               const CohortConfig& cfg = {}) {
  const auto codes = v.codes();
  CohortLabel l;
  l.age = v.age;
  l.hfrs = hfrs_score(codes, hfrs);
  l.charlson = charlson_score(codes, charlson);
  l.frail = classify_frail(v.age, l.hfrs, cfg);
  return {v, l};
}

inline std::vector<ScoredVisit> score_visits(const std::vector<VisitRecord>& visits, const WeightTable& hfrs,
                                             const WeightTable& charlson, const CohortConfig& cfg = {}) {
  std::vector<ScoredVisit> out;
  out.reserve(visits.size());
  for (const auto& v : visits) out.push_back(score_visit(v, hfrs, charlson, cfg));
  return out;
}

// Scored visit file: the visit columns followed by hfrs, charlson, frail.
inline void write_scored(std::ostream& out, const std::vector<ScoredVisit>& visits) {
  auto header = visit_columns();
  header.insert(header.end(), {"hfrs", "charlson", "frail"});
  csv::write_row(out, header);
  for (const auto& s : visits) {
    auto f = visit_fields(s.visit);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", s.label.hfrs);
    f.insert(f.end(), {buf, std::to_string(s.label.charlson), s.label.frail ? "1" : "0"});
    csv::write_row(out, f);
  }
}

struct ScoredParseResult {
  std::vector<ScoredVisit> visits;
  std::vector<MalformedRow> malformed;
};

inline ScoredParseResult read_scored(std::istream& in, const Schema& schema = {}) {
  const auto table = csv::read(in, schema.delimiter);
  const auto rs = ResolvedSchema::resolve(table, schema);
  auto need = [&](const char* name) {
    int i = table.column(name);
    if (i < 0) throw SchemaError(name);
    return i;
  };
  const int ih = need("hfrs"), ic = need("charlson"), ifr = need("frail");
  ScoredParseResult out;
  for (const auto& row : table.rows) {
    auto parsed = parse_visit_row(row, rs, schema);
    if (auto* m = std::get_if<MalformedRow>(&parsed)) {
      out.malformed.push_back(*m);
      continue;
    }
    auto& v = std::get<VisitRecord>(parsed);
    const auto n = static_cast<int>(row.fields.size());
    if (n <= std::max({ih, ic, ifr})) {
      out.malformed.push_back({row.line, "", "missing score columns"});
      continue;
    }
    ScoredVisit s{v, {}};
    s.label.age = v.age;
    char* end = nullptr;
    s.label.hfrs = std::strtod(row.fields[ih].c_str(), &end);
    auto ch = detail::parse_int(row.fields[ic]);
    auto fr = detail::parse_bool(row.fields[ifr]);
    if (end == row.fields[ih].c_str() || !ch || !fr) {
      out.malformed.push_back({row.line, "hfrs/charlson/frail", "unparseable score column"});
      continue;
    }
    s.label.charlson = *ch;
    s.label.frail = *fr;
    out.visits.push_back(std::move(s));
  }
  return out;
}

}  // namespace cyclecount
