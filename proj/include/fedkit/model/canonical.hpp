#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fedkit/model/units.hpp"

namespace fedkit::model {

enum class EntryKind { measurement, setpoint, status };

constexpr std::string_view to_string(EntryKind k) {
  switch (k) {
    case EntryKind::measurement: return "measurement";
    case EntryKind::setpoint: return "setpoint";
    case EntryKind::status: return "status";
  }
  return "measurement";
}

enum class DomainKind { real, boolean, enumeration };

struct ValueDomain {
  DomainKind kind{DomainKind::real};
  std::vector<std::string> labels;  // enumeration only

  friend bool operator==(const ValueDomain&, const ValueDomain&) = default;
};

struct CanonicalEntry {
  std::string name;
  EntryKind kind{EntryKind::measurement};
  std::string unit;
  ValueDomain domain;
};

struct CanonicalModel {
  std::string version{"1.0.0"};
  std::vector<UnitDef> units;
  std::vector<CanonicalEntry> entries;

  const CanonicalEntry* find_entry(std::string_view name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  const UnitDef* find_unit(const std::string& symbol) const {
    return model::find_unit(units, symbol);
  }
  const UnitDef& unit_of(const CanonicalEntry& e) const {
    const UnitDef* u = find_unit(e.unit);
    if (!u) fail(ErrorCode::IncompatibleUnit, "unknown-unit " + e.unit);
    return *u;
  }
};

struct Issue {
  std::string code;
  std::string subject;

  std::string str() const { return code + " " + subject; }
  friend auto operator<=>(const Issue&, const Issue&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Issue& i) { return os << i.str(); }

using ValidationIssues = std::vector<Issue>;

/// Dot-separated path of identifier segments, e.g. `siteA.feeder1.busB.voltage`.
inline bool is_topic_path(std::string_view name) {
  if (name.empty()) return false;
  std::size_t seg_len = 0;
  for (char c : name) {
    if (c == '.') {
      if (seg_len == 0) return false;
      seg_len = 0;
      continue;
    }
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    if (!ok) return false;
    ++seg_len;
  }
  return seg_len > 0 && name.find('.') != std::string_view::npos;
}

/// Lists every invariant violation; the result is sorted so permuting the
/// input never changes it.
inline ValidationIssues validate_model(const CanonicalModel& model) {
  ValidationIssues issues;

  std::map<std::string, int> unit_count;
  for (const auto& u : model.units) ++unit_count[u.symbol];
  for (const auto& [sym, n] : unit_count)
    if (n > 1) issues.push_back({"duplicate-unit", sym});
  for (const auto& u : model.units) {
    if (!(u.scale > 0.0)) issues.push_back({"bad-unit-scale", u.symbol});
    if (u.is_base() && (u.scale != 1.0 || u.offset != 0.0))
      issues.push_back({"bad-base-unit", u.symbol});
    if (!u.is_base()) {
      const UnitDef* base = model.find_unit(u.base_symbol);
      if (!base || !base->is_base()) issues.push_back({"unknown-base-unit", u.base_symbol});
    }
  }

  std::map<std::string, int> name_count;
  for (const auto& e : model.entries) ++name_count[e.name];
  for (const auto& [name, n] : name_count)
    if (n > 1) issues.push_back({"duplicate-name", name});

  for (const auto& e : model.entries) {
    if (!is_topic_path(e.name)) issues.push_back({"bad-name", e.name.empty() ? "<empty>" : e.name});
    if (!unit_count.count(e.unit)) issues.push_back({"unknown-unit", e.unit});
    if (e.domain.kind == DomainKind::enumeration && e.domain.labels.empty())
      issues.push_back({"empty-enumeration", e.name});
  }

  std::sort(issues.begin(), issues.end());
  issues.erase(std::unique(issues.begin(), issues.end()), issues.end());
  return issues;
}

}  // namespace fedkit::model
