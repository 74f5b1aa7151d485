#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedkit/core/value.hpp"
#include "fedkit/model/canonical.hpp"

namespace fedkit::model {

struct MappingRow {
  std::string local_name;
  std::string canonical_name;
  std::string local_unit;
};

/// Bijective local <-> canonical name map for one site.
class MappingTable {
 public:
  MappingTable() = default;
  MappingTable(std::string site_id, std::vector<MappingRow> rows)
      : site_id_(std::move(site_id)), rows_(std::move(rows)) {
    reindex();
  }

  const std::string& site_id() const { return site_id_; }
  const std::vector<MappingRow>& rows() const { return rows_; }

  const MappingRow* by_local(const std::string& local) const {
    auto it = by_local_.find(local);
    return it == by_local_.end() ? nullptr : &rows_[it->second];
  }
  const MappingRow* by_canonical(const std::string& canonical) const {
    auto it = by_canonical_.find(canonical);
    return it == by_canonical_.end() ? nullptr : &rows_[it->second];
  }

 private:
  void reindex() {
    // First occurrence wins; duplicates are reported by validate_table.
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      by_local_.try_emplace(rows_[i].local_name, i);
      by_canonical_.try_emplace(rows_[i].canonical_name, i);
    }
  }

  std::string site_id_;
  std::vector<MappingRow> rows_;
  std::unordered_map<std::string, std::size_t> by_local_;
  std::unordered_map<std::string, std::size_t> by_canonical_;
};

inline ValidationIssues validate_table(const MappingTable& table, const CanonicalModel& model) {
  ValidationIssues issues;
  std::map<std::string, int> locals, canonicals;
  for (const auto& r : table.rows()) {
    ++locals[r.local_name];
    ++canonicals[r.canonical_name];
  }
  for (const auto& [n, c] : locals)
    if (c > 1) issues.push_back({"duplicate-local", n});
  for (const auto& [n, c] : canonicals)
    if (c > 1) issues.push_back({"duplicate-canonical", n});

  for (const auto& r : table.rows()) {
    const CanonicalEntry* entry = model.find_entry(r.canonical_name);
    const UnitDef* local_unit = model.find_unit(r.local_unit);
    if (!entry) issues.push_back({"unknown-canonical", r.canonical_name});
    if (!local_unit) issues.push_back({"unknown-unit", r.local_unit});
    if (entry && local_unit) {
      const UnitDef* canon_unit = model.find_unit(entry->unit);
      if (canon_unit && !convertible(*local_unit, *canon_unit))
        issues.push_back({"unit-incompatible", r.local_name});
    }
  }
  std::sort(issues.begin(), issues.end());
  issues.erase(std::unique(issues.begin(), issues.end()), issues.end());
  return issues;
}

namespace detail {

inline SignalSample translate(const SignalSample& sample, const std::string& new_topic,
                              const std::string& target_unit_symbol, const CanonicalModel& model) {
  const UnitDef* from = model.find_unit(sample.unit);
  const UnitDef* to = model.find_unit(target_unit_symbol);
  if (!from) fail(ErrorCode::IncompatibleUnit, "unknown unit '" + sample.unit + "' on " + sample.topic);
  if (!to) fail(ErrorCode::IncompatibleUnit, "unknown unit '" + target_unit_symbol + "'");
  if (!convertible(*from, *to))
    fail(ErrorCode::IncompatibleUnit, sample.topic + ": " + from->symbol + " -> " + to->symbol);

  SignalSample out = sample;
  out.topic = new_topic;
  out.unit = to->symbol;
  if (const double* v = std::get_if<double>(&sample.value)) out.value = convert(*v, *from, *to);
  return out;
}

}  // namespace detail

/// Local site sample -> canonical namespace and unit.
inline SignalSample to_canonical(const SignalSample& sample, const MappingTable& table,
                                 const CanonicalModel& model) {
  const MappingRow* row = table.by_local(sample.topic);
  if (!row) fail(ErrorCode::UnmappedTopic, sample.topic + " (site " + table.site_id() + ")");
  const CanonicalEntry* entry = model.find_entry(row->canonical_name);
  if (!entry) fail(ErrorCode::UnmappedTopic, row->canonical_name + " not in canonical model");
  return detail::translate(sample, entry->name, entry->unit, model);
}

/// Canonical sample -> this site's local name and unit.
inline SignalSample from_canonical(const SignalSample& sample, const MappingTable& table,
                                   const CanonicalModel& model) {
  const MappingRow* row = table.by_canonical(sample.topic);
  if (!row) fail(ErrorCode::UnmappedTopic, sample.topic + " (site " + table.site_id() + ")");
  return detail::translate(sample, row->local_name, row->local_unit, model);
}

}  // namespace fedkit::model
