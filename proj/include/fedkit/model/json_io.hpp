#pragma once

#include <string>

#include "fedkit/core/json_util.hpp"
#include "fedkit/model/canonical.hpp"
#include "fedkit/model/mapping.hpp"

namespace fedkit::model {

inline EntryKind entry_kind_from_string(const std::string& s, const std::string& where) {
  if (s == "measurement") return EntryKind::measurement;
  if (s == "setpoint") return EntryKind::setpoint;
  if (s == "status") return EntryKind::status;
  fail(ErrorCode::SchemaError, "bad-kind " + where + ": '" + s + "'");
}

inline ValueDomain domain_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "real") return {DomainKind::real, {}};
    if (s == "boolean") return {DomainKind::boolean, {}};
    fail(ErrorCode::SchemaError, "bad-domain " + where + ": '" + s + "'");
  }
  ObjectReader r(j, where);
  ValueDomain d{DomainKind::enumeration, r.required<std::vector<std::string>>("enumeration")};
  r.finish();
  return d;
}

inline Json domain_to_json(const ValueDomain& d) {
  switch (d.kind) {
    case DomainKind::real: return "real";
    case DomainKind::boolean: return "boolean";
    case DomainKind::enumeration: return Json{{"enumeration", d.labels}};
  }
  return "real";
}

inline std::vector<UnitDef> units_from_json(const Json& arr, const std::string& where) {
  std::vector<UnitDef> units;
  require_array(arr, where);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    ObjectReader r(arr[i], where + "[" + std::to_string(i) + "]");
    UnitDef u;
    u.symbol = r.required<std::string>("symbol");
    u.base_symbol = r.required<std::string>("base");
    u.scale = r.optional<double>("scale", 1.0);
    u.offset = r.optional<double>("offset", 0.0);
    r.finish();
    units.push_back(std::move(u));
  }
  return units;
}

inline CanonicalModel canonical_model_from_json(const Json& j) {
  ObjectReader r(j, "model");
  CanonicalModel m;
  m.version = r.required<std::string>("version");
  m.units = units_from_json(r.raw("units"), r.at("units"));
  const Json& entries = require_array(r.raw("entries"), r.at("entries"));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string loc = r.at("entries") + "[" + std::to_string(i) + "]";
    ObjectReader er(entries[i], loc);
    CanonicalEntry e;
    e.name = er.required<std::string>("name");
    e.kind = entry_kind_from_string(er.required<std::string>("kind"), er.at("kind"));
    e.unit = er.required<std::string>("unit");
    if (const Json* d = er.raw_optional("domain")) e.domain = domain_from_json(*d, er.at("domain"));
    er.finish();
    m.entries.push_back(std::move(e));
  }
  r.finish();
  return m;
}

inline Json to_json(const CanonicalModel& m) {
  Json units = Json::array();
  for (const auto& u : m.units)
    units.push_back({{"symbol", u.symbol}, {"base", u.base_symbol}, {"scale", u.scale}, {"offset", u.offset}});
  Json entries = Json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"name", e.name},
                       {"kind", std::string(to_string(e.kind))},
                       {"unit", e.unit},
                       {"domain", domain_to_json(e.domain)}});
  return {{"version", m.version}, {"units", units}, {"entries", entries}};
}

inline MappingTable mapping_table_from_json(const Json& j) {
  ObjectReader r(j, "table");
  r.optional<std::string>("version", "");
  const auto site = r.required<std::string>("site");
  const Json& rows = require_array(r.raw("rows"), r.at("rows"));
  std::vector<MappingRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ObjectReader rr(rows[i], r.at("rows") + "[" + std::to_string(i) + "]");
    MappingRow row;
    row.local_name = rr.required<std::string>("local");
    row.canonical_name = rr.required<std::string>("canonical");
    row.local_unit = rr.required<std::string>("unit");
    rr.finish();
    out.push_back(std::move(row));
  }
  r.finish();
  return MappingTable(site, std::move(out));
}

inline Json to_json(const MappingTable& t) {
  Json rows = Json::array();
  for (const auto& row : t.rows())
    rows.push_back({{"local", row.local_name}, {"canonical", row.canonical_name}, {"unit", row.local_unit}});
  return {{"site", t.site_id()}, {"rows", rows}};
}

inline CanonicalModel load_canonical_model(const std::string& path) {
  return canonical_model_from_json(parse_json_text(read_text_file(path), path));
}

inline MappingTable load_mapping_table(const std::string& path) {
  return mapping_table_from_json(parse_json_text(read_text_file(path), path));
}

}  // namespace fedkit::model
