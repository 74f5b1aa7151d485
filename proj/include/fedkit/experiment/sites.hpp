#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedkit/core/json_util.hpp"
#include "fedkit/experiment/command.hpp"
#include "fedkit/model/json_io.hpp"
#include "fedkit/netem/link.hpp"

namespace fedkit::experiment {

struct LinkSpec {
  std::string peer;
  netem::LinkModel model;
};

struct SiteDescriptor {
  std::string id;
  model::MappingTable table;
  CommandSet allow_list;
  std::vector<LinkSpec> links;
  std::string token;  // static operator token for the command API
};

/// Everything an experiment is validated and run against: the canonical
/// model plus the configured sites.
struct Registry {
  model::CanonicalModel model;
  std::map<std::string, SiteDescriptor> sites;

  const SiteDescriptor* site(const std::string& id) const {
    auto it = sites.find(id);
    return it == sites.end() ? nullptr : &it->second;
  }

  /// Directed link from -> to. A link declared only in the other direction
  /// is reused symmetrically.
  std::optional<netem::LinkModel> link(const std::string& from, const std::string& to) const {
    if (const auto* s = site(from))
      for (const auto& l : s->links)
        if (l.peer == to) return l.model;
    if (const auto* s = site(to))
      for (const auto& l : s->links)
        if (l.peer == from) return l.model;
    return std::nullopt;
  }

  /// Replaces every configured link with `m` (used for latency sweeps).
  void set_all_links(const netem::LinkModel& m) {
    for (auto& [_, s] : sites)
      for (auto& l : s.links) l.model = m;
  }
};

inline std::string link_id(const std::string& from, const std::string& to) { return from + "->" + to; }

inline SimTime millis_to_ns(double ms) { return SimTime{std::llround(ms * 1e6)}; }

inline netem::Jitter jitter_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "none") return netem::Jitter::none();
    fail(ErrorCode::SchemaError, "bad-jitter " + where);
  }
  ObjectReader r(j, where);
  netem::Jitter out;
  if (r.has("uniform_ms")) {
    out = netem::Jitter::uniform(millis_to_ns(r.required<double>("uniform_ms")));
  } else if (r.has("normal_sigma_ms")) {
    out = netem::Jitter::normal(millis_to_ns(r.required<double>("normal_sigma_ms")));
  } else {
    fail(ErrorCode::SchemaError, "bad-jitter " + where + ": expected uniform_ms or normal_sigma_ms");
  }
  r.finish();
  return out;
}

inline Json jitter_to_json(const netem::Jitter& j) {
  const double ms = static_cast<double>(j.amplitude.count()) * 1e-6;
  switch (j.kind) {
    case netem::JitterKind::none: return "none";
    case netem::JitterKind::uniform: return Json{{"uniform_ms", ms}};
    case netem::JitterKind::normal: return Json{{"normal_sigma_ms", ms}};
  }
  return "none";
}

inline netem::LinkModel link_model_from_json(ObjectReader& r) {
  netem::LinkModel m;
  m.base_delay = millis_to_ns(r.optional<double>("base_delay_ms", 0.0));
  if (const Json* j = r.raw_optional("jitter")) m.jitter = jitter_from_json(*j, r.at("jitter"));
  m.loss_prob = r.optional<double>("loss", 0.0);
  m.non_overtaking = r.optional<bool>("non_overtaking", false);
  m.seed = r.optional<std::uint64_t>("seed", 0);
  return m;
}

inline Json link_model_to_json(const netem::LinkModel& m) {
  return {{"base_delay_ms", static_cast<double>(m.base_delay.count()) * 1e-6},
          {"jitter", jitter_to_json(m.jitter)},
          {"loss", m.loss_prob},
          {"non_overtaking", m.non_overtaking},
          {"seed", m.seed}};
}

namespace detail {

inline Json load_ref(const Json& j, const std::filesystem::path& base, const std::string& where) {
  if (j.is_string()) {
    const auto path = (base / j.get<std::string>()).string();
    return parse_json_text(read_text_file(path), path);
  }
  if (!j.is_object()) fail(ErrorCode::SchemaError, "bad-type " + where + ": path or object expected");
  return j;
}

}  // namespace detail

/// Parses a sites document. `model` and each site's `mapping` may be inline
/// objects or paths relative to `base_dir`. Any defect is a ConfigError.
inline Registry registry_from_json(const Json& doc, const std::filesystem::path& base_dir = ".") {
  try {
    ObjectReader r(doc, "sites_file");
    r.optional<std::string>("version", "");
    Registry reg;
    reg.model = model::canonical_model_from_json(detail::load_ref(r.raw("model"), base_dir, r.at("model")));
    if (auto issues = model::validate_model(reg.model); !issues.empty())
      fail(ErrorCode::ConfigError, "canonical model invalid: " + issues.front().str());

    const Json& sites = require_array(r.raw("sites"), r.at("sites"));
    for (std::size_t i = 0; i < sites.size(); ++i) {
      ObjectReader sr(sites[i], r.at("sites") + "[" + std::to_string(i) + "]");
      SiteDescriptor site;
      site.id = sr.required<std::string>("id");
      site.table = model::mapping_table_from_json(detail::load_ref(sr.raw("mapping"), base_dir, sr.at("mapping")));
      if (site.table.site_id() != site.id)
        fail(ErrorCode::ConfigError, "mapping table of " + site.id + " declares site " + site.table.site_id());
      if (auto issues = model::validate_table(site.table, reg.model); !issues.empty())
        fail(ErrorCode::ConfigError, "mapping table of " + site.id + " invalid: " + issues.front().str());
      for (const auto& name : sr.optional<std::vector<std::string>>("allow", {})) {
        auto kind = command_kind_from_string(name);
        if (!kind) fail(ErrorCode::ConfigError, "unknown command kind '" + name + "' in allow list of " + site.id);
        site.allow_list.insert(*kind);
      }
      site.token = sr.optional<std::string>("token", "");
      if (const Json* links = sr.raw_optional("links")) {
        require_array(*links, sr.at("links"));
        for (std::size_t k = 0; k < links->size(); ++k) {
          ObjectReader lr((*links)[k], sr.at("links") + "[" + std::to_string(k) + "]");
          LinkSpec spec;
          spec.peer = lr.required<std::string>("peer");
          spec.model = link_model_from_json(lr);
          lr.finish();
          spec.model.check();
          site.links.push_back(std::move(spec));
        }
      }
      sr.finish();
      if (reg.sites.count(site.id)) fail(ErrorCode::ConfigError, "duplicate site " + site.id);
      reg.sites.emplace(site.id, std::move(site));
    }
    r.finish();
    for (const auto& [id, s] : reg.sites)
      for (const auto& l : s.links)
        if (!reg.sites.count(l.peer)) fail(ErrorCode::ConfigError, "link of " + id + " names unknown peer " + l.peer);
    return reg;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    fail(ErrorCode::ConfigError, e.what());
  }
}

inline Registry load_registry(const std::string& path) {
  Json doc;
  try {
    doc = parse_json_text(read_text_file(path), path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return registry_from_json(doc, std::filesystem::path(path).parent_path());
}

}  // namespace fedkit::experiment
