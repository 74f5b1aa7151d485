#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedkit/experiment/sites.hpp"
#include "fedkit/experiment/types.hpp"
#include "fedkit/plant/factory.hpp"

namespace fedkit::experiment {

enum class Layer { conceptual, semantical, syntactic, dynamic, technical };
enum class Severity { error, warning };

inline constexpr std::array<Layer, 5> kAllLayers{Layer::conceptual, Layer::semantical, Layer::syntactic,
                                                 Layer::dynamic, Layer::technical};

constexpr std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::conceptual: return "conceptual";
    case Layer::semantical: return "semantical";
    case Layer::syntactic: return "syntactic";
    case Layer::dynamic: return "dynamic";
    case Layer::technical: return "technical";
  }
  return "conceptual";
}

constexpr std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

struct ValidationIssue {
  Layer layer{Layer::conceptual};
  Severity severity{Severity::error};
  std::string code;
  std::string message;
  std::string location;

  friend auto operator<=>(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;  // sorted

  std::size_t errors() const { return count(Severity::error); }
  std::size_t warnings() const { return count(Severity::warning); }
  bool valid() const { return errors() == 0; }

  std::vector<ValidationIssue> layer(Layer l) const {
    std::vector<ValidationIssue> out;
    for (const auto& i : issues)
      if (i.layer == l) out.push_back(i);
    return out;
  }

  bool has(std::string_view code) const {
    return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.code == code; });
  }

  Json to_json() const {
    Json layers = Json::object();
    for (auto l : kAllLayers) {
      Json arr = Json::array();
      for (const auto& i : layer(l))
        arr.push_back({{"severity", std::string(to_string(i.severity))},
                       {"code", i.code},
                       {"message", i.message},
                       {"location", i.location}});
      layers[std::string(to_string(l))] = arr;
    }
    return {{"valid", valid()}, {"errors", errors()}, {"warnings", warnings()}, {"layers", layers}};
  }

  std::string to_text() const {
    std::string out;
    for (const auto& i : issues)
      out += std::string(to_string(i.layer)) + " " + std::string(to_string(i.severity)) + " " + i.code + " at " +
             i.location + ": " + i.message + "\n";
    out += valid() ? "valid" : "invalid";
    out += " (" + std::to_string(errors()) + " errors, " + std::to_string(warnings()) + " warnings)\n";
    return out;
  }

 private:
  std::size_t count(Severity s) const {
    return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [&](const auto& i) { return i.severity == s; }));
  }
};

namespace detail {

class IssueSink {
 public:
  void error(Layer l, std::string code, std::string loc, std::string msg) {
    issues_.insert({l, Severity::error, std::move(code), std::move(msg), std::move(loc)});
  }
  void warning(Layer l, std::string code, std::string loc, std::string msg) {
    issues_.insert({l, Severity::warning, std::move(code), std::move(msg), std::move(loc)});
  }
  ValidationReport report() const { return {{issues_.begin(), issues_.end()}}; }

 private:
  std::set<ValidationIssue> issues_;
};

inline std::string route_loc(std::size_t i) { return "routes[" + std::to_string(i) + "]"; }

}  // namespace detail

/// Checks an experiment against the registry layer by layer. Pure and
/// deterministic; issues are data, never exceptions.
inline ValidationReport validate_layers(const ExperimentDescription& exp, const Registry& reg) {
  detail::IssueSink out;
  const auto& cm = reg.model;
  std::map<std::string, const ParticipantDescriptor*> parts;
  for (const auto& p : exp.participants) parts.emplace(p.id, &p);
  std::set<std::string> exp_sites(exp.sites.begin(), exp.sites.end());
  std::set<std::string> stage_ids;
  for (const auto& s : exp.stages) stage_ids.insert(s.id);

  // conceptual: the framework's structure resolves.
  if (exp.stages.empty()) out.error(Layer::conceptual, "no-stages", "stages", "experiment declares no stages");
  if (exp.duration <= SimTime{0}) out.error(Layer::conceptual, "no-duration", "duration_ns", "duration must be positive");
  for (std::size_t i = 0; i < exp.sites.size(); ++i)
    if (!reg.site(exp.sites[i]))
      out.error(Layer::conceptual, "unknown-site", "sites[" + std::to_string(i) + "]",
                "site '" + exp.sites[i] + "' is not registered");
  for (const auto& p : exp.participants)
    if (!exp_sites.count(p.site_id) || !reg.site(p.site_id))
      out.error(Layer::conceptual, "unknown-site", "participants." + p.id + ".site",
                "site '" + p.site_id + "' is not declared or not registered");
  for (std::size_t i = 0; i < exp.routes.size(); ++i) {
    const auto& r = exp.routes[i];
    const auto loc = detail::route_loc(i);
    auto from = parts.find(r.from.participant);
    auto to = parts.find(r.to.participant);
    if (from == parts.end())
      out.error(Layer::conceptual, "unknown-participant", loc + ".from", "participant '" + r.from.participant + "' not declared");
    else if (!from->second->offers_topic(r.from.topic))
      out.error(Layer::conceptual, "route-topic-not-offered", loc + ".from",
                "'" + r.from.participant + "' does not offer '" + r.from.topic + "'");
    if (to == parts.end())
      out.error(Layer::conceptual, "unknown-participant", loc + ".to", "participant '" + r.to.participant + "' not declared");
    else if (!to->second->requires_topic(r.to.topic))
      out.error(Layer::conceptual, "route-topic-not-required", loc + ".to",
                "'" + r.to.participant + "' does not require '" + r.to.topic + "'");
  }
  for (const auto& s : exp.stages)
    for (std::size_t k = 0; k < s.transitions.size(); ++k)
      if (!stage_ids.count(s.transitions[k].target))
        out.error(Layer::conceptual, "unknown-stage", "stages." + s.id + ".transitions[" + std::to_string(k) + "]",
                  "target '" + s.transitions[k].target + "' not declared");

  // semantical: meaning of the models and their interaction.
  std::set<std::string> offered;
  for (const auto& p : exp.participants) {
    offered.insert(p.offers.begin(), p.offers.end());
    auto check_topic = [&](const std::string& t, const char* list) {
      if (!cm.find_entry(t))
        out.error(Layer::semantical, "unknown-topic", "participants." + p.id + "." + list,
                  "'" + t + "' is not in the canonical model");
    };
    for (const auto& t : p.offers) check_topic(t, "offers");
    for (const auto& t : p.required) check_topic(t, "requires");
  }
  if (!stage_ids.count(exp.initial_stage)) {
    out.error(Layer::semantical, "no-initial-stage", "initial_stage", "'" + exp.initial_stage + "' is not a declared stage");
  } else {
    std::set<std::string> seen{exp.initial_stage};
    std::vector<std::string> todo{exp.initial_stage};
    while (!todo.empty()) {
      const auto id = todo.back();
      todo.pop_back();
      for (const auto& s : exp.stages)
        if (s.id == id)
          for (const auto& t : s.transitions)
            if (stage_ids.count(t.target) && seen.insert(t.target).second) todo.push_back(t.target);
    }
    for (const auto& s : exp.stages)
      if (!seen.count(s.id))
        out.error(Layer::semantical, "unreachable-stage", "stages." + s.id, "stage cannot be reached from the initial stage");
  }
  for (const auto& s : exp.stages)
    for (const auto& c : s.entry_actions)
      if (c.kind == CommandKind::set_value && c.args.contains("topic") && c.args.at("topic").is_string())
        offered.insert(c.args.at("topic").get<std::string>());
  for (const auto& s : exp.stages) {
    for (std::size_t k = 0; k < s.transitions.size(); ++k)
      if (const auto* g = std::get_if<ThresholdGuard>(&s.transitions[k].guard))
        if (!cm.find_entry(g->topic) || !offered.count(g->topic))
          out.error(Layer::semantical, "unknown-guard-topic",
                    "stages." + s.id + ".transitions[" + std::to_string(k) + "].guard",
                    "'" + g->topic + "' is neither offered nor set by a stage");
    for (std::size_t k = 0; k < s.entry_actions.size(); ++k) {
      const auto& c = s.entry_actions[k];
      if (c.kind != CommandKind::set_value) continue;
      const auto loc = "stages." + s.id + ".entry_actions[" + std::to_string(k) + "]";
      const auto topic = c.args.value("topic", std::string());
      const auto* e = cm.find_entry(topic);
      if (!e || e->kind != model::EntryKind::setpoint)
        out.error(Layer::semantical, "set-value-not-setpoint", loc, "'" + topic + "' is not a canonical setpoint");
      else if (c.args.contains("unit") && c.args.at("unit").is_string()) {
        const auto* from = cm.find_unit(c.args.at("unit").get<std::string>());
        const auto* to = cm.find_unit(e->unit);
        if (!from || !to || !model::convertible(*from, *to))
          out.error(Layer::syntactic, "unit-mismatch", loc, "unit of set_value incompatible with '" + topic + "'");
      }
    }
  }

  // syntactic: formal compatibility of what is exchanged.
  for (std::size_t i = 0; i < exp.routes.size(); ++i) {
    const auto& r = exp.routes[i];
    const auto loc = detail::route_loc(i);
    auto from = parts.find(r.from.participant);
    auto to = parts.find(r.to.participant);
    if (from == parts.end() || to == parts.end()) continue;
    auto mapped = [&](const ParticipantDescriptor& p, const std::string& t, const std::string& where) {
      const auto* s = reg.site(p.site_id);
      if (s && !s->table.by_canonical(t))
        out.error(Layer::syntactic, "unmapped-topic", where, "'" + t + "' has no mapping row at site " + p.site_id);
    };
    mapped(*from->second, r.from.topic, loc + ".from");
    mapped(*to->second, r.to.topic, loc + ".to");
    const auto* a = cm.find_entry(r.from.topic);
    const auto* b = cm.find_entry(r.to.topic);
    if (!a || !b) continue;
    const auto* ua = cm.find_unit(a->unit);
    const auto* ub = cm.find_unit(b->unit);
    if (!ua || !ub || !model::convertible(*ua, *ub))
      out.error(Layer::syntactic, "unit-mismatch", loc, "'" + a->unit + "' and '" + b->unit + "' are not convertible");
    if (a->domain.kind != b->domain.kind)
      out.error(Layer::syntactic, "domain-mismatch", loc, "value domains of the endpoints differ");
  }
  for (const auto& p : exp.participants) {
    if (p.external) continue;
    try {
      (void)plant::make_participant(p, exp.seed);
    } catch (const Error& e) {
      out.error(Layer::syntactic, "bad-model", "participants." + p.id + ".model", e.detail());
    }
  }

  // dynamic: execution order, synchronization, causality.
  for (const auto& p : exp.participants)
    if (p.step > exp.macro_step || exp.macro_step.count() % p.step.count() != 0)
      out.error(Layer::dynamic, "step-not-divisor", "participants." + p.id + ".step_ns",
                "macro step is not an integer multiple of the participant step");
  {
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& r : exp.routes)
      if (r.delay_steps == 0) adj[r.from.participant].insert(r.to.participant);
    std::map<std::string, int> color;
    std::set<std::string> on_cycle;
    std::function<bool(const std::string&)> dfs = [&](const std::string& u) {
      color[u] = 1;
      for (const auto& v : adj[u]) {
        if (color[v] == 1) return on_cycle.insert(v), true;
        if (color[v] == 0 && dfs(v)) return true;
      }
      color[u] = 2;
      return false;
    };
    for (const auto& [u, _] : adj)
      if (color[u] == 0 && dfs(u)) break;
    if (!on_cycle.empty())
      out.error(Layer::dynamic, "zero-delay-cycle", "routes",
                "routes with delay_steps 0 form a cycle through '" + *on_cycle.begin() + "'");
  }
  if (exp.sync_mode == SyncMode::waveform_relaxation) {
    if (!exp.wr) {
      out.error(Layer::dynamic, "missing-wr-config", "wr", "waveform relaxation needs a wr section");
    } else if (exp.wr->window <= SimTime{0} || exp.wr->window.count() % exp.macro_step.count() != 0 ||
               exp.duration.count() % exp.wr->window.count() != 0 || exp.wr->max_iter < 1 || !(exp.wr->tol > 0.0) ||
               exp.wr->scheme != "jacobi") {
      out.error(Layer::dynamic, "wr-window", "wr",
                "window must be a positive multiple of macro_step dividing the duration, with tol > 0, max_iter >= 1, "
                "scheme jacobi");
    }
    for (const auto& p : exp.participants)
      if (p.kind == DomainKind::hil_realtime)
        out.error(Layer::dynamic, "hil-in-wr", "participants." + p.id, "hardware cannot re-run a relaxation window");
  }

  // technical: interface implementation and performance.
  for (std::size_t i = 0; i < exp.routes.size(); ++i) {
    const auto& r = exp.routes[i];
    auto from = parts.find(r.from.participant);
    auto to = parts.find(r.to.participant);
    if (from == parts.end() || to == parts.end()) continue;
    const auto& a = from->second->site_id;
    const auto& b = to->second->site_id;
    if (a == b) continue;
    const auto loc = detail::route_loc(i);
    const auto link = reg.link(a, b);
    if (reg.site(a) && reg.site(b) && !link)
      out.error(Layer::technical, "missing-link", loc, "no link configured between " + a + " and " + b);
    for (const auto* p : {from->second, to->second}) {
      if (p->kind != DomainKind::hil_realtime) continue;
      out.warning(Layer::technical, "hil-inter-site", loc,
                  "HIL participant '" + p->id + "' exchanges across sites; keep the HIL interface intra-platform");
      if (link && p->realtime_deadline && link->worst_case_delay() > *p->realtime_deadline)
        out.error(Layer::technical, "hil-deadline", loc,
                  "worst-case link delay exceeds the realtime deadline of '" + p->id + "'");
    }
  }
  for (const auto& p : exp.participants)
    if (p.external && exp.sync_mode != SyncMode::conservative)
      out.error(Layer::technical, "external-unsupported-mode", "participants." + p.id,
                "external participants are supported in conservative mode only");

  return out.report();
}

}  // namespace fedkit::experiment
