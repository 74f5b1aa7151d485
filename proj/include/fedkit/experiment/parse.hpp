#pragma once

#include <set>
#include <string>
#include <string_view>

#include "fedkit/core/json_util.hpp"
#include "fedkit/experiment/types.hpp"

namespace fedkit::experiment {

namespace detail {

inline DomainKind domain_kind_from_string(const std::string& s, const std::string& where) {
  if (s == "power_continuous") return DomainKind::power_continuous;
  if (s == "ict_discrete_event") return DomainKind::ict_discrete_event;
  if (s == "hil_realtime") return DomainKind::hil_realtime;
  if (s == "controller") return DomainKind::controller;
  fail(ErrorCode::SchemaError, "bad-kind " + where + ": '" + s + "'");
}

inline SimTime positive_ns(ObjectReader& r, std::string_view key) {
  const auto v = r.required<std::int64_t>(key);
  if (v <= 0) fail(ErrorCode::SchemaError, "non-positive " + r.at(key));
  return SimTime{v};
}

inline Endpoint endpoint_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  Endpoint e{r.required<std::string>("participant"), r.required<std::string>("topic")};
  r.finish();
  return e;
}

inline Guard guard_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  Guard g;
  if (r.has("elapsed_ns")) {
    const auto t = r.required<std::int64_t>("elapsed_ns");
    if (t < 0) fail(ErrorCode::SchemaError, "negative " + r.at("elapsed_ns"));
    g = ElapsedGuard{SimTime{t}};
  } else if (r.has("topic")) {
    ThresholdGuard tg;
    tg.topic = r.required<std::string>("topic");
    const auto cmp = cmp_from_string(r.required<std::string>("cmp"));
    if (!cmp) fail(ErrorCode::SchemaError, "bad-cmp " + r.at("cmp"));
    tg.cmp = *cmp;
    tg.threshold = r.required<double>("threshold");
    const auto hold = r.optional<std::int64_t>("hold_ns", 0);
    if (hold < 0) fail(ErrorCode::SchemaError, "negative " + r.at("hold_ns"));
    tg.hold = SimTime{hold};
    g = tg;
  } else {
    fail(ErrorCode::SchemaError, "missing-field " + where + ": elapsed_ns or topic");
  }
  r.finish();
  return g;
}

inline ParticipantDescriptor participant_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  ParticipantDescriptor p;
  p.id = r.required<std::string>("id");
  p.site_id = r.required<std::string>("site");
  p.kind = domain_kind_from_string(r.required<std::string>("kind"), r.at("kind"));
  p.step = positive_ns(r, "step_ns");
  p.offers = r.optional<std::vector<std::string>>("offers", {});
  p.required = r.optional<std::vector<std::string>>("requires", {});
  if (const Json* d = r.raw_optional("realtime_deadline_ns")) {
    const auto v = ObjectReader::convert<std::int64_t>(*d, r.at("realtime_deadline_ns"));
    if (v <= 0) fail(ErrorCode::SchemaError, "non-positive " + r.at("realtime_deadline_ns"));
    p.realtime_deadline = SimTime{v};
  }
  if (const Json* d = r.raw_optional("defaults")) {
    if (!d->is_object()) fail(ErrorCode::SchemaError, "bad-type " + r.at("defaults"));
    for (const auto& [topic, v] : d->items())
      p.defaults.emplace_back(topic, ObjectReader::convert<double>(v, r.at("defaults") + "." + topic));
  }
  if (const Json* m = r.raw_optional("model")) {
    if (!m->is_object()) fail(ErrorCode::SchemaError, "bad-type " + r.at("model"));
    p.model = *m;
  }
  p.external = r.optional<bool>("external", false);
  r.finish();

  std::set<std::string> offered(p.offers.begin(), p.offers.end());
  if (offered.size() != p.offers.size()) fail(ErrorCode::SchemaError, "duplicate-offer " + where);
  for (const auto& t : p.required)
    if (offered.count(t)) fail(ErrorCode::SchemaError, "offer-require-overlap " + where + ": " + t);
  const bool is_hil = p.kind == DomainKind::hil_realtime;
  if (is_hil && !p.realtime_deadline)
    fail(ErrorCode::SchemaError, "missing-field " + where + ".realtime_deadline_ns (hil_realtime)");
  if (!is_hil && p.realtime_deadline)
    fail(ErrorCode::SchemaError, "unexpected-field " + where + ".realtime_deadline_ns (not hil_realtime)");
  return p;
}

inline WRConfig wr_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  WRConfig c;
  c.window = SimTime{r.required<std::int64_t>("window_ns")};
  c.tol = r.required<double>("tol");
  c.max_iter = r.optional<int>("max_iter", 20);
  c.scheme = r.optional<std::string>("scheme", "jacobi");
  r.finish();
  if (c.scheme != "jacobi") fail(ErrorCode::SchemaError, "unsupported-scheme " + r.at("scheme") + ": " + c.scheme);
  return c;
}

}  // namespace detail

/// Parses an experiment document and fills defaults (seed 0, delay_steps 1).
/// Checks structure only; cross-references are the validator's job.
inline ExperimentDescription experiment_from_json(const Json& doc) {
  ObjectReader r(doc, "experiment");
  ExperimentDescription exp;
  exp.id = r.required<std::string>("id");
  exp.sites = r.required<std::vector<std::string>>("sites");
  exp.initial_stage = r.required<std::string>("initial_stage");
  const auto mode = r.required<std::string>("sync");
  const auto parsed_mode = sync_mode_from_string(mode);
  if (!parsed_mode) fail(ErrorCode::SchemaError, "bad-sync " + r.at("sync") + ": '" + mode + "'");
  exp.sync_mode = *parsed_mode;
  exp.macro_step = detail::positive_ns(r, "macro_step_ns");
  const auto duration = r.required<std::int64_t>("duration_ns");
  exp.duration = SimTime{duration};
  exp.seed = r.optional<std::uint64_t>("seed", 0);
  if (const Json* w = r.raw_optional("wr")) exp.wr = detail::wr_from_json(*w, r.at("wr"));

  const Json& parts = require_array(r.raw("participants"), r.at("participants"));
  std::set<std::string> pids;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto p = detail::participant_from_json(parts[i], r.at("participants") + "[" + std::to_string(i) + "]");
    if (!pids.insert(p.id).second) fail(ErrorCode::SchemaError, "duplicate-participant " + p.id);
    exp.participants.push_back(std::move(p));
  }

  if (const Json* routes = r.raw_optional("routes")) {
    require_array(*routes, r.at("routes"));
    for (std::size_t i = 0; i < routes->size(); ++i) {
      const std::string loc = r.at("routes") + "[" + std::to_string(i) + "]";
      ObjectReader rr((*routes)[i], loc);
      Route route;
      route.from = detail::endpoint_from_json(rr.raw("from"), rr.at("from"));
      route.to = detail::endpoint_from_json(rr.raw("to"), rr.at("to"));
      route.delay_steps = rr.optional<int>("delay_steps", 1);
      rr.finish();
      if (route.delay_steps < 0) fail(ErrorCode::SchemaError, "negative " + loc + ".delay_steps");
      if (route.from == route.to) fail(ErrorCode::SchemaError, "self-route " + loc);
      exp.routes.push_back(std::move(route));
    }
  }

  const Json& stages = require_array(r.raw("stages"), r.at("stages"));
  std::set<std::string> sids;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string loc = r.at("stages") + "[" + std::to_string(i) + "]";
    ObjectReader sr(stages[i], loc);
    Stage st;
    st.id = sr.required<std::string>("id");
    if (const Json* acts = sr.raw_optional("entry_actions")) {
      require_array(*acts, sr.at("entry_actions"));
      for (std::size_t k = 0; k < acts->size(); ++k)
        st.entry_actions.push_back(Command::from_json((*acts)[k], sr.at("entry_actions") + "[" + std::to_string(k) + "]"));
    }
    if (const Json* trs = sr.raw_optional("transitions")) {
      require_array(*trs, sr.at("transitions"));
      for (std::size_t k = 0; k < trs->size(); ++k) {
        const std::string tloc = sr.at("transitions") + "[" + std::to_string(k) + "]";
        ObjectReader tr((*trs)[k], tloc);
        Transition t{detail::guard_from_json(tr.raw("guard"), tr.at("guard")), tr.required<std::string>("target")};
        tr.finish();
        st.transitions.push_back(std::move(t));
      }
    }
    sr.finish();
    if (!sids.insert(st.id).second) fail(ErrorCode::SchemaError, "duplicate-stage " + st.id);
    exp.stages.push_back(std::move(st));
  }
  r.finish();

  if (duration < 0 || duration % exp.macro_step.count() != 0)
    fail(ErrorCode::SchemaError, "duration-not-multiple " + std::to_string(duration) + " ns of macro step " +
                                     std::to_string(exp.macro_step.count()) + " ns");
  return exp;
}

inline ExperimentDescription parse_experiment(std::string_view text) {
  return experiment_from_json(parse_json_text(text, "experiment"));
}

inline ExperimentDescription load_experiment(const std::string& path) {
  return experiment_from_json(parse_json_text(read_text_file(path), path));
}

inline Json to_json(const Guard& g) {
  if (const auto* e = std::get_if<ElapsedGuard>(&g)) return {{"elapsed_ns", e->at_least.count()}};
  const auto& t = std::get<ThresholdGuard>(g);
  return {{"topic", t.topic}, {"cmp", std::string(to_string(t.cmp))}, {"threshold", t.threshold}, {"hold_ns", t.hold.count()}};
}

/// Fully resolved form (all defaults explicit); parses back to an equal description.
inline Json to_json(const ExperimentDescription& exp) {
  Json parts = Json::array();
  for (const auto& p : exp.participants) {
    Json j{{"id", p.id},
           {"site", p.site_id},
           {"kind", std::string(to_string(p.kind))},
           {"step_ns", p.step.count()},
           {"offers", p.offers},
           {"requires", p.required},
           {"model", p.model},
           {"external", p.external}};
    if (p.realtime_deadline) j["realtime_deadline_ns"] = p.realtime_deadline->count();
    Json defaults = Json::object();
    for (const auto& [t, v] : p.defaults) defaults[t] = v;
    j["defaults"] = defaults;
    parts.push_back(std::move(j));
  }
  Json routes = Json::array();
  for (const auto& r : exp.routes)
    routes.push_back({{"from", {{"participant", r.from.participant}, {"topic", r.from.topic}}},
                      {"to", {{"participant", r.to.participant}, {"topic", r.to.topic}}},
                      {"delay_steps", r.delay_steps}});
  Json stages = Json::array();
  for (const auto& s : exp.stages) {
    Json acts = Json::array();
    for (const auto& c : s.entry_actions) acts.push_back(c.to_json());
    Json trs = Json::array();
    for (const auto& t : s.transitions) trs.push_back({{"guard", to_json(t.guard)}, {"target", t.target}});
    stages.push_back({{"id", s.id}, {"entry_actions", acts}, {"transitions", trs}});
  }
  Json doc{{"id", exp.id},
           {"sites", exp.sites},
           {"participants", parts},
           {"routes", routes},
           {"stages", stages},
           {"initial_stage", exp.initial_stage},
           {"sync", std::string(to_string(exp.sync_mode))},
           {"macro_step_ns", exp.macro_step.count()},
           {"duration_ns", exp.duration.count()},
           {"seed", exp.seed}};
  if (exp.wr)
    doc["wr"] = {{"window_ns", exp.wr->window.count()},
                 {"tol", exp.wr->tol},
                 {"max_iter", exp.wr->max_iter},
                 {"scheme", exp.wr->scheme}};
  return doc;
}

}  // namespace fedkit::experiment
