#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedkit/core/format.hpp"
#include "fedkit/experiment/command.hpp"
#include "fedkit/experiment/parse.hpp"
#include "fedkit/experiment/sites.hpp"
#include "fedkit/experiment/types.hpp"
#include "fedkit/hub/envelope.hpp"
#include "fedkit/hub/trace_store.hpp"
#include "fedkit/model/mapping.hpp"

namespace fedkit::hub {

enum class Role { participant, operator_ };

struct Session {
  std::string id;
  std::string principal;  // participant id or operator name
  std::string site;
  Role role{Role::participant};
  CommandSet granted;
  std::string run;  // participant sessions are bound to one run
};

enum class RunState { created, running, stopped, finished, failed };

constexpr std::string_view to_string(RunState s) {
  switch (s) {
    case RunState::created: return "created";
    case RunState::running: return "running";
    case RunState::stopped: return "stopped";
    case RunState::finished: return "finished";
    case RunState::failed: return "failed";
  }
  return "failed";
}

/// A routed sample on its way to one consumer, already expressed in the
/// consumer's topic and canonical unit.
struct Delivery {
  std::size_t route{0};
  std::string consumer;
  std::string from_topic;
  SignalSample sample;  // topic = consumer topic, source = producer
  WallTime sent{0};
  WallTime arrival{0};
  bool via_site_bus{false};
  std::uint64_t order{0};
};

struct PublishAck {
  std::size_t store_rows{0};
  std::size_t forwarded{0};
  std::size_t dropped{0};
};

struct CommandResult {
  bool ok{true};
  std::optional<ErrorCode> error;
  std::string message;
  Json data = Json::object();

  static CommandResult failure(const Error& e) { return {false, e.code(), e.what(), Json::object()}; }

  Json to_json() const {
    Json j{{"ok", ok}, {"data", data}};
    if (error) {
      j["error"] = std::string(to_string(*error));
      j["message"] = message;
    }
    return j;
  }
};

/// Rejects publishes on an HIL intra-site route; those belong on the site bus.
inline bool is_site_bus_route(const experiment::ExperimentDescription& exp, const experiment::Route& r) {
  const auto* a = exp.participant(r.from.participant);
  const auto* b = exp.participant(r.to.participant);
  if (!a || !b || a->site_id != b->site_id) return false;
  return a->kind == experiment::DomainKind::hil_realtime || b->kind == experiment::DomainKind::hil_realtime;
}

/// Converts a value between the canonical units of two topics.
inline Value convert_between(const model::CanonicalModel& m, const Value& v, const std::string& from_topic,
                             const std::string& to_topic) {
  const double* d = std::get_if<double>(&v);
  if (!d) return v;
  const auto* a = m.find_entry(from_topic);
  const auto* b = m.find_entry(to_topic);
  if (!a || !b || a->unit == b->unit) return v;
  const auto* ua = m.find_unit(a->unit);
  const auto* ub = m.find_unit(b->unit);
  if (!ua || !ub) return v;
  return model::convert(*d, *ua, *ub);
}

/// The consortium server: sessions, runs, routing, trace store and the
/// command gateway. Thread-safe; one mutex guards everything but the store.
class Hub {
 public:
  using Launcher = std::function<void(const std::string& run)>;

  explicit Hub(experiment::Registry reg) : reg_(std::move(reg)) {}

  const experiment::Registry& registry() const { return reg_; }
  TraceStore& store() { return store_; }
  const TraceStore& store() const { return store_; }

  /// Called by start_experiment after the run is created.
  void set_launcher(Launcher l) {
    std::lock_guard lock(mu_);
    launcher_ = std::move(l);
  }

  // sessions

  Session register_participant(const experiment::ParticipantDescriptor& d, const std::string& run) {
    std::lock_guard lock(mu_);
    const auto* site = reg_.site(d.site_id);
    if (!site) fail(ErrorCode::UnknownSite, d.site_id);
    for (const auto& [_, s] : sessions_)
      if (s.role == Role::participant && s.principal == d.id) fail(ErrorCode::DuplicateParticipant, d.id);
    if (!run.empty()) {
      auto& r = run_ref(run);
      if (!r.exp.participant(d.id)) fail(ErrorCode::InvalidArgument, d.id + " is not part of " + run);
    }
    Session s{"s-" + std::to_string(++session_counter_), d.id, d.site_id, Role::participant, site->allow_list, run};
    sessions_.emplace(s.id, s);
    return s;
  }

  /// Operators authenticate with the static token of their site.
  Session register_operator(const std::string& site_id, const std::string& token, const std::string& name = "operator") {
    std::lock_guard lock(mu_);
    const auto* site = reg_.site(site_id);
    if (!site) fail(ErrorCode::UnknownSite, site_id);
    if (site->token.empty() || token != site->token) fail(ErrorCode::PermissionDenied, "bad token for site " + site_id);
    Session s{"s-" + std::to_string(++session_counter_), name + "@" + site_id, site_id, Role::operator_, site->allow_list,
              ""};
    sessions_.emplace(s.id, s);
    return s;
  }

  void close_session(const std::string& id) {
    std::lock_guard lock(mu_);
    sessions_.erase(id);
  }

  std::optional<Session> session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
  }

  // runs

  std::string create_run(experiment::ExperimentDescription exp, bool reliable) {
    std::lock_guard lock(mu_);
    auto run = std::make_unique<Run>();
    run->id = "run-" + std::to_string(++run_counter_);
    run->reliable = reliable;
    run->exp = std::move(exp);
    for (std::size_t i = 0; i < run->exp.routes.size(); ++i) {
      const auto& r = run->exp.routes[i];
      const auto* a = run->exp.participant(r.from.participant);
      const auto* b = run->exp.participant(r.to.participant);
      if (!a || !b) fail(ErrorCode::ConfigError, "route " + std::to_string(i) + " references an unknown participant");
      run->by_source[{r.from.participant, r.from.topic}].push_back(i);
      if (a->site_id == b->site_id) continue;
      const auto id = experiment::link_id(a->site_id, b->site_id);
      if (run->links.count(id)) continue;
      const auto m = reg_.link(a->site_id, b->site_id);
      if (!m) fail(ErrorCode::ConfigError, "no link between " + a->site_id + " and " + b->site_id);
      run->links.emplace(id, std::make_unique<netem::Link<Delivery>>(*m, id, run->exp.seed));
    }
    const auto id = run->id;
    runs_.emplace(id, std::move(run));
    return id;
  }

  RunState run_state(const std::string& run) const {
    std::lock_guard lock(mu_);
    return run_ref(run).state;
  }

  void set_run_state(const std::string& run, RunState s, const std::string& error = "") {
    std::lock_guard lock(mu_);
    auto& r = run_ref(run);
    r.state = s;
    if (!error.empty()) r.error = error;
  }

  void set_progress(const std::string& run, SimTime t) {
    std::lock_guard lock(mu_);
    run_ref(run).progress = t;
  }

  /// Asks every running run to stop at its next boundary (daemon shutdown).
  void stop_all() {
    std::lock_guard lock(mu_);
    for (auto& [_, r] : runs_)
      if (r->state == RunState::running || r->state == RunState::created) {
        r->stop_requested = true;
        r->state = RunState::stopped;
      }
  }

  bool stop_requested(const std::string& run) const {
    std::lock_guard lock(mu_);
    return run_ref(run).stop_requested;
  }

  experiment::ExperimentDescription run_experiment(const std::string& run) const {
    std::lock_guard lock(mu_);
    return run_ref(run).exp;
  }

  std::vector<std::string> runs() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : runs_) out.push_back(id);
    return out;
  }

  Json run_status(const std::string& run) const {
    std::lock_guard lock(mu_);
    return status_json(run_ref(run));
  }

  // data plane

  /// Appends to the store (unless `to_store` is false, as for samples that
  /// reach the store by replication) and forwards along every hub route.
  PublishAck publish(const std::string& session_id, SignalSample s, WallTime send_at, WallTime stamp,
                     bool to_store = true) {
    std::unique_lock lock(mu_);
    const auto& sess = session_ref(session_id);
    if (sess.role != Role::participant) fail(ErrorCode::PermissionDenied, "operators cannot publish");
    auto& run = run_ref(sess.run);
    const auto* d = run.exp.participant(sess.principal);
    if (!d || !d->offers_topic(s.topic)) fail(ErrorCode::NotOffered, sess.principal + " does not offer " + s.topic);
    const auto key = std::pair{sess.principal, s.topic};
    if (auto it = run.last_seq.find(key); it != run.last_seq.end() && s.seq <= it->second)
      fail(ErrorCode::StaleSeq, s.topic + " seq " + std::to_string(s.seq) + " <= " + std::to_string(it->second));
    run.last_seq[key] = s.seq;
    s.source = sess.principal;
    if (s.unit.empty())
      if (const auto* e = reg_.model.find_entry(s.topic)) s.unit = e->unit;

    PublishAck ack;
    const std::string run_id = run.id;
    auto it = run.by_source.find(key);
    if (it != run.by_source.end())
      for (auto idx : it->second) {
        const auto& r = run.exp.routes[idx];
        if (is_site_bus_route(run.exp, r)) continue;
        Delivery dv;
        dv.route = idx;
        dv.consumer = r.to.participant;
        dv.from_topic = s.topic;
        dv.sample = s;
        dv.sample.topic = r.to.topic;
        dv.sample.value = convert_between(reg_.model, s.value, s.topic, r.to.topic);
        if (const auto* e = reg_.model.find_entry(r.to.topic)) dv.sample.unit = e->unit;
        dv.sent = send_at;
        dv.order = run.order++;
        const auto* a = run.exp.participant(r.from.participant);
        const auto* b = run.exp.participant(r.to.participant);
        if (a->site_id == b->site_id) {
          dv.arrival = send_at;
          run.inbox[dv.consumer].push({dv, dv.arrival, dv.order});
          ++ack.forwarded;
          continue;
        }
        auto& link = *run.links.at(experiment::link_id(a->site_id, b->site_id));
        WallTime at = send_at;
        for (int attempt = 0;; ++attempt) {
          dv.sent = at;
          if (link.send(dv, at)) {
            ++ack.forwarded;
            break;
          }
          ++ack.dropped;
          if (!run.reliable || attempt >= kMaxRetransmissions) break;
          at += retransmit_timeout(link.scheduler().model());
        }
      }
    lock.unlock();
    if (to_store && store_.append(run_id, s, stamp)) ack.store_rows = 1;
    return ack;
  }

  /// Deliveries to `consumer` whose arrival time is <= now, in arrival order.
  std::vector<Delivery> collect(const std::string& run_id, const std::string& consumer, WallTime now) {
    std::lock_guard lock(mu_);
    auto& run = run_ref(run_id);
    pump(run, now);
    auto it = run.inbox.find(consumer);
    if (it == run.inbox.end()) return {};
    return it->second.deliver_due(now);
  }

  /// Earliest pending arrival of the run, over links and inboxes.
  std::optional<WallTime> next_arrival(const std::string& run_id) const {
    std::lock_guard lock(mu_);
    const auto& run = run_ref(run_id);
    std::optional<WallTime> best;
    auto take = [&](std::optional<WallTime> t) {
      if (t && (!best || *t < *best)) best = t;
    };
    for (const auto& [_, l] : run.links) take(l->next_time());
    for (const auto& [_, q] : run.inbox) take(q.next_time());
    return best;
  }

  /// Setpoints queued by set_value, to be applied by the runner at the next
  /// macro boundary. Clears the queue.
  std::vector<SignalSample> take_setpoints(const std::string& run_id) {
    std::lock_guard lock(mu_);
    auto& run = run_ref(run_id);
    auto out = std::move(run.pending);
    run.pending.clear();
    return out;
  }

  /// Site log -> canonical store. Atomic per batch; returns rows inserted.
  std::size_t replicate(const std::string& run_id, const std::string& site_id, const std::vector<TraceRow>& batch) {
    const auto* site = reg_.site(site_id);
    if (!site) fail(ErrorCode::UnknownSite, site_id);
    {
      std::lock_guard lock(mu_);
      (void)run_ref(run_id);
    }
    std::vector<TraceRow> canon;
    canon.reserve(batch.size());
    for (const auto& r : batch) canon.push_back({model::to_canonical(r.sample, site->table, reg_.model), r.wall_time});
    std::size_t n = 0;
    for (const auto& r : canon) n += store_.append(run_id, r.sample, r.wall_time) ? 1 : 0;
    return n;
  }

  std::vector<TraceRow> query_trace(const TraceQuery& q) const {
    {
      std::lock_guard lock(mu_);
      (void)run_ref(q.run);
    }
    return store_.query(q);
  }

  // commands

  CommandResult execute_command(const std::string& session_id, const Command& cmd) {
    try {
      return execute(session_id, cmd);
    } catch (const Error& e) {
      return CommandResult::failure(e);
    }
  }

  /// Run states, pending setpoints and the store hash.
  std::uint64_t observable_hash() const {
    std::string s;
    {
      std::lock_guard lock(mu_);
      for (const auto& [_, r] : runs_) s += status_json(*r).dump() + "\n";
    }
    s += std::to_string(store_.hash());
    return netem::fnv1a(s);
  }

 private:
  static constexpr int kMaxRetransmissions = 10000;

  struct Run {
    std::string id;
    experiment::ExperimentDescription exp;
    bool reliable{true};
    RunState state{RunState::created};
    bool stop_requested{false};
    SimTime progress{0};
    std::string error;
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_source;
    std::map<std::pair<std::string, std::string>, std::uint64_t> last_seq;
    std::map<std::string, std::unique_ptr<netem::Link<Delivery>>> links;
    std::map<std::string, netem::DeliveryQueue<Delivery>> inbox;
    std::uint64_t order{0};
    std::vector<SignalSample> pending;
    std::uint64_t setpoint_seq{0};
  };

  static WallTime retransmit_timeout(const netem::LinkModel& m) {
    return std::max<WallTime>(std::chrono::milliseconds{1}, 2 * m.worst_case_delay());
  }

  void pump(Run& run, WallTime now) {
    for (auto& [_, l] : run.links)
      for (auto& d : l->pop_due(now)) {
        d.message.arrival = d.deliver_time;
        run.inbox[d.message.consumer].push({d.message, d.deliver_time, d.message.order});
      }
  }

  Run& run_ref(const std::string& id) const {
    auto it = runs_.find(id);
    if (it == runs_.end()) fail(ErrorCode::UnknownRun, id);
    return *it->second;
  }

  const Session& session_ref(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::PermissionDenied, "unknown session " + id);
    return it->second;
  }

  Json status_json(const Run& r) const {
    Json pending = Json::array();
    for (const auto& p : r.pending) pending.push_back(sample_to_json(p));
    return {{"run", r.id},
            {"experiment", r.exp.id},
            {"state", std::string(to_string(r.state))},
            {"sync", std::string(experiment::to_string(r.exp.sync_mode))},
            {"sim_time_ns", r.progress.count()},
            {"duration_ns", r.exp.duration.count()},
            {"stop_requested", r.stop_requested},
            {"pending_setpoints", pending},
            {"error", r.error}};
  }

  /// Resolves the `run` argument, defaulting to the only running run.
  Run& target_run(const Json& args, bool must_run) const {
    if (args.contains("run")) {
      if (!args.at("run").is_string()) fail(ErrorCode::InvalidArgument, "run must be a string");
      auto& r = run_ref(args.at("run").get<std::string>());
      if (must_run && r.state != RunState::running) fail(ErrorCode::NoActiveRun, r.id + " is " + std::string(to_string(r.state)));
      return r;
    }
    Run* found = nullptr;
    for (const auto& [_, r] : runs_)
      if (r->state == RunState::running) found = r.get();
    if (!found) fail(ErrorCode::NoActiveRun, "no run is active");
    return *found;
  }

  CommandResult execute(const std::string& session_id, const Command& cmd) {
    std::unique_lock lock(mu_);
    const auto& sess = session_ref(session_id);
    if (!sess.granted.count(cmd.kind))
      fail(ErrorCode::PermissionDenied, std::string(to_string(cmd.kind)) + " not granted to " + sess.principal);
    const Json& a = cmd.args;
    CommandResult res;
    switch (cmd.kind) {
      case CommandKind::start_experiment: {
        std::string id;
        if (a.contains("run")) {
          auto& r = run_ref(a.at("run").get<std::string>());
          if (r.state != RunState::created) fail(ErrorCode::InvalidArgument, r.id + " was already started");
          id = r.id;
        } else {
          if (!a.contains("experiment")) fail(ErrorCode::InvalidArgument, "start_experiment needs 'experiment' or 'run'");
          experiment::ExperimentDescription exp;
          try {
            exp = experiment::experiment_from_json(a.at("experiment"));
          } catch (const Error& e) {
            fail(ErrorCode::InvalidArgument, e.what());
          }
          const bool reliable = exp.sync_mode != experiment::SyncMode::best_effort;
          lock.unlock();
          id = create_run(std::move(exp), reliable);
          lock.lock();
        }
        run_ref(id).state = RunState::running;
        auto launcher = launcher_;
        lock.unlock();
        if (launcher) launcher(id);
        res.data = run_status(id);
        return res;
      }
      case CommandKind::stop_experiment: {
        auto& r = target_run(a, true);
        r.stop_requested = true;
        r.state = RunState::stopped;
        res.data = status_json(r);
        return res;
      }
      case CommandKind::set_value: {
        auto& r = target_run(a, true);
        if (!a.contains("topic") || !a.at("topic").is_string()) fail(ErrorCode::InvalidArgument, "set_value needs a topic");
        if (!a.contains("value") || !a.at("value").is_number()) fail(ErrorCode::InvalidArgument, "set_value needs a numeric value");
        const auto topic = a.at("topic").get<std::string>();
        const auto* e = reg_.model.find_entry(topic);
        if (!e || e->kind != model::EntryKind::setpoint)
          fail(ErrorCode::InvalidArgument, "'" + topic + "' is not a canonical setpoint");
        double v = a.at("value").get<double>();
        if (a.contains("unit")) {
          if (!a.at("unit").is_string()) fail(ErrorCode::InvalidArgument, "unit must be a string");
          const auto* from = reg_.model.find_unit(a.at("unit").get<std::string>());
          const auto* to = reg_.model.find_unit(e->unit);
          if (!from || !to || !model::convertible(*from, *to))
            fail(ErrorCode::InvalidArgument, "unit incompatible with '" + topic + "'");
          v = model::convert(v, *from, *to);
        }
        SignalSample s{topic, r.progress, v, e->unit, Quality::good, "operator:" + sess.principal, r.setpoint_seq++};
        r.pending.push_back(s);
        res.data = {{"run", r.id}, {"queued", sample_to_json(s)}};
        return res;
      }
      case CommandKind::query_trace: {
        if (!a.contains("run")) fail(ErrorCode::InvalidArgument, "query_trace needs a run");
        TraceQuery q;
        q.run = a.at("run").get<std::string>();
        (void)run_ref(q.run);
        if (a.contains("topic")) q.topic = a.at("topic").get<std::string>();
        if (a.contains("from_ns")) q.from = SimTime{a.at("from_ns").get<std::int64_t>()};
        if (a.contains("to_ns")) q.to = SimTime{a.at("to_ns").get<std::int64_t>()};
        lock.unlock();
        Json rows = Json::array();
        for (const auto& r : store_.query(q)) {
          auto j = sample_to_json(r.sample);
          j["wall_time_ns"] = r.wall_time.count();
          rows.push_back(j);
        }
        res.data = {{"run", q.run}, {"rows", rows}};
        return res;
      }
      case CommandKind::get_status: {
        if (a.contains("run")) {
          res.data = status_json(run_ref(a.at("run").get<std::string>()));
        } else {
          Json all = Json::array();
          for (const auto& [_, r] : runs_) all.push_back(status_json(*r));
          res.data = {{"runs", all}};
        }
        return res;
      }
      case CommandKind::list_resources: {
        res.data = resources_json();
        return res;
      }
    }
    fail(ErrorCode::InvalidArgument, "unhandled command");
  }

  Json resources_json() const {
    Json sites = Json::array();
    for (const auto& [id, s] : reg_.sites) {
      Json allow = Json::array();
      for (auto k : s.allow_list) allow.push_back(std::string(to_string(k)));
      Json peers = Json::array();
      for (const auto& l : s.links) peers.push_back(l.peer);
      sites.push_back({{"id", id}, {"allow", allow}, {"links", peers}});
    }
    Json topics = Json::array();
    for (const auto& e : reg_.model.entries)
      topics.push_back({{"name", e.name}, {"kind", std::string(model::to_string(e.kind))}, {"unit", e.unit}});
    Json runs = Json::array();
    for (const auto& [id, r] : runs_) {
      Json parts = Json::array();
      for (const auto& p : r->exp.participants)
        parts.push_back({{"id", p.id}, {"site", p.site_id}, {"kind", std::string(experiment::to_string(p.kind))}});
      runs.push_back({{"run", id}, {"state", std::string(to_string(r->state))}, {"participants", parts}});
    }
    return {{"sites", sites}, {"topics", topics}, {"runs", runs}};
  }

  experiment::Registry reg_;
  TraceStore store_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::unique_ptr<Run>> runs_;
  std::uint64_t session_counter_{0};
  std::uint64_t run_counter_{0};
  Launcher launcher_;
};

}  // namespace fedkit::hub
