#pragma once

#include <chrono>
#include <condition_variable>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "fedkit/experiment/stage_machine.hpp"
#include "fedkit/hub/hub.hpp"
#include "fedkit/hub/site_gateway.hpp"
#include "fedkit/plant/hil.hpp"
#include "fedkit/plant/oracle.hpp"
#include "fedkit/plant/participant.hpp"
#include "fedkit/sync/run_result.hpp"

namespace fedkit::sync {

using ParticipantPtr = std::shared_ptr<plant::Participant>;

struct RunOptions {
  /// Wall-clock limit for one participant step.
  std::chrono::milliseconds watchdog{30000};
  /// Best-effort only: sleep so that simulation time tracks the wall clock.
  bool paced{false};
};

/// Persistent thread that runs jobs against one participant.
class Worker {
 public:
  explicit Worker(ParticipantPtr p) : state_(std::make_shared<State>()) {
    state_->participant = std::move(p);
    thread_ = std::thread([s = state_] { loop(*s); });
  }

  ~Worker() {
    {
      std::lock_guard lock(state_->mu);
      state_->quit = true;
    }
    state_->cv.notify_all();
    if (!thread_.joinable()) return;
    std::unique_lock lock(state_->mu);
    const bool idle = state_->cv.wait_for(lock, std::chrono::seconds(1), [&] { return !state_->busy; });
    lock.unlock();
    if (idle)
      thread_.join();
    else
      thread_.detach();  // the thread owns its state; it exits once the step returns
  }

  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  void submit(std::function<void(plant::Participant&)> job) {
    {
      std::lock_guard lock(state_->mu);
      state_->job = std::move(job);
      state_->busy = true;
      state_->error = nullptr;
    }
    state_->cv.notify_all();
  }

  /// False when the job is still running at the deadline.
  bool wait_until(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lock(state_->mu);
    return state_->cv.wait_until(lock, deadline, [&] { return !state_->busy; });
  }

  std::exception_ptr error() const {
    std::lock_guard lock(state_->mu);
    return state_->error;
  }

  plant::Participant& participant() { return *state_->participant; }

 private:
  struct State {
    ParticipantPtr participant;
    std::mutex mu;
    std::condition_variable cv;
    std::function<void(plant::Participant&)> job;
    bool busy{false};
    bool quit{false};
    std::exception_ptr error;
  };

  static void loop(State& s) {
    for (;;) {
      std::function<void(plant::Participant&)> job;
      {
        std::unique_lock lock(s.mu);
        s.cv.wait(lock, [&] { return s.quit || (s.busy && s.job); });
        if (s.quit && !s.job) return;
        job = std::move(s.job);
        s.job = nullptr;
      }
      std::exception_ptr err;
      try {
        job(*s.participant);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(s.mu);
        s.error = err;
        s.busy = false;
      }
      s.cv.notify_all();
    }
  }

  std::shared_ptr<State> state_;
  std::thread thread_;
};

/// A routed input as seen from the consumer.
struct InputRoute {
  std::size_t route{0};
  std::string topic;
  std::string source;
  std::string from_topic;
  int delay_steps{1};
};

/// Participants of one run plus their wiring to the hub. Runners drive it.
class Federation {
 public:
  Federation(hub::Hub& hub, std::string run, std::vector<ParticipantPtr> parts, RunOptions opt = {})
      : hub_(hub), run_(std::move(run)), exp_(hub.run_experiment(run_)), opt_(opt) {
    for (auto& p : parts) {
      const auto& id = p->id();
      if (!exp_.participant(id)) fail(ErrorCode::InvalidArgument, id + " is not part of the experiment");
      parts_.emplace(id, p);
    }
    for (const auto& d : exp_.participants) {
      if (!parts_.count(d.id)) fail(ErrorCode::InvalidArgument, "no implementation for participant " + d.id);
      order_.push_back(d.id);
      sessions_[d.id] = hub_.register_participant(d, run_).id;
      workers_.emplace(d.id, std::make_unique<Worker>(parts_.at(d.id)));
    }
    for (std::size_t i = 0; i < exp_.routes.size(); ++i) {
      const auto& r = exp_.routes[i];
      inputs_[r.to.participant].push_back({i, r.to.topic, r.from.participant, r.from.topic, r.delay_steps});
      if (hub::is_site_bus_route(exp_, r)) bus_routes_[{r.from.participant, r.from.topic}].push_back(i);
    }
    for (const auto& d : exp_.participants) {
      for (const auto& t : d.required) {
        bool routed = false;
        for (const auto& in : inputs_[d.id]) routed = routed || in.topic == t;
        if (!routed) {
          externals_[d.id][t] = d.default_for(t);
          obs_.try_emplace(t, d.default_for(t));
        }
      }
      if (d.kind == experiment::DomainKind::hil_realtime && !gateways_.count(d.site_id))
        gateways_.emplace(d.site_id, std::make_unique<hub::SiteGateway>(*hub_.registry().site(d.site_id),
                                                                        hub_.registry().model));
    }
  }

  ~Federation() {
    workers_.clear();
    for (const auto& [_, s] : sessions_) hub_.close_session(s);
  }

  Federation(const Federation&) = delete;
  Federation& operator=(const Federation&) = delete;

  hub::Hub& hub() { return hub_; }
  const std::string& run() const { return run_; }
  const experiment::ExperimentDescription& exp() const { return exp_; }
  const std::vector<std::string>& order() const { return order_; }
  plant::Participant& participant(const std::string& id) { return *parts_.at(id); }
  const std::vector<InputRoute>& inputs(const std::string& id) const {
    static const std::vector<InputRoute> none;
    auto it = inputs_.find(id);
    return it == inputs_.end() ? none : it->second;
  }
  const std::map<std::string, double, std::less<>>& externals(const std::string& id) {
    return externals_[id];
  }
  const experiment::Observations& observations() const { return obs_; }

  /// Publishes the current outputs of `ids`, stamped `t`, in
  /// (sim_time, source, topic) order.
  void publish_outputs(std::vector<std::string> ids, SimTime t, WallTime send_at, WallTime stamp) {
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) publish_values(id, parts_.at(id)->outputs(), t, send_at, stamp);
  }

  void publish_values(const std::string& id, std::vector<plant::PortValue> outs, SimTime t, WallTime send_at,
                      WallTime stamp) {
    std::sort(outs.begin(), outs.end(), [](const auto& a, const auto& b) { return a.topic < b.topic; });
    for (const auto& o : outs) {
      SignalSample s{o.topic, t, o.value, "", Quality::good, id, seq_[{id, o.topic}]++};
      publish(id, s, send_at, stamp);
    }
  }

  /// Deliveries to `consumer` due by `now`, from the hub and the site bus.
  std::vector<hub::Delivery> collect(const std::string& consumer, WallTime now) {
    auto out = hub_.collect(run_, consumer, now);
    if (auto it = bus_.find(consumer); it != bus_.end())
      for (auto& d : it->second.deliver_due(now)) out.push_back(std::move(d));
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return std::tie(a.arrival, a.order) < std::tie(b.arrival, b.order);
    });
    return out;
  }

  std::optional<WallTime> next_arrival() const {
    auto best = hub_.next_arrival(run_);
    for (const auto& [_, q] : bus_)
      if (auto t = q.next_time(); t && (!best || *t < *best)) best = t;
    return best;
  }

  /// Stage machine and queued operator setpoints at a macro boundary.
  void boundary(experiment::StageMachine& stages, SimTime t, WallTime stamp) {
    std::vector<SignalSample> applied;
    for (const auto& c : stages.step(obs_, t).actions) {
      if (c.kind != CommandKind::set_value) continue;
      const auto topic = c.args.at("topic").get<std::string>();
      const auto* e = hub_.registry().model.find_entry(topic);
      const double v = plant::detail::setpoint_value(&hub_.registry().model, c);
      applied.push_back({topic, t, v, e ? e->unit : "", Quality::good, std::string(plant::kStageSource),
                         stage_seq_[topic]++});
    }
    for (auto s : hub_.take_setpoints(run_)) {
      s.sim_time = t;
      applied.push_back(std::move(s));
    }
    for (const auto& s : applied) {
      const double v = numeric(s.value).value_or(0.0);
      for (auto& [pid, ext] : externals_)
        if (auto it = ext.find(s.topic); it != ext.end()) it->second = v;
      obs_[s.topic] = v;
      hub_.store().append(run_, s, stamp);
    }
    hub_.set_progress(run_, t);
  }

  /// Runs `job` on each listed participant concurrently and waits, with the
  /// watchdog, for all of them.
  void run_parallel(const std::vector<std::string>& ids, const std::function<void(plant::Participant&)>& job) {
    for (const auto& id : ids) workers_.at(id)->submit(job);
    const auto deadline = std::chrono::steady_clock::now() + opt_.watchdog;
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& id : sorted) {
      if (!workers_.at(id)->wait_until(deadline)) {
        for (const auto& [_, p] : parts_) p->cancel();
        fail(ErrorCode::ParticipantTimeout, id + " did not finish its step within " +
                                               std::to_string(opt_.watchdog.count()) + " ms");
      }
    }
    for (const auto& id : sorted)
      if (auto err = workers_.at(id)->error()) {
        try {
          std::rethrow_exception(err);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::NumericalOverflow || e.code() == ErrorCode::ParticipantTimeout) throw;
          fail(ErrorCode::ParticipantFault, id + ": " + e.what());
        } catch (const std::exception& e) {
          fail(ErrorCode::ParticipantFault, id + ": " + e.what());
        }
      }
  }

  /// Pushes site logs of hardware participants to the hub store.
  void replicate() {
    for (auto& [_, g] : gateways_) g->replicate(hub_, run_);
  }

  const hub::SiteGateway* gateway(const std::string& site) const {
    auto it = gateways_.find(site);
    return it == gateways_.end() ? nullptr : it->second.get();
  }

  /// Collects deadline reports of hardware participants.
  std::map<std::string, plant::DeadlineReport> deadline_reports() {
    std::map<std::string, plant::DeadlineReport> out;
    for (const auto& [id, p] : parts_)
      if (const auto* h = dynamic_cast<const plant::HilParticipant*>(p.get())) out.emplace(id, h->deadline_report());
    return out;
  }

  RunResult result() {
    RunResult r;
    r.run_id = run_;
    r.mode = exp_.sync_mode;
    r.seed = exp_.seed;
    r.trace = hub_.store().rows(run_);
    r.deadlines = deadline_reports();
    return r;
  }

 private:
  void publish(const std::string& id, const SignalSample& s, WallTime send_at, WallTime stamp) {
    const auto* d = exp_.participant(id);
    const bool hil = d->kind == experiment::DomainKind::hil_realtime;
    SignalSample canon = s;
    if (const auto* e = hub_.registry().model.find_entry(s.topic)) canon.unit = e->unit;
    if (auto it = bus_routes_.find({id, s.topic}); it != bus_routes_.end())
      for (auto idx : it->second) {
        const auto& r = exp_.routes[idx];
        hub::Delivery dv;
        dv.route = idx;
        dv.consumer = r.to.participant;
        dv.from_topic = s.topic;
        dv.sample = canon;
        dv.sample.topic = r.to.topic;
        dv.sample.value = hub::convert_between(hub_.registry().model, canon.value, s.topic, r.to.topic);
        dv.sent = send_at;
        dv.arrival = send_at;
        dv.via_site_bus = true;
        dv.order = bus_order_++;
        bus_[dv.consumer].push({dv, dv.arrival, dv.order});
      }
    if (hil) gateways_.at(d->site_id)->log(canon, stamp);
    hub_.publish(sessions_.at(id), canon, send_at, stamp, !hil);
    if (const auto v = numeric(canon.value)) obs_[canon.topic] = *v;
  }

  hub::Hub& hub_;
  std::string run_;
  experiment::ExperimentDescription exp_;
  RunOptions opt_;
  std::map<std::string, ParticipantPtr> parts_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> sessions_;
  std::map<std::string, std::unique_ptr<Worker>> workers_;
  std::map<std::string, std::vector<InputRoute>> inputs_;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> bus_routes_;
  std::map<std::string, netem::DeliveryQueue<hub::Delivery>> bus_;
  std::uint64_t bus_order_{0};
  std::map<std::string, std::map<std::string, double, std::less<>>> externals_;
  std::map<std::string, std::unique_ptr<hub::SiteGateway>> gateways_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> seq_;
  std::map<std::string, std::uint64_t> stage_seq_;
  experiment::Observations obs_;
};

}  // namespace fedkit::sync
