#pragma once

#include <map>
#include <numeric>
#include <thread>

#include "fedkit/sync/federation.hpp"

namespace fedkit::sync {

/// Free-running participants on a virtual wall clock equal to simulation
/// time. At each tick: publish, boundary actions, deliveries, reads, steps.
/// Consumers hold the latest arrived value; nothing is retransmitted.
inline void run_best_effort(Federation& fed, RunResult& res, const RunOptions& opt = {}) {
  const auto& exp = fed.exp();
  std::int64_t g = exp.macro_step.count();
  for (const auto& p : exp.participants) g = std::gcd(g, p.step.count());
  const SimTime tick{g};
  auto stages = experiment::StageMachine::for_experiment(exp);
  std::map<std::string, std::map<std::string, hub::Delivery>> latest;
  const auto real_start = std::chrono::steady_clock::now();

  for (SimTime T{0};; T += tick) {
    std::vector<std::string> due;
    for (const auto& p : exp.participants)
      if (T.count() % p.step.count() == 0) due.push_back(p.id);
    fed.publish_outputs(due, T, T, T);
    if (T.count() % exp.macro_step.count() == 0) {
      fed.boundary(stages, T, T);
      fed.replicate();
    }
    if (T >= exp.duration) break;
    if (fed.hub().stop_requested(fed.run())) {
      res.stopped = true;
      break;
    }

    std::map<std::string, plant::HeldInputs> views;
    for (const auto& id : due) {
      for (auto& d : fed.collect(id, T)) latest[id][d.sample.topic] = std::move(d);
      const auto* desc = exp.participant(id);
      plant::HeldInputs view(fed.externals(id));
      SimTime in_loop{0};
      for (const auto& in : fed.inputs(id)) {
        Consumption c{in.route, id, in.topic, in.source, in.from_topic, 0, SimTime{0}, T, Quality::bad, false};
        auto it = latest[id].find(in.topic);
        if (it == latest[id].end()) {
          view.set(in.topic, desc->default_for(in.topic));
          c.produced_at = SimTime{-1};
        } else {
          const auto& d = it->second;
          view.set(in.topic, numeric(d.sample.value).value_or(0.0));
          c.produced_at = d.sample.sim_time;
          c.seq = d.sample.seq;
          c.via_site_bus = d.via_site_bus;
          c.quality = T - d.sample.sim_time > desc->step ? Quality::stale : Quality::good;
          in_loop = std::max(in_loop, 2 * (d.arrival - d.sent));
        }
        res.consumptions.push_back(c);
      }
      if (auto* h = dynamic_cast<plant::HilParticipant*>(&fed.participant(id))) h->set_in_loop_delay(in_loop);
      views.emplace(id, std::move(view));
    }
    fed.run_parallel(due, [&](plant::Participant& p) { p.advance(T, T + p.descriptor().step, views.at(p.id())); });
    if (opt.paced) std::this_thread::sleep_until(real_start + std::chrono::duration_cast<std::chrono::nanoseconds>(T + tick));
  }
}

}  // namespace fedkit::sync
