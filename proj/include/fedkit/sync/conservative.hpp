#pragma once

#include <map>
#include <set>

#include "fedkit/sync/federation.hpp"

namespace fedkit::sync {

/// Groups participants so that every zero-delay producer sits in an earlier
/// group than its consumers. Ties keep id order.
inline std::vector<std::vector<std::string>> zero_delay_levels(const experiment::ExperimentDescription& exp) {
  std::map<std::string, std::set<std::string>> preds;
  for (const auto& p : exp.participants) preds[p.id];
  for (const auto& r : exp.routes)
    if (r.delay_steps == 0 && r.from.participant != r.to.participant) preds[r.to.participant].insert(r.from.participant);
  std::vector<std::vector<std::string>> levels;
  std::set<std::string> done;
  while (done.size() < preds.size()) {
    std::vector<std::string> level;
    for (const auto& [id, ps] : preds) {
      if (done.count(id)) continue;
      if (std::all_of(ps.begin(), ps.end(), [&](const auto& p) { return done.count(p) > 0; })) level.push_back(id);
    }
    if (level.empty()) fail(ErrorCode::UnsupportedTopology, "routes with delay_steps 0 form a cycle");
    done.insert(level.begin(), level.end());
    levels.push_back(std::move(level));
  }
  return levels;
}

/// Global barrier with one macro step of lookahead. The step producing
/// t_{k+1} reads inputs stamped t_{k+1-d}; a route with d = 0 makes its
/// producer run first within the round. Link delays only move the emulated
/// wall clock, never the trace.
inline void run_conservative(Federation& fed, RunResult& res) {
  const auto& exp = fed.exp();
  const SimTime H = exp.macro_step;
  const auto levels = zero_delay_levels(exp);
  auto stages = experiment::StageMachine::for_experiment(exp);
  WallTime wall{0};
  std::map<std::string, std::map<std::pair<std::size_t, std::int64_t>, hub::Delivery>> buffer;

  fed.publish_outputs(fed.order(), SimTime{0}, wall, SimTime{0});
  fed.boundary(stages, SimTime{0}, SimTime{0});
  fed.replicate();

  for (std::int64_t k = 0; k < exp.rounds(); ++k) {
    if (fed.hub().stop_requested(fed.run())) {
      res.stopped = true;
      break;
    }
    const SimTime t = k * H, t1 = t + H;
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const auto& level = levels[li];
      std::map<std::string, plant::HeldInputs> views;
      for (const auto& id : level) {
        plant::HeldInputs view(fed.externals(id));
        SimTime in_loop{0};
        for (const auto& in : fed.inputs(id)) {
          const SimTime stamp = t1 - in.delay_steps * H;
          Consumption c{in.route, id, in.topic, in.source, in.from_topic, 0, stamp, t, Quality::good, false};
          if (stamp < SimTime{0}) {
            view.set(in.topic, fed.exp().participant(id)->default_for(in.topic));
            c.quality = Quality::bad;
            res.consumptions.push_back(c);
            continue;
          }
          auto& buf = buffer[id];
          const auto key = std::pair{in.route, stamp.count()};
          for (;;) {
            for (const auto& c : fed.order())
              for (auto& d : fed.collect(c, wall)) buffer[c][{d.route, d.sample.sim_time.count()}] = std::move(d);
            if (buf.count(key)) break;
            const auto next = fed.next_arrival();
            if (!next) fail(ErrorCode::ParticipantFault, id + ": input " + in.topic + " at " +
                                                             std::to_string(stamp.count()) + " ns was never delivered");
            wall = std::max(wall, *next);
          }
          const auto& d = buf.at(key);
          view.set(in.topic, numeric(d.sample.value).value_or(0.0));
          c.seq = d.sample.seq;
          c.via_site_bus = d.via_site_bus;
          in_loop = std::max(in_loop, 2 * (d.arrival - d.sent));
          res.consumptions.push_back(c);
          buf.erase(buf.begin(), buf.upper_bound({in.route, stamp.count()}));
        }
        if (auto* h = dynamic_cast<plant::HilParticipant*>(&fed.participant(id))) h->set_in_loop_delay(in_loop);
        views.emplace(id, std::move(view));
      }
      if (li == 0) res.grants.push_back({k + 1, t1, wall});
      const auto started = steady_now();
      fed.run_parallel(level, [&](plant::Participant& p) { p.advance(t, t1, views.at(p.id())); });
      wall += steady_now() - started;
      fed.publish_outputs(level, t1, wall, t1);
    }
    fed.boundary(stages, t1, t1);
    fed.replicate();
  }
}

}  // namespace fedkit::sync
