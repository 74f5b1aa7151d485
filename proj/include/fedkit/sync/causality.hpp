#pragma once

#include <vector>

#include "fedkit/experiment/sites.hpp"
#include "fedkit/sync/run_result.hpp"

namespace fedkit::sync {

struct CausalityViolation {
  Consumption record;
  SimTime min_arrival{0};
};

/// Earliest simulation time at which a sample on `route` may be used,
/// relative to its production time. Lockstep modes follow the route's
/// delay_steps; waveform relaxation exchanges whole windows; best-effort
/// inherits the nominal link delay.
inline SimTime route_latency(const experiment::ExperimentDescription& exp, const experiment::Registry& reg,
                             const experiment::Route& r) {
  switch (exp.sync_mode) {
    case experiment::SyncMode::conservative: return (r.delay_steps - 1) * exp.macro_step;
    case experiment::SyncMode::waveform_relaxation: return SimTime{0};
    case experiment::SyncMode::best_effort: {
      const auto* a = exp.participant(r.from.participant);
      const auto* b = exp.participant(r.to.participant);
      if (!a || !b || a->site_id == b->site_id) return SimTime{0};
      const auto link = reg.link(a->site_id, b->site_id);
      return link ? link->base_delay : SimTime{0};
    }
  }
  return SimTime{0};
}

/// Every consumption with used_at < produced_at + route latency, in record order.
inline std::vector<CausalityViolation> detect_causality_violations(const std::vector<Consumption>& records,
                                                                   const experiment::ExperimentDescription& exp,
                                                                   const experiment::Registry& reg) {
  std::vector<CausalityViolation> out;
  for (const auto& c : records) {
    if (c.quality == Quality::bad || c.route >= exp.routes.size()) continue;
    const SimTime min_arrival = c.produced_at + route_latency(exp, reg, exp.routes[c.route]);
    if (c.used_at < min_arrival) out.push_back({c, min_arrival});
  }
  return out;
}

}  // namespace fedkit::sync
