#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "fedkit/core/format.hpp"
#include "fedkit/experiment/types.hpp"
#include "fedkit/hub/trace_store.hpp"
#include "fedkit/plant/hil.hpp"

namespace fedkit::sync {

struct TimeGrant {
  std::int64_t barrier_round{0};
  SimTime granted_until{0};
  WallTime wall_time{0};
};

struct WrLogEntry {
  std::int64_t window_index{0};
  int iteration{0};
  double residual{0.0};
  bool converged{false};
};

/// Raised as a flag, not an exception: the run continues past the window.
struct WRNotConverged {
  std::int64_t window_index{0};
  double residual{0.0};
};

/// One routed input value used by a consumer step.
struct Consumption {
  std::size_t route{0};
  std::string consumer;
  std::string topic;       // consumer side
  std::string source;      // producer participant
  std::string from_topic;  // producer side
  std::uint64_t seq{0};
  SimTime produced_at{0};
  SimTime used_at{0};
  Quality quality{Quality::good};
  bool via_site_bus{false};
};

struct RunResult {
  std::string run_id;
  experiment::SyncMode mode{experiment::SyncMode::conservative};
  std::uint64_t seed{0};
  bool stopped{false};
  std::vector<hub::TraceRow> trace;
  std::vector<TimeGrant> grants;
  std::vector<WrLogEntry> wr_log;
  std::vector<WRNotConverged> not_converged;
  std::vector<Consumption> consumptions;
  std::map<std::string, plant::DeadlineReport> deadlines;

  std::string trace_csv() const { return hub::trace_csv(trace); }

  void write_grants_csv(std::ostream& os) const {
    os << "barrier_round,granted_until_ns,wall_time_ns\n";
    for (const auto& g : grants) os << g.barrier_round << ',' << g.granted_until.count() << ',' << g.wall_time.count() << '\n';
  }

  void write_wr_log_csv(std::ostream& os) const {
    os << "window_index,iteration,residual,converged\n";
    for (const auto& e : wr_log)
      os << e.window_index << ',' << e.iteration << ',' << format_double(e.residual) << ',' << (e.converged ? 1 : 0) << '\n';
  }

  /// All HIL participants' reports concatenated in participant order.
  void write_deadline_csv(std::ostream& os) const {
    os << "step_index,budget_ns,actual_ns,missed\n";
    for (const auto& [_, r] : deadlines)
      for (const auto& e : r.entries)
        os << e.step_index << ',' << e.budget.count() << ',' << e.actual.count() << ',' << (e.missed ? 1 : 0) << '\n';
  }

  /// used_at - produced_at of every consumed sample that had arrived.
  std::vector<SimTime> staleness() const {
    std::vector<SimTime> out;
    for (const auto& c : consumptions)
      if (c.quality != Quality::bad) out.push_back(c.used_at - c.produced_at);
    return out;
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Staleness of every consumed sample in units of `step`.
inline std::vector<double> staleness_steps(const RunResult& r, SimTime step) {
  std::vector<double> out;
  for (auto s : r.staleness()) out.push_back(static_cast<double>(s.count()) / static_cast<double>(step.count()));
  return out;
}

}  // namespace fedkit::sync
