#pragma once

#include <functional>

#include "fedkit/plant/factory.hpp"
#include "fedkit/sync/best_effort.hpp"
#include "fedkit/sync/conservative.hpp"
#include "fedkit/sync/waveform_relaxation.hpp"

namespace fedkit::sync {

/// Supplies participants marked `external` (remote processes).
using ExternalFactory = std::function<ParticipantPtr(const experiment::ParticipantDescriptor&)>;

inline std::vector<ParticipantPtr> build_participants(const experiment::ExperimentDescription& exp,
                                                      const ExternalFactory& external = {}) {
  std::vector<ParticipantPtr> out;
  for (const auto& d : exp.participants) {
    if (d.external) {
      if (!external) fail(ErrorCode::InvalidArgument, d.id + " is external but no remote endpoint is attached");
      out.push_back(external(d));
    } else {
      out.push_back(plant::make_participant(d, exp.seed));
    }
  }
  return out;
}

/// Drives an existing run of `hub` to completion and records its final state.
inline RunResult execute_run(hub::Hub& hub, const std::string& run, std::vector<ParticipantPtr> parts,
                             const RunOptions& opt = {}) {
  using hub::RunState;
  if (hub.run_state(run) != RunState::stopped) hub.set_run_state(run, RunState::running);
  try {
    Federation fed(hub, run, std::move(parts), opt);
    RunResult res;
    switch (fed.exp().sync_mode) {
      case experiment::SyncMode::conservative: run_conservative(fed, res); break;
      case experiment::SyncMode::best_effort: run_best_effort(fed, res, opt); break;
      case experiment::SyncMode::waveform_relaxation: run_waveform_relaxation(fed, res); break;
    }
    fed.replicate();
    auto full = fed.result();
    full.stopped = res.stopped || hub.stop_requested(run);
    full.grants = std::move(res.grants);
    full.wr_log = std::move(res.wr_log);
    full.not_converged = std::move(res.not_converged);
    full.consumptions = std::move(res.consumptions);
    hub.set_run_state(run, full.stopped ? RunState::stopped : RunState::finished);
    return full;
  } catch (const Error& e) {
    hub.set_run_state(run, RunState::failed, e.what());
    throw;
  }
}

/// Runs every site in this process against a private hub.
inline RunResult run_local(const experiment::Registry& reg, const experiment::ExperimentDescription& exp,
                           const RunOptions& opt = {}, const ExternalFactory& external = {}) {
  hub::Hub hub(reg);
  const auto run = hub.create_run(exp, exp.sync_mode != experiment::SyncMode::best_effort);
  return execute_run(hub, run, build_participants(exp, external), opt);
}

}  // namespace fedkit::sync
