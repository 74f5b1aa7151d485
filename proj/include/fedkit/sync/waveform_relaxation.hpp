#pragma once

#include <cmath>
#include <map>
#include <set>

#include "fedkit/sync/federation.hpp"

namespace fedkit::sync {

namespace detail {

using WaveKey = std::pair<std::string, std::string>;  // producer, topic
using Waves = std::map<WaveKey, std::vector<double>>;

/// Previous iterate sampled on the macro grid of one window, linearly
/// interpolated in between.
class WaveInputs final : public plant::InputView {
 public:
  WaveInputs(const Waves& waves, std::map<std::string, WaveKey, std::less<>> routed,
             std::map<std::string, double, std::less<>> externals, SimTime start, SimTime step)
      : waves_(waves), routed_(std::move(routed)), externals_(std::move(externals)), start_(start), step_(step) {}

  double value(std::string_view topic, SimTime t) const override {
    if (auto it = routed_.find(topic); it != routed_.end()) {
      const auto& w = waves_.at(it->second);
      const double pos = static_cast<double>((t - start_).count()) / static_cast<double>(step_.count());
      const double clamped = std::clamp(pos, 0.0, static_cast<double>(w.size() - 1));
      const auto j = std::min(static_cast<std::size_t>(clamped), w.size() - 2);
      const double f = clamped - static_cast<double>(j);
      return w[j] + f * (w[j + 1] - w[j]);
    }
    if (auto it = externals_.find(topic); it != externals_.end()) return it->second;
    fail(ErrorCode::UnknownTopic, "no input value for '" + std::string(topic) + "'");
  }

 private:
  const Waves& waves_;
  std::map<std::string, WaveKey, std::less<>> routed_;
  std::map<std::string, double, std::less<>> externals_;
  SimTime start_, step_;
};

inline double output_value(const std::vector<plant::PortValue>& outs, const std::string& topic) {
  for (const auto& o : outs)
    if (o.topic == topic) return numeric(o.value).value_or(0.0);
  fail(ErrorCode::UnknownTopic, "participant does not produce '" + topic + "'");
}

}  // namespace detail

/// Windowed Jacobi waveform relaxation. Every participant integrates the whole
/// window against the previous iterate, then the waveforms are swapped. Only
/// the converged iterate is published.
inline void run_waveform_relaxation(Federation& fed, RunResult& res) {
  const auto& exp = fed.exp();
  if (!exp.wr) fail(ErrorCode::InvalidArgument, "waveform relaxation needs a wr_config");
  const auto cfg = *exp.wr;
  const SimTime H = exp.macro_step;
  if (cfg.window <= SimTime{0} || cfg.window.count() % H.count() != 0)
    fail(ErrorCode::InvalidArgument, "wr window must be a positive multiple of macro_step");
  auto stages = experiment::StageMachine::for_experiment(exp);
  const auto& ids = fed.order();

  std::set<detail::WaveKey> keys;
  for (const auto& r : exp.routes) keys.insert({r.from.participant, r.from.topic});

  fed.publish_outputs(ids, SimTime{0}, SimTime{0}, SimTime{0});
  fed.boundary(stages, SimTime{0}, SimTime{0});

  for (SimTime T0{0}; T0 < exp.duration; T0 += cfg.window) {
    if (fed.hub().stop_requested(fed.run())) {
      res.stopped = true;
      break;
    }
    const SimTime T1 = std::min(T0 + cfg.window, exp.duration);
    const auto steps = static_cast<std::size_t>((T1 - T0) / H);
    const std::int64_t w = T0 / cfg.window;

    std::map<std::string, std::any> snaps;
    std::map<std::string, std::vector<plant::PortValue>> start_outs;
    for (const auto& id : ids) {
      snaps[id] = fed.participant(id).snapshot();
      start_outs[id] = fed.participant(id).outputs();
    }
    detail::Waves old;
    for (const auto& k : keys)
      old[k] = std::vector<double>(steps + 1, detail::output_value(start_outs.at(k.first), k.second));

    std::map<std::string, std::vector<std::vector<plant::PortValue>>> grid;
    for (const auto& id : ids) grid[id];
    double residual = 0.0;
    bool converged = false;
    for (int it = 1; it <= cfg.max_iter; ++it) {
      if (it > 1)
        for (const auto& id : ids) fed.participant(id).restore(snaps.at(id));
      std::map<std::string, detail::WaveInputs> views;
      for (const auto& id : ids) {
        std::map<std::string, detail::WaveKey, std::less<>> routed;
        for (const auto& in : fed.inputs(id)) routed[in.topic] = {in.source, in.from_topic};
        views.emplace(id, detail::WaveInputs(old, std::move(routed), fed.externals(id), T0, H));
      }
      fed.run_parallel(ids, [&](plant::Participant& p) {
        auto& g = grid.at(p.id());
        g.assign(1, start_outs.at(p.id()));
        for (std::size_t j = 0; j < steps; ++j) {
          p.advance(T0 + static_cast<std::int64_t>(j) * H, T0 + static_cast<std::int64_t>(j + 1) * H,
                    views.at(p.id()));
          g.push_back(p.outputs());
        }
      });
      detail::Waves next;
      residual = 0.0;
      for (const auto& k : keys) {
        auto& v = next[k];
        for (const auto& outs : grid.at(k.first)) v.push_back(detail::output_value(outs, k.second));
        for (std::size_t j = 0; j < v.size(); ++j) residual = std::max(residual, std::abs(v[j] - old[k][j]));
      }
      old = std::move(next);
      converged = residual < cfg.tol;
      res.wr_log.push_back({w, it, residual, converged});
      if (converged) break;
    }
    if (!converged) res.not_converged.push_back({w, residual});

    for (std::size_t j = 1; j <= steps; ++j) {
      const SimTime t = T0 + static_cast<std::int64_t>(j) * H;
      for (const auto& id : ids) fed.publish_values(id, grid.at(id)[j], t, t, t);
    }
    for (const auto& id : ids)
      for (const auto& in : fed.inputs(id))
        for (std::size_t j = 0; j <= steps; ++j)
          res.consumptions.push_back({in.route, id, in.topic, in.source, in.from_topic, 0,
                                      T0 + static_cast<std::int64_t>(j) * H, T1, Quality::good, false});
    fed.boundary(stages, T1, T1);
    fed.replicate();
  }
}

}  // namespace fedkit::sync
