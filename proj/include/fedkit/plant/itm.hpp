#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedkit/plant/hil.hpp"

namespace fedkit::plant {

enum class Verdict { stable, unstable };

constexpr std::string_view to_string(Verdict v) { return v == Verdict::stable ? "stable" : "unstable"; }

struct ItmStability {
  double loop_gain{0.0};
  Verdict verdict{Verdict::unstable};
};

/// Resistive ideal-transformer loop under pure delay. Gain 1 is unstable.
inline ItmStability itm_stability(double rs, double rh, int delay_steps) {
  if (!(rs > 0.0) || !(rh > 0.0)) fail(ErrorCode::InvalidArgument, "itm_stability: rs and rh must be > 0");
  if (delay_steps < 1) fail(ErrorCode::InvalidArgument, "itm_stability: delay_steps must be >= 1");
  const double g = rs / rh;
  return {g, g < 1.0 ? Verdict::stable : Verdict::unstable};
}

struct ItmSimulation {
  Verdict verdict{Verdict::unstable};
  bool overflow{false};
  std::int64_t overflow_step{-1};
  /// |e| at each step, e = i_meas - i_ideal
  std::vector<double> error;
  /// median |e[k+1] / e[k]| over the first steps where e is well above rounding
  double decay_ratio{0.0};
};

/// Runs the local loop from a de-energized device and classifies it:
/// overflow or an error that has not decayed by 1e-6 is unstable.
inline ItmSimulation simulate_itm(double rs, double rh, int delay_steps, std::int64_t steps = 5000,
                                  SimTime tau_a = std::chrono::milliseconds{1}) {
  HilLoop loop;
  loop.source.rs = rs;
  loop.device.rh = rh;
  loop.iface.transport_delay_steps = delay_steps;
  loop.iface.tau_a = tau_a;
  loop.steps = steps;
  loop.settle_steps = 0;
  const auto run = hil_run(loop);

  ItmSimulation sim;
  sim.overflow = run.overflow;
  sim.overflow_step = run.overflow_step;
  for (std::size_t k = 0; k < run.i_meas.size(); ++k) sim.error.push_back(std::abs(run.i_meas[k] - run.i_ideal[k]));

  std::vector<double> ratios;
  const double scale = sim.error.empty() ? 0.0 : *std::max_element(sim.error.begin(), sim.error.end());
  for (std::size_t k = 1; k + 1 < sim.error.size() && ratios.size() < 50; ++k)
    if (sim.error[k] > 1e-9 * scale && sim.error[k + 1] > 0.0) ratios.push_back(sim.error[k + 1] / sim.error[k]);
  if (!ratios.empty()) {
    std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2), ratios.end());
    sim.decay_ratio = ratios[ratios.size() / 2];
  }

  if (!run.overflow && !sim.error.empty()) {
    const double first = std::max(scale, 1e-12);
    sim.verdict = sim.error.back() < 1e-6 * first ? Verdict::stable : Verdict::unstable;
  }
  return sim;
}

}  // namespace fedkit::plant
