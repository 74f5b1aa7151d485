#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "fedkit/core/value.hpp"
#include "fedkit/netem/link.hpp"
#include "fedkit/plant/controller.hpp"
#include "fedkit/plant/model_config.hpp"
#include "fedkit/plant/participant.hpp"

namespace fedkit::plant {

enum class HilMode { chil, phil };

/// Power amplifier and sensor between simulator and device.
struct PhilInterfaceConfig {
  SimTime tau_a{std::chrono::milliseconds{1}};
  /// Total in-loop delay in device steps, including the exchange itself.
  int transport_delay_steps{1};
  double sensor_gain{1.0};

  void check() const {
    if (tau_a < SimTime{0}) fail(ErrorCode::ConfigError, "phil: tau_a must be >= 0");
    if (transport_delay_steps < 1) fail(ErrorCode::ConfigError, "phil: transport_delay_steps must be >= 1");
    if (!std::isfinite(sensor_gain)) fail(ErrorCode::ConfigError, "phil: sensor_gain must be finite");
  }
};

struct HilDevice {
  HilMode mode{HilMode::phil};
  double rh{10.0};
  double lh{0.0};
  PiGains pi;
  SimTime step{std::chrono::milliseconds{10}};
  SimTime deadline{std::chrono::milliseconds{10}};

  void check() const {
    if (step <= SimTime{0}) fail(ErrorCode::ConfigError, "hil: step must be > 0");
    if (deadline <= SimTime{0}) fail(ErrorCode::ConfigError, "hil: deadline must be > 0");
    if (mode == HilMode::phil && !(rh > 0.0)) fail(ErrorCode::ConfigError, "phil: rh must be > 0");
    if (!(lh >= 0.0)) fail(ErrorCode::ConfigError, "phil: lh must be >= 0");
  }
};

struct DeadlineEntry {
  std::int64_t step_index{0};
  SimTime budget{0};
  SimTime actual{0};
  bool missed{false};
};

struct DeadlineReport {
  std::vector<DeadlineEntry> entries;

  void record(std::int64_t step, SimTime budget, SimTime actual) {
    entries.push_back({step, budget, actual, actual > budget});
  }
  std::size_t misses() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.missed ? 1 : 0;
    return n;
  }
  void write_csv(std::ostream& os) const {
    os << "step_index,budget_ns,actual_ns,missed\n";
    for (const auto& e : entries)
      os << e.step_index << ',' << e.budget.count() << ',' << e.actual.count() << ',' << (e.missed ? 1 : 0) << '\n';
  }
};

/// Emulated P-HIL hardware: transport delay queue, first-order amplifier
/// lag (exact for a held input), resistive or RL load, current sensor.
class PhilDeviceModel {
 public:
  PhilDeviceModel(const HilDevice& dev, const PhilInterfaceConfig& iface) : dev_(dev), iface_(iface) {
    dev_.check();
    iface_.check();
    const double h = seconds(dev_.step);
    alpha_ = iface_.tau_a > SimTime{0} ? std::exp(-h / seconds(iface_.tau_a)) : 0.0;
    delay_.assign(static_cast<std::size_t>(iface_.transport_delay_steps - 1), 0.0);
  }

  /// Takes the latest voltage reference and returns the measured current.
  double step(double v_ref) {
    delay_.push_back(v_ref);
    const double v_in = delay_.front();
    delay_.pop_front();
    v_amp_ = alpha_ * v_amp_ + (1.0 - alpha_) * v_in;
    if (dev_.lh > 0.0) {
      const double h = seconds(dev_.step);
      // trapezoidal rule on lh i' = v - rh i
      const double a = dev_.lh / h;
      i_ = ((a - 0.5 * dev_.rh) * i_ + 0.5 * (v_prev_ + v_amp_)) / (a + 0.5 * dev_.rh);
      v_prev_ = v_amp_;
    } else {
      i_ = v_amp_ / dev_.rh;
    }
    const double meas = iface_.sensor_gain * i_;
    if (!std::isfinite(meas) || std::abs(meas) > kOverflowLimit)
      fail(ErrorCode::NumericalOverflow, "phil device current exceeds 1e12");
    return meas;
  }

  double amplifier_voltage() const { return v_amp_; }

 private:
  HilDevice dev_;
  PhilInterfaceConfig iface_;
  double alpha_{0.0};
  std::deque<double> delay_;
  double v_amp_{0.0};
  double v_prev_{0.0};
  double i_{0.0};
};

/// Thevenin equivalent of the simulated network seen by the device.
struct ItmSource {
  double vs{400.0};
  double rs{5.0};
  double ripple_amp{0.0};
  double ripple_hz{0.0};

  double voltage(SimTime t) const {
    if (ripple_amp == 0.0) return vs;
    return vs + ripple_amp * std::sin(2.0 * std::numbers::pi * ripple_hz * seconds(t));
  }
};

/// One P-HIL loop: simulated source coupled to the emulated device by the
/// ideal transformer method. When link models are set the exchange crosses
/// an emulated WAN in both directions; otherwise it stays on the local bus.
struct HilLoop {
  ItmSource source;
  HilDevice device;
  PhilInterfaceConfig iface;
  std::optional<netem::LinkModel> to_device;
  std::optional<netem::LinkModel> from_device;
  std::int64_t steps{1000};
  std::int64_t settle_steps{100};
  /// Sleep to the wall-clock tick of every step.
  bool paced{false};
  std::uint64_t seed{0};
  std::string v_ref_topic{"v_ref"};
  std::string i_meas_topic{"i_meas"};
};

struct HilRunResult {
  std::vector<SignalSample> samples;
  DeadlineReport report;
  std::vector<double> v_ref, i_meas, i_ideal;
  bool overflow{false};
  std::int64_t overflow_step{-1};
  /// max |i_meas - i_ideal| after settle_steps
  double tracking_error{0.0};
};

/// Current of the undelayed loop, used as the tracking reference.
inline std::vector<double> ideal_current(const HilLoop& loop) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(loop.steps));
  const double h = seconds(loop.device.step);
  const double r = loop.source.rs + loop.device.rh;
  double i = 0.0, v_prev = loop.source.voltage(SimTime{0});
  for (std::int64_t k = 0; k < loop.steps; ++k) {
    const SimTime t = k * loop.device.step;
    const double v = loop.source.voltage(t);
    if (loop.device.lh > 0.0) {
      const double a = loop.device.lh / h;
      i = k == 0 ? v / r : ((a - 0.5 * r) * i + 0.5 * (v_prev + v)) / (a + 0.5 * r);
    } else {
      i = v / r;
    }
    v_prev = v;
    out.push_back(i * loop.iface.sensor_gain);
  }
  return out;
}

inline HilRunResult hil_run(const HilLoop& loop) {
  if (loop.device.mode != HilMode::phil) fail(ErrorCode::InvalidArgument, "hil_run: loop requires a phil device");
  PhilDeviceModel device(loop.device, loop.iface);
  const bool remote = loop.to_device.has_value() || loop.from_device.has_value();
  struct Msg {
    double value;
    std::int64_t step;
  };
  netem::Link<Msg> down(loop.to_device.value_or(netem::LinkModel{}), "hil:down", loop.seed);
  netem::Link<Msg> up(loop.from_device.value_or(netem::LinkModel{}), "hil:up", loop.seed);

  HilRunResult res;
  res.i_ideal = ideal_current(loop);
  const SimTime h = loop.device.step;
  double v_latest = loop.source.voltage(SimTime{0});  // what the device last received
  double i_latest = 0.0;                              // what the simulator last received
  double v_sim = v_latest;
  std::uint64_t seq = 0;
  const auto start = steady_now();

  for (std::int64_t k = 0; k < loop.steps; ++k) {
    const SimTime t = k * h;
    if (loop.paced) std::this_thread::sleep_until(std::chrono::steady_clock::time_point(start + t));
    const auto t0 = steady_now();
    SimTime rt{0};
    double i_meas = 0.0;
    try {
      if (remote)
        for (const auto& m : down.deliver_due(t)) v_latest = m.value;
      else if (k > 0)
        v_latest = v_sim;
      i_meas = device.step(v_latest);

      if (remote) {
        const auto at = up.send({i_meas, k}, t);
        for (const auto& m : up.deliver_due(t)) i_latest = m.value;
        rt += at ? *at - t : loop.device.deadline;
      } else {
        i_latest = i_meas;
      }
      v_sim = loop.source.voltage(t) - loop.source.rs * i_latest;
      if (!std::isfinite(v_sim) || std::abs(v_sim) > kOverflowLimit)
        fail(ErrorCode::NumericalOverflow, "itm loop voltage exceeds 1e12");
      if (remote) {
        const auto at = down.send({v_sim, k}, t);
        rt += at ? *at - t : loop.device.deadline;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NumericalOverflow) throw;
      res.overflow = true;
      res.overflow_step = k;
      break;
    }
    res.report.record(k, loop.device.deadline, (steady_now() - t0) + rt);

    res.v_ref.push_back(v_sim);
    res.i_meas.push_back(i_meas);
    res.samples.push_back({loop.v_ref_topic, t, v_sim, "V", Quality::good, "sim", seq});
    res.samples.push_back({loop.i_meas_topic, t, i_meas, "A", Quality::good, "device", seq});
    ++seq;
    if (k >= loop.settle_steps)
      res.tracking_error = std::max(res.tracking_error, std::abs(i_meas - res.i_ideal[static_cast<std::size_t>(k)]));
  }
  return res;
}

/// Hardware participant in a federation. Each internal step is timed on
/// the wall clock; the runner supplies the in-loop network round trip of
/// the exchange that fed the step.
class HilParticipant final : public Participant {
 public:
  HilParticipant(experiment::ParticipantDescriptor d, HilDevice dev, PhilInterfaceConfig iface, std::string in,
                 std::optional<std::string> out)
      : Participant(std::move(d)), dev_(dev), iface_(iface), in_(std::move(in)), out_(std::move(out)) {
    dev_.step = descriptor().step;
    dev_.deadline = descriptor().realtime_deadline.value_or(descriptor().step);
    reset();
  }

  static std::unique_ptr<Participant> create(const experiment::ParticipantDescriptor& d, HilMode mode) {
    ModelReader r(d);
    HilDevice dev;
    dev.mode = mode;
    PhilInterfaceConfig iface;
    std::optional<std::string> in, out;
    if (mode == HilMode::phil) {
      dev.rh = r.number("rh", dev.rh);
      dev.lh = r.number("lh", dev.lh);
      iface.tau_a = SimTime{std::llround(r.number("tau_a_ms", 1.0) * 1e6)};
      iface.transport_delay_steps = r.params().optional<int>("transport_delay_steps", 1);
      iface.sensor_gain = r.number("sensor_gain", 1.0);
      in = r.input("v_ref");
      out = r.output("i_meas");
    } else {
      dev.pi.kp = r.number("kp", 0.0);
      dev.pi.ki = r.number("ki", 0.0);
      dev.pi.ref = r.number("ref", 0.0);
      dev.pi.x0 = r.number("x0", 0.0);
      in = r.input("measure");
      out = r.output("output");
    }
    r.finish();
    if (!in)
      fail(ErrorCode::SchemaError, "participants." + d.id + ".model: no topic bound to '" +
                                       (mode == HilMode::phil ? "v_ref" : "measure") + "'");
    dev.step = d.step;
    dev.check();
    iface.check();
    return std::make_unique<HilParticipant>(d, dev, iface, *in, out);
  }

  std::vector<PortValue> outputs() const override {
    if (!out_) return {};
    return {{*out_, held_}};
  }

  void advance(SimTime from, SimTime to, const InputView& in) override {
    const auto n = substeps(from, to);
    for (std::int64_t k = 0; k < n; ++k) {
      const SimTime t = from + k * descriptor().step;
      const auto t0 = steady_now();
      const double u = in.value(in_, t);
      if (dev_.mode == HilMode::phil) {
        held_ = phil_->step(u);
      } else {
        const double err = dev_.pi.ref - u;
        const double h = seconds(descriptor().step);
        held_ = dev_.pi.kp * err + x_ + 0.5 * h * dev_.pi.ki * err;
        x_ += h * dev_.pi.ki * err;
      }
      report_.record(step_index_++, dev_.deadline, (steady_now() - t0) + in_loop_delay_);
    }
  }

  /// Round trip of the exchange feeding the next advance() call.
  void set_in_loop_delay(SimTime d) { in_loop_delay_ = d; }
  const DeadlineReport& deadline_report() const { return report_; }
  const HilDevice& device() const { return dev_; }
  const std::string& input_topic() const { return in_; }

  std::any snapshot() const override { return State{*phil_, held_, x_}; }
  void restore(const std::any& s) override {
    const auto& st = std::any_cast<const State&>(s);
    *phil_ = st.phil;
    held_ = st.held;
    x_ = st.x;
  }

 private:
  struct State {
    PhilDeviceModel phil;
    double held;
    double x;
  };

  void reset() {
    phil_ = std::make_unique<PhilDeviceModel>(dev_, iface_);
    x_ = dev_.pi.x0;
    held_ = dev_.mode == HilMode::chil ? dev_.pi.x0 : 0.0;
  }

  HilDevice dev_;
  PhilInterfaceConfig iface_;
  std::string in_;
  std::optional<std::string> out_;
  std::unique_ptr<PhilDeviceModel> phil_;
  double held_{0.0};
  double x_{0.0};
  std::int64_t step_index_{0};
  SimTime in_loop_delay_{0};
  DeadlineReport report_;
};

}  // namespace fedkit::plant
