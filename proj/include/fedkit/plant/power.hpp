#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "fedkit/plant/model_config.hpp"
#include "fedkit/plant/participant.hpp"

namespace fedkit::plant {

/// Thevenin source (vs, rs, optional series ls) feeding a resistive load rl
/// with one controllable current injection at the load node. The injection
/// is i_inj plus p_set / v_nom. An optional sinusoidal ripple rides on vs.
struct GridModel {
  double vs{400.0};
  double rs{1.0};
  double ls{0.0};
  double rl{10.0};
  double v_nom{400.0};
  double ripple_amp{0.0};
  double ripple_hz{0.0};

  void check() const {
    if (!(rs > 0.0)) fail(ErrorCode::ConfigError, "grid: rs must be > 0");
    if (!(rl > 0.0)) fail(ErrorCode::ConfigError, "grid: rl must be > 0");
    if (!(ls >= 0.0)) fail(ErrorCode::ConfigError, "grid: ls must be >= 0");
    if (!(v_nom > 0.0)) fail(ErrorCode::ConfigError, "grid: v_nom must be > 0");
    if (!std::isfinite(vs) || !std::isfinite(ripple_amp) || !(ripple_hz >= 0.0))
      fail(ErrorCode::ConfigError, "grid: source parameters must be finite");
  }

  double source(SimTime t) const {
    if (ripple_amp == 0.0) return vs;
    return vs + ripple_amp * std::sin(2.0 * std::numbers::pi * ripple_hz * seconds(t));
  }
};

inline const std::vector<std::string>& grid_inputs() {
  static const std::vector<std::string> v{"i_inj", "p_set"};
  return v;
}
inline const std::vector<std::string>& grid_outputs() {
  static const std::vector<std::string> v{"v_load", "i_src"};
  return v;
}

/// State-space form with inputs (i_inj, p_set) and outputs (v_load, i_src).
/// With ls > 0 the state is the source current; otherwise the system is static.
/// e and f hold the contribution of vs; use grid_affine() for the ripple.
inline LinearSystem grid_system(const GridModel& m) {
  m.check();
  const double g = 1.0 / m.v_nom;
  if (m.ls > 0.0) {
    auto s = LinearSystem::zeros(1, grid_inputs(), grid_outputs());
    s.A(0, 0) = -(m.rs + m.rl) / m.ls;
    s.B(0, 0) = -m.rl / m.ls;
    s.B(0, 1) = -m.rl * g / m.ls;
    s.e(0) = m.vs / m.ls;
    s.C(0, 0) = m.rl;
    s.C(1, 0) = 1.0;
    s.D(0, 0) = m.rl;
    s.D(0, 1) = m.rl * g;
    s.x0(0) = m.vs / (m.rs + m.rl);
    return s;
  }
  auto s = LinearSystem::zeros(0, grid_inputs(), grid_outputs());
  const double par = m.rs * m.rl / (m.rs + m.rl);
  s.D(0, 0) = par;
  s.D(0, 1) = par * g;
  s.D(1, 0) = -m.rl / (m.rs + m.rl);
  s.D(1, 1) = -m.rl * g / (m.rs + m.rl);
  s.f(0) = m.vs * m.rl / (m.rs + m.rl);
  s.f(1) = m.vs / (m.rs + m.rl);
  return s;
}

/// Affine terms (e, f) at time t, including ripple.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> grid_affine(const GridModel& m, SimTime t) {
  const double v = m.source(t);
  if (m.ls > 0.0) {
    Eigen::VectorXd e(1), f = Eigen::VectorXd::Zero(2);
    e(0) = v / m.ls;
    return {e, f};
  }
  Eigen::VectorXd f(2);
  f(0) = v * m.rl / (m.rs + m.rl);
  f(1) = v / (m.rs + m.rl);
  return {Eigen::VectorXd::Zero(0), f};
}

struct GridInputs {
  double i_inj{0.0};
  double p_set{0.0};
};

struct PowerState {
  double i_src{0.0};  // inductor current when ls > 0
  double v_load{0.0};
  SimTime sim_time{0};
};

struct GridOutputs {
  double v_load{0.0};
  double i_src{0.0};
};

/// Steady state with no injection.
inline PowerState initial_power_state(const GridModel& m) {
  m.check();
  const double i = m.vs / (m.rs + m.rl);
  return {i, m.rl * i, SimTime{0}};
}

/// One trapezoidal step of length dt with inputs held over the step.
inline std::pair<PowerState, GridOutputs> power_step(const PowerState& state, const GridModel& model,
                                                     const GridInputs& in, SimTime dt) {
  if (dt <= SimTime{0}) fail(ErrorCode::InvalidArgument, "power_step: dt must be > 0");
  const auto sys = grid_system(model);
  Eigen::VectorXd u(2);
  u << in.i_inj, in.p_set;
  const SimTime t1 = state.sim_time + dt;
  const auto [e0, f0] = grid_affine(model, state.sim_time);
  const auto [e1, f1] = grid_affine(model, t1);

  Eigen::VectorXd x(sys.states());
  if (x.size() > 0) x(0) = state.i_src;
  if (x.size() > 0) {
    const TrapezoidStepper stepper(sys.A, sys.B, seconds(dt));
    x = stepper.step(x, u, u, e0, e1);
    check_finite(x, "power_step");
  }
  const Eigen::VectorXd y = sys.C * x + sys.D * u + f1;
  check_finite(y, "power_step");

  PowerState next{y(1), y(0), t1};
  return {next, GridOutputs{y(0), y(1)}};
}

class GridParticipant final : public LinearParticipant {
 public:
  GridParticipant(experiment::ParticipantDescriptor d, const GridModel& m, const std::vector<std::optional<std::string>>& in,
                  const std::vector<std::optional<std::string>>& out)
      : LinearParticipant(std::move(d), bind_ports(grid_system(m), in, out)), model_(m), out_rows_(rows(out)) {}

  static std::unique_ptr<Participant> create(const experiment::ParticipantDescriptor& d) {
    ModelReader r(d);
    GridModel m;
    m.vs = r.number("vs", m.vs);
    m.rs = r.number("rs", m.rs);
    m.ls = r.number("ls", m.ls);
    m.rl = r.number("rl", m.rl);
    m.v_nom = r.number("v_nom", m.v_nom);
    m.ripple_amp = r.number("ripple_amp", m.ripple_amp);
    m.ripple_hz = r.number("ripple_hz", m.ripple_hz);
    std::vector<std::optional<std::string>> in, out;
    for (const auto& role : grid_inputs()) in.push_back(r.input(role));
    for (const auto& role : grid_outputs()) out.push_back(r.output(role));
    r.finish();
    return std::make_unique<GridParticipant>(d, m, in, out);
  }

  const GridModel& model() const { return model_; }

 protected:
  Eigen::VectorXd state_affine(SimTime t) const override { return grid_affine(model_, t).first; }
  Eigen::VectorXd output_affine(SimTime t) const override { return grid_affine(model_, t).second(out_rows_); }

 private:
  static std::vector<Eigen::Index> rows(const std::vector<std::optional<std::string>>& out) {
    std::vector<Eigen::Index> r;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i]) r.push_back(static_cast<Eigen::Index>(i));
    return r;
  }

  GridModel model_;
  std::vector<Eigen::Index> out_rows_;
};

}  // namespace fedkit::plant
