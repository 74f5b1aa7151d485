#pragma once

#include <any>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedkit/core/value.hpp"
#include "fedkit/experiment/types.hpp"
#include "fedkit/plant/linear_system.hpp"

namespace fedkit::plant {

/// Input signals as seen by a participant while it integrates. Conservative
/// and best-effort runs hold values (zero-order hold); waveform relaxation
/// interpolates the previous iterate.
class InputView {
 public:
  virtual ~InputView() = default;
  virtual double value(std::string_view topic, SimTime t) const = 0;
};

class HeldInputs final : public InputView {
 public:
  HeldInputs() = default;
  explicit HeldInputs(std::map<std::string, double, std::less<>> values) : values_(std::move(values)) {}

  void set(const std::string& topic, double v) { values_[topic] = v; }
  double value(std::string_view topic, SimTime) const override {
    auto it = values_.find(topic);
    if (it == values_.end()) fail(ErrorCode::UnknownTopic, "no input value for '" + std::string(topic) + "'");
    return it->second;
  }
  const auto& values() const { return values_; }

 private:
  std::map<std::string, double, std::less<>> values_;
};

struct PortValue {
  std::string topic;
  Value value;
};

/// A federated actor advanced by exactly one runner worker at a time.
class Participant {
 public:
  explicit Participant(experiment::ParticipantDescriptor d) : desc_(std::move(d)) {}
  virtual ~Participant() = default;
  Participant(const Participant&) = delete;
  Participant& operator=(const Participant&) = delete;

  const experiment::ParticipantDescriptor& descriptor() const { return desc_; }
  const std::string& id() const { return desc_.id; }

  /// Output values at the current state time.
  virtual std::vector<PortValue> outputs() const = 0;
  /// Advances the state from `from` to `to` in internal steps of descriptor().step.
  virtual void advance(SimTime from, SimTime to, const InputView& inputs) = 0;

  virtual std::any snapshot() const = 0;
  virtual void restore(const std::any& state) = 0;

  /// Linear model for the monolithic reference solver, when one exists.
  virtual std::optional<LinearSystem> linear_model() const { return std::nullopt; }
  /// Unblocks a participant stuck in advance(); used by watchdogs on shutdown.
  virtual void cancel() {}

 protected:
  std::int64_t substeps(SimTime from, SimTime to) const {
    const auto span = to - from;
    if (span < SimTime{0} || span.count() % desc_.step.count() != 0)
      fail(ErrorCode::ParticipantFault, id() + ": advance span is not a multiple of the participant step");
    return span / desc_.step;
  }

 private:
  experiment::ParticipantDescriptor desc_;
};

/// Participant backed by a LinearSystem integrated with the trapezoidal
/// rule. Subclasses may make the affine terms time dependent.
class LinearParticipant : public Participant {
 public:
  LinearParticipant(experiment::ParticipantDescriptor d, LinearSystem sys)
      : Participant(std::move(d)), sys_(std::move(sys)) {
    sys_.check();
    x_ = sys_.x0;
    u_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys_.inputs.size()));
    for (std::size_t i = 0; i < sys_.inputs.size(); ++i)
      u_[static_cast<Eigen::Index>(i)] = descriptor().default_for(sys_.inputs[i]);
    stepper_ = TrapezoidStepper(sys_.A, sys_.B, seconds(descriptor().step));
  }

  std::vector<PortValue> outputs() const override {
    const Eigen::VectorXd y = sys_.C * x_ + sys_.D * u_ + output_affine(t_);
    std::vector<PortValue> out;
    for (std::size_t i = 0; i < sys_.outputs.size(); ++i)
      out.push_back({sys_.outputs[i], y[static_cast<Eigen::Index>(i)]});
    return out;
  }

  void advance(SimTime from, SimTime to, const InputView& in) override {
    const auto n = substeps(from, to);
    for (std::int64_t k = 0; k < n; ++k) {
      const SimTime t0 = from + k * descriptor().step;
      const SimTime t1 = t0 + descriptor().step;
      const Eigen::VectorXd u0 = read(in, t0), u1 = read(in, t1);
      x_ = stepper_.step(x_, u0, u1, state_affine(t0), state_affine(t1));
      check_finite(x_, id());
    }
    u_ = read(in, to);
    t_ = to;
  }

  std::any snapshot() const override { return State{x_, u_, t_}; }
  void restore(const std::any& s) override {
    const auto& st = std::any_cast<const State&>(s);
    x_ = st.x;
    u_ = st.u;
    t_ = st.t;
  }

  std::optional<LinearSystem> linear_model() const override { return sys_; }

  /// (e, f) at time t, for solvers that assemble this participant's model.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> affine_at(SimTime t) const { return {state_affine(t), output_affine(t)}; }

  const Eigen::VectorXd& state() const { return x_; }
  const LinearSystem& system() const { return sys_; }

 protected:
  virtual Eigen::VectorXd state_affine(SimTime) const { return sys_.e; }
  virtual Eigen::VectorXd output_affine(SimTime) const { return sys_.f; }

 private:
  struct State {
    Eigen::VectorXd x, u;
    SimTime t;
  };

  Eigen::VectorXd read(const InputView& in, SimTime t) const {
    Eigen::VectorXd u(static_cast<Eigen::Index>(sys_.inputs.size()));
    for (std::size_t i = 0; i < sys_.inputs.size(); ++i) u[static_cast<Eigen::Index>(i)] = in.value(sys_.inputs[i], t);
    return u;
  }

  LinearSystem sys_;
  TrapezoidStepper stepper_;
  Eigen::VectorXd x_, u_;
  SimTime t_{0};
};

}  // namespace fedkit::plant
