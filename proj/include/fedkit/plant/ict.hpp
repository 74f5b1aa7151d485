#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedkit/core/value.hpp"
#include "fedkit/experiment/sites.hpp"
#include "fedkit/netem/link.hpp"
#include "fedkit/plant/model_config.hpp"
#include "fedkit/plant/participant.hpp"

namespace fedkit::plant {

struct NetworkEvent {
  SignalSample payload;
  SimTime send_time{0};
  std::string link;
  SimTime deliver_time{0};
  bool dropped{false};
};

/// Discrete-event network: named links feeding one pending-event queue.
/// Events are released in (deliver_time, send order).
class IctNetwork {
 public:
  explicit IctNetwork(std::uint64_t experiment_seed = 0) : seed_(experiment_seed) {}

  void add_link(const std::string& id, const netem::LinkModel& model) {
    links_.insert_or_assign(id, netem::LinkScheduler(model, id, seed_));
  }

  std::vector<NetworkEvent> step(SimTime now, std::vector<NetworkEvent> new_events) {
    if (now < now_) fail(ErrorCode::InvalidArgument, "ict_step: time went backwards");
    now_ = now;
    for (auto& ev : new_events) {
      auto it = links_.find(ev.link);
      if (it == links_.end()) fail(ErrorCode::InvalidArgument, "ict_step: unknown link '" + ev.link + "'");
      const auto slot = it->second.schedule(ev.send_time);
      if (!slot) {
        ev.dropped = true;
        dropped_.push_back(std::move(ev));
        continue;
      }
      ev.deliver_time = slot->deliver_time;
      const auto order = sent_++;
      queue_.push({std::move(ev), slot->deliver_time, order});
    }
    return queue_.deliver_due(now);
  }

  const std::vector<NetworkEvent>& dropped() const { return dropped_; }
  std::size_t pending() const { return queue_.size(); }
  std::optional<SimTime> next_time() const { return queue_.next_time(); }

 private:
  std::uint64_t seed_;
  std::map<std::string, netem::LinkScheduler> links_;
  netem::DeliveryQueue<NetworkEvent> queue_;
  std::vector<NetworkEvent> dropped_;
  std::uint64_t sent_{0};
  SimTime now_{0};
};

inline std::vector<NetworkEvent> ict_step(IctNetwork& queue, SimTime now, std::vector<NetworkEvent> new_events) {
  return queue.step(now, std::move(new_events));
}

/// Communication channel inside the federation: samples `in` at its step,
/// sends each sample over an emulated link and holds the latest delivered
/// value on `out`.
class IctRelay final : public Participant {
 public:
  IctRelay(experiment::ParticipantDescriptor d, std::string in, std::string out, const netem::LinkModel& link,
           std::uint64_t seed)
      : Participant(std::move(d)), in_(std::move(in)), out_(std::move(out)), state_{IctNetwork(seed), 0.0, 0} {
    state_.net.add_link(link_name(), link);
    state_.held = descriptor().default_for(in_);
  }

  static std::unique_ptr<Participant> create(const experiment::ParticipantDescriptor& d, std::uint64_t seed) {
    ModelReader r(d);
    const auto link = experiment::link_model_from_json(r.params());
    link.check();
    const auto in = r.input("in");
    const auto out = r.output("out");
    r.finish();
    if (!in || !out) fail(ErrorCode::SchemaError, "participants." + d.id + ".model: ports 'in' and 'out' must be bound");
    return std::make_unique<IctRelay>(d, *in, *out, link, seed);
  }

  std::vector<PortValue> outputs() const override { return {{out_, state_.held}}; }

  void advance(SimTime from, SimTime to, const InputView& in) override {
    const auto n = substeps(from, to);
    for (std::int64_t k = 0; k < n; ++k) {
      const SimTime t = from + k * descriptor().step;
      NetworkEvent ev;
      ev.payload.topic = in_;
      ev.payload.sim_time = t;
      ev.payload.value = in.value(in_, t);
      ev.payload.seq = state_.seq++;
      ev.send_time = t;
      ev.link = link_name();
      take(state_.net.step(t, {std::move(ev)}));
    }
    take(state_.net.step(to, {}));
  }

  std::any snapshot() const override { return state_; }
  void restore(const std::any& s) override { state_ = std::any_cast<const State&>(s); }

  std::optional<LinearSystem> linear_model() const override {
    auto s = LinearSystem::zeros(0, {in_}, {out_});
    s.D(0, 0) = 1.0;
    return s;
  }

  const IctNetwork& network() const { return state_.net; }

 private:
  struct State {
    IctNetwork net;
    double held;
    std::uint64_t seq;
  };

  std::string link_name() const { return "ict:" + id(); }

  void take(const std::vector<NetworkEvent>& delivered) {
    for (const auto& ev : delivered) state_.held = numeric(ev.payload.value).value_or(state_.held);
  }

  std::string in_, out_;
  State state_;
};

}  // namespace fedkit::plant
