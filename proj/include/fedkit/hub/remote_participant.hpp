#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "fedkit/hub/envelope.hpp"
#include "fedkit/plant/participant.hpp"

namespace fedkit::hub {

/// Bidirectional channel of envelopes.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Envelope& e) = 0;
  /// nullopt on timeout. Throws ProtocolError once the peer is gone.
  virtual std::optional<Envelope> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

/// Blocking envelope queue that feeds Transport::receive.
class EnvelopeQueue {
 public:
  void push(Envelope e) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(e));
    }
    cv_.notify_all();
  }

  void close(std::string reason = "channel closed") {
    {
      std::lock_guard lock(mu_);
      if (!closed_) reason_ = std::move(reason);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  std::optional<Envelope> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
    if (!items_.empty()) {
      auto e = std::move(items_.front());
      items_.pop_front();
      return e;
    }
    if (closed_) fail(ErrorCode::ProtocolError, reason_);
    return std::nullopt;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> items_;
  bool closed_{false};
  std::string reason_;
};

namespace detail {

class MemoryEndpoint final : public Transport {
 public:
  MemoryEndpoint(std::shared_ptr<EnvelopeQueue> in, std::shared_ptr<EnvelopeQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  void send(const Envelope& e) override {
    if (out_->closed()) fail(ErrorCode::ProtocolError, "channel closed");
    // Round trip through the wire format so both ends see what TCP would carry.
    out_->push(Envelope::parse(e.line()));
  }
  std::optional<Envelope> receive(std::chrono::milliseconds timeout) override { return in_->pop(timeout); }
  void close() override {
    in_->close();
    out_->close();
  }

 private:
  std::shared_ptr<EnvelopeQueue> in_, out_;
};

}  // namespace detail

/// Two connected in-process endpoints.
inline std::pair<std::shared_ptr<Transport>, std::shared_ptr<Transport>> memory_pipe() {
  auto a = std::make_shared<EnvelopeQueue>();
  auto b = std::make_shared<EnvelopeQueue>();
  return {std::make_shared<detail::MemoryEndpoint>(a, b), std::make_shared<detail::MemoryEndpoint>(b, a)};
}

/// Hub-side proxy of a participant living in another process. Each advance
/// is one grant; the peer answers with its publishes and then request_step.
/// A grant over [0, 0] fetches the initial outputs.
class RemoteParticipant final : public plant::Participant {
 public:
  RemoteParticipant(experiment::ParticipantDescriptor d, std::shared_ptr<Transport> t, std::string session,
                    std::chrono::milliseconds timeout = std::chrono::seconds{30})
      : Participant(std::move(d)), t_(std::move(t)), session_(std::move(session)), timeout_(timeout) {
    exchange(SimTime{0}, SimTime{0}, Json::object());
  }

  std::vector<plant::PortValue> outputs() const override {
    std::vector<plant::PortValue> out;
    for (const auto& [topic, v] : outputs_) out.push_back({topic, v});
    return out;
  }

  void advance(SimTime from, SimTime to, const plant::InputView& in) override {
    Json inputs = Json::object();
    for (const auto& topic : descriptor().required) inputs[topic] = in.value(topic, from);
    exchange(from, to, inputs);
  }

  std::any snapshot() const override {
    fail(ErrorCode::InvalidArgument, id() + ": remote participants cannot be rolled back");
  }
  void restore(const std::any&) override {
    fail(ErrorCode::InvalidArgument, id() + ": remote participants cannot be rolled back");
  }
  void cancel() override { t_->close(); }

 private:
  void exchange(SimTime from, SimTime to, const Json& inputs) {
    Envelope g;
    g.type = MessageType::grant;
    g.session = session_;
    g.seq = ++sent_seq_;
    g.sim_time_ns = to.count();
    g.payload = {{"from_ns", from.count()}, {"to_ns", to.count()}, {"inputs", inputs}};
    t_->send(g);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) fail(ErrorCode::ParticipantTimeout, id() + " did not answer the grant to " + std::to_string(to.count()));
      auto e = t_->receive(left);
      if (!e) continue;
      if (e->seq <= recv_seq_) fail(ErrorCode::ProtocolError, id() + ": non-increasing envelope seq " + std::to_string(e->seq));
      recv_seq_ = e->seq;
      switch (e->type) {
        case MessageType::publish: {
          auto s = sample_from_json(e->payload);
          if (!descriptor().offers_topic(s.topic)) fail(ErrorCode::NotOffered, id() + " does not offer " + s.topic);
          outputs_[s.topic] = s.value;
          break;
        }
        case MessageType::request_step:
          if (e->sim_time_ns != to.count())
            fail(ErrorCode::ProtocolError, id() + ": request_step for " + std::to_string(e->sim_time_ns) + " ns, expected " +
                                               std::to_string(to.count()));
          return;
        case MessageType::error:
          fail(ErrorCode::ParticipantFault, id() + ": " + e->payload.value("message", std::string("remote error")));
        default:
          fail(ErrorCode::ProtocolError, id() + ": unexpected " + std::string(to_string(e->type)) + " during a step");
      }
    }
  }

  std::shared_ptr<Transport> t_;
  std::string session_;
  std::chrono::milliseconds timeout_;
  std::map<std::string, Value> outputs_;
  std::uint64_t sent_seq_{0};
  std::uint64_t recv_seq_{0};
};

/// The remote half of the protocol: answers grants by advancing `p` until the
/// channel closes. Returns the number of grants served.
inline std::size_t serve_participant(Transport& t, plant::Participant& p, const std::string& session = "") {
  std::uint64_t seq = 0;
  std::size_t served = 0;
  for (;;) {
    std::optional<Envelope> e;
    try {
      e = t.receive(std::chrono::milliseconds{200});
    } catch (const Error&) {
      return served;
    }
    if (!e || e->type != MessageType::grant) continue;
    Envelope reply;
    reply.session = session;
    try {
      const SimTime from{e->payload.at("from_ns").get<std::int64_t>()};
      const SimTime to{e->payload.at("to_ns").get<std::int64_t>()};
      if (to > from) {
        std::map<std::string, double, std::less<>> values;
        for (const auto& [topic, v] : e->payload.at("inputs").items()) values[topic] = v.get<double>();
        p.advance(from, to, plant::HeldInputs(std::move(values)));
      }
      for (const auto& o : p.outputs()) {
        Envelope pub;
        pub.type = MessageType::publish;
        pub.session = session;
        pub.seq = ++seq;
        pub.sim_time_ns = to.count();
        pub.payload = sample_to_json({o.topic, to, o.value, "", Quality::good, p.id(), 0});
        t.send(pub);
      }
      reply.type = MessageType::request_step;
      reply.sim_time_ns = to.count();
    } catch (const std::exception& ex) {
      reply.type = MessageType::error;
      reply.payload = {{"message", ex.what()}};
    }
    reply.seq = ++seq;
    try {
      t.send(reply);
    } catch (const Error&) {
      return served;
    }
    ++served;
  }
}

}  // namespace fedkit::hub
