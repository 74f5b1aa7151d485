#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "fedkit/core/json_util.hpp"
#include "fedkit/core/value.hpp"

namespace fedkit::hub {

inline constexpr int kProtocolVersion = 1;

enum class MessageType { join, join_ack, publish, grant, request_step, command, command_result, stream, error };

constexpr std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::join: return "join";
    case MessageType::join_ack: return "join_ack";
    case MessageType::publish: return "publish";
    case MessageType::grant: return "grant";
    case MessageType::request_step: return "request_step";
    case MessageType::command: return "command";
    case MessageType::command_result: return "command_result";
    case MessageType::stream: return "stream";
    case MessageType::error: return "error";
  }
  return "error";
}

inline std::optional<MessageType> message_type_from_string(std::string_view s) {
  for (auto t : {MessageType::join, MessageType::join_ack, MessageType::publish, MessageType::grant,
                 MessageType::request_step, MessageType::command, MessageType::command_result, MessageType::stream,
                 MessageType::error})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

/// One line of the newline-delimited JSON stream protocol.
struct Envelope {
  int v{kProtocolVersion};
  MessageType type{MessageType::error};
  std::string session;
  std::uint64_t seq{0};
  std::int64_t sim_time_ns{0};
  Json payload = Json::object();

  Json to_json() const {
    return {{"v", v},     {"type", std::string(to_string(type))}, {"session", session},
            {"seq", seq}, {"sim_time_ns", sim_time_ns},           {"payload", payload}};
  }
  std::string line() const { return to_json().dump() + "\n"; }

  static Envelope from_json(const Json& j) {
    try {
      ObjectReader r(j, "envelope");
      Envelope e;
      e.v = r.required<int>("v");
      if (e.v != kProtocolVersion) fail(ErrorCode::ProtocolError, "unsupported protocol version " + std::to_string(e.v));
      const auto type = r.required<std::string>("type");
      const auto t = message_type_from_string(type);
      if (!t) fail(ErrorCode::ProtocolError, "unknown message type '" + type + "'");
      e.type = *t;
      e.session = r.optional<std::string>("session", "");
      e.seq = r.optional<std::uint64_t>("seq", 0);
      e.sim_time_ns = r.optional<std::int64_t>("sim_time_ns", 0);
      if (const Json* p = r.raw_optional("payload")) e.payload = *p;
      r.finish();
      return e;
    } catch (const Error& err) {
      if (err.code() == ErrorCode::ProtocolError) throw;
      fail(ErrorCode::ProtocolError, err.detail());
    }
  }

  static Envelope parse(std::string_view line) {
    Json j;
    try {
      j = parse_json_text(line, "envelope");
    } catch (const Error& err) {
      fail(ErrorCode::ProtocolError, err.detail());
    }
    return from_json(j);
  }
};

inline Json sample_to_json(const SignalSample& s) {
  Json v;
  if (const double* d = std::get_if<double>(&s.value))
    v = *d;
  else if (const bool* b = std::get_if<bool>(&s.value))
    v = *b;
  else
    v = std::get<std::string>(s.value);
  return {{"topic", s.topic},     {"sim_time_ns", s.sim_time.count()}, {"value", v}, {"unit", s.unit},
          {"quality", std::string(to_string(s.quality))}, {"source", s.source}, {"seq", s.seq}};
}

inline SignalSample sample_from_json(const Json& j) {
  ObjectReader r(j, "sample");
  SignalSample s;
  s.topic = r.required<std::string>("topic");
  s.sim_time = SimTime{r.optional<std::int64_t>("sim_time_ns", 0)};
  const Json& v = r.raw("value");
  if (v.is_number())
    s.value = v.get<double>();
  else if (v.is_boolean())
    s.value = v.get<bool>();
  else if (v.is_string())
    s.value = v.get<std::string>();
  else
    fail(ErrorCode::SchemaError, "bad-type sample.value");
  s.unit = r.optional<std::string>("unit", "");
  s.quality = quality_from_string(r.optional<std::string>("quality", "good"));
  s.source = r.optional<std::string>("source", "");
  s.seq = r.optional<std::uint64_t>("seq", 0);
  r.finish();
  return s;
}

}  // namespace fedkit::hub
