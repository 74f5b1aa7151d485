#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "fedkit/core/json_util.hpp"

namespace fedkit {

/// The fixed PaaS command set a site may grant to remote users.
enum class CommandKind { start_experiment, stop_experiment, set_value, query_trace, get_status, list_resources };

inline constexpr std::array<CommandKind, 6> kAllCommandKinds{
    CommandKind::start_experiment, CommandKind::stop_experiment, CommandKind::set_value,
    CommandKind::query_trace,      CommandKind::get_status,      CommandKind::list_resources};

constexpr std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::start_experiment: return "start_experiment";
    case CommandKind::stop_experiment: return "stop_experiment";
    case CommandKind::set_value: return "set_value";
    case CommandKind::query_trace: return "query_trace";
    case CommandKind::get_status: return "get_status";
    case CommandKind::list_resources: return "list_resources";
  }
  return "get_status";
}

inline std::optional<CommandKind> command_kind_from_string(std::string_view s) {
  for (auto k : kAllCommandKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

using CommandSet = std::set<CommandKind>;

/// A command plus its kind-specific arguments (set_value: topic, value, unit).
struct Command {
  CommandKind kind{CommandKind::get_status};
  Json args = Json::object();

  static Command set_value(std::string topic, double value, std::string unit) {
    return {CommandKind::set_value, Json{{"topic", std::move(topic)}, {"value", value}, {"unit", std::move(unit)}}};
  }

  Json to_json() const {
    Json j = args.is_object() ? args : Json::object();
    j["kind"] = std::string(to_string(kind));
    return j;
  }

  static Command from_json(const Json& j, const std::string& where = "command") {
    if (!j.is_object()) fail(ErrorCode::SchemaError, "bad-type " + where + ": object expected");
    if (!j.contains("kind") || !j.at("kind").is_string())
      fail(ErrorCode::SchemaError, "missing-field " + where + ".kind");
    const auto kind = command_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) fail(ErrorCode::SchemaError, "unknown-command " + where + ": " + j.at("kind").get<std::string>());
    Command c{*kind, j};
    c.args.erase("kind");
    return c;
  }

  friend bool operator==(const Command& a, const Command& b) { return a.kind == b.kind && a.args == b.args; }
};

}  // namespace fedkit
