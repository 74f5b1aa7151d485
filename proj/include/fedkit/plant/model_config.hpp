#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "fedkit/core/json_util.hpp"
#include "fedkit/experiment/types.hpp"

namespace fedkit::plant {

/// Reads `participants[].model` for one built-in model and binds model roles
/// (e.g. "v_load") to the participant's declared topics. A role binds to the
/// topic named in `ports`, else to the declared topic whose last dotted
/// segment equals the role.
class ModelReader {
 public:
  explicit ModelReader(const experiment::ParticipantDescriptor& d)
      : desc_(d), reader_(d.model.is_null() ? empty_ : d.model, "participants." + d.id + ".model") {
    reader_.raw_optional("type");
    if (const Json* p = reader_.raw_optional("ports")) {
      if (!p->is_object()) fail(ErrorCode::SchemaError, "bad-type " + reader_.at("ports") + ": object expected");
      ports_ = *p;
    }
  }

  ObjectReader& params() { return reader_; }

  double number(std::string_view key, double fallback) { return reader_.optional<double>(key, fallback); }

  std::optional<std::string> input(std::string_view role) { return bind(role, desc_.required, true); }
  std::optional<std::string> output(std::string_view role) { return bind(role, desc_.offers, false); }

  /// Rejects unknown keys, unknown port roles, and offered topics no role produces.
  void finish(bool outputs_from_ports = true) {
    reader_.finish();
    for (const auto& [role, _] : ports_.items())
      if (!roles_.count(role)) fail(ErrorCode::SchemaError, "unknown-port " + reader_.at("ports") + "." + role);
    if (!outputs_from_ports) return;
    for (const auto& t : desc_.offers)
      if (!bound_outputs_.count(t))
        fail(ErrorCode::SchemaError, reader_.location() + ": offered topic '" + t + "' is not produced by the model");
  }

  const experiment::ParticipantDescriptor& descriptor() const { return desc_; }

 private:
  std::optional<std::string> bind(std::string_view role, const std::vector<std::string>& declared, bool is_input) {
    const std::string r(role);
    roles_.insert(r);
    std::optional<std::string> topic;
    if (ports_.contains(r)) {
      const auto& v = ports_.at(r);
      if (!v.is_string()) fail(ErrorCode::SchemaError, "bad-type " + reader_.at("ports") + "." + r + ": string expected");
      topic = v.get<std::string>();
      if (std::find(declared.begin(), declared.end(), *topic) == declared.end())
        fail(ErrorCode::SchemaError, reader_.at("ports") + "." + r + ": topic '" + *topic + "' is not declared in " +
                                         (is_input ? "requires" : "offers"));
    } else {
      for (const auto& t : declared) {
        const auto dot = t.rfind('.');
        const std::string_view last = dot == std::string::npos ? std::string_view(t) : std::string_view(t).substr(dot + 1);
        if (last == role) {
          topic = t;
          break;
        }
      }
    }
    if (topic && !is_input) bound_outputs_.insert(*topic);
    return topic;
  }

  static inline const Json empty_ = Json::object();
  const experiment::ParticipantDescriptor& desc_;
  ObjectReader reader_;
  Json ports_ = Json::object();
  std::set<std::string> roles_;
  std::set<std::string> bound_outputs_;
};

}  // namespace fedkit::plant
