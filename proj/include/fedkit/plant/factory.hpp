#pragma once

#include <memory>
#include <string>

#include "fedkit/plant/controller.hpp"
#include "fedkit/plant/hil.hpp"
#include "fedkit/plant/ict.hpp"
#include "fedkit/plant/power.hpp"

namespace fedkit::plant {

inline std::string model_type(const experiment::ParticipantDescriptor& d) {
  if (!d.model.is_object() || !d.model.contains("type") || !d.model.at("type").is_string())
    fail(ErrorCode::SchemaError, "missing-field participants." + d.id + ".model.type");
  return d.model.at("type").get<std::string>();
}

/// Builds the built-in model named by `model.type`. Every configuration
/// defect is a SchemaError naming the participant.
inline std::unique_ptr<Participant> make_participant(const experiment::ParticipantDescriptor& d,
                                                     std::uint64_t experiment_seed = 0) {
  using experiment::DomainKind;
  if (d.external) fail(ErrorCode::InvalidArgument, d.id + ": external participants are served over the stream protocol");
  const auto type = model_type(d);
  auto expect = [&](DomainKind k) {
    if (d.kind != k)
      fail(ErrorCode::SchemaError, "participants." + d.id + ": model type '" + type + "' requires kind " +
                                       std::string(experiment::to_string(k)));
  };
  try {
    if (type == "grid") {
      expect(DomainKind::power_continuous);
      return GridParticipant::create(d);
    }
    if (type == "state_space") return StateSpaceParticipant::create(d);
    if (type == "pi_controller") {
      expect(DomainKind::controller);
      return PiControllerParticipant::create(d);
    }
    if (type == "ict_relay") {
      expect(DomainKind::ict_discrete_event);
      return IctRelay::create(d, experiment_seed);
    }
    if (type == "phil" || type == "chil") {
      expect(DomainKind::hil_realtime);
      return HilParticipant::create(d, type == "phil" ? HilMode::phil : HilMode::chil);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    fail(ErrorCode::SchemaError, "participants." + d.id + ".model: " + e.detail());
  }
  fail(ErrorCode::SchemaError, "unknown-model participants." + d.id + ".model.type: " + type);
}

}  // namespace fedkit::plant
