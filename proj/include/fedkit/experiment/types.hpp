#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedkit/core/json_util.hpp"
#include "fedkit/core/time.hpp"
#include "fedkit/experiment/command.hpp"

namespace fedkit::experiment {

enum class DomainKind { power_continuous, ict_discrete_event, hil_realtime, controller };

constexpr std::string_view to_string(DomainKind k) {
  switch (k) {
    case DomainKind::power_continuous: return "power_continuous";
    case DomainKind::ict_discrete_event: return "ict_discrete_event";
    case DomainKind::hil_realtime: return "hil_realtime";
    case DomainKind::controller: return "controller";
  }
  return "controller";
}

enum class SyncMode { conservative, best_effort, waveform_relaxation };

constexpr std::string_view to_string(SyncMode m) {
  switch (m) {
    case SyncMode::conservative: return "conservative";
    case SyncMode::best_effort: return "best_effort";
    case SyncMode::waveform_relaxation: return "waveform_relaxation";
  }
  return "conservative";
}

inline std::optional<SyncMode> sync_mode_from_string(std::string_view s) {
  if (s == "conservative") return SyncMode::conservative;
  if (s == "best_effort") return SyncMode::best_effort;
  if (s == "waveform_relaxation") return SyncMode::waveform_relaxation;
  return std::nullopt;
}

struct WRConfig {
  SimTime window{0};
  double tol{1e-6};
  int max_iter{20};
  std::string scheme{"jacobi"};
};

struct ParticipantDescriptor {
  std::string id;
  std::string site_id;
  DomainKind kind{DomainKind::power_continuous};
  SimTime step{0};
  std::vector<std::string> offers;
  std::vector<std::string> required;
  std::optional<SimTime> realtime_deadline;
  /// Input values used before the first sample arrives.
  std::vector<std::pair<std::string, double>> defaults;
  /// Built-in model configuration (`participants[].model`).
  Json model = Json::object();
  /// Served by a remote process over the stream protocol.
  bool external{false};

  bool offers_topic(std::string_view t) const {
    for (const auto& o : offers)
      if (o == t) return true;
    return false;
  }
  bool requires_topic(std::string_view t) const {
    for (const auto& r : required)
      if (r == t) return true;
    return false;
  }
  double default_for(std::string_view topic) const {
    for (const auto& [t, v] : defaults)
      if (t == topic) return v;
    return 0.0;
  }
};

struct Endpoint {
  std::string participant;
  std::string topic;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

struct Route {
  Endpoint from;
  Endpoint to;
  int delay_steps{1};
};

enum class Cmp { lt, le, gt, ge };

constexpr std::string_view to_string(Cmp c) {
  switch (c) {
    case Cmp::lt: return "<";
    case Cmp::le: return "<=";
    case Cmp::gt: return ">";
    case Cmp::ge: return ">=";
  }
  return "<";
}

inline std::optional<Cmp> cmp_from_string(std::string_view s) {
  if (s == "<" || s == "lt") return Cmp::lt;
  if (s == "<=" || s == "le") return Cmp::le;
  if (s == ">" || s == "gt") return Cmp::gt;
  if (s == ">=" || s == "ge") return Cmp::ge;
  return std::nullopt;
}

constexpr bool compare(double lhs, Cmp c, double rhs) {
  switch (c) {
    case Cmp::lt: return lhs < rhs;
    case Cmp::le: return lhs <= rhs;
    case Cmp::gt: return lhs > rhs;
    case Cmp::ge: return lhs >= rhs;
  }
  return false;
}

/// elapsed-in-stage >= at_least
struct ElapsedGuard {
  SimTime at_least{0};
};

/// `topic cmp threshold` held continuously for `hold`
struct ThresholdGuard {
  std::string topic;
  Cmp cmp{Cmp::lt};
  double threshold{0.0};
  SimTime hold{0};
};

using Guard = std::variant<ElapsedGuard, ThresholdGuard>;

struct Transition {
  Guard guard;
  std::string target;
};

struct Stage {
  std::string id;
  std::vector<Command> entry_actions;
  std::vector<Transition> transitions;
};

struct ExperimentDescription {
  std::string id;
  std::vector<std::string> sites;
  std::vector<ParticipantDescriptor> participants;
  std::vector<Route> routes;
  std::vector<Stage> stages;
  std::string initial_stage;
  SyncMode sync_mode{SyncMode::conservative};
  SimTime macro_step{0};
  SimTime duration{0};
  std::optional<WRConfig> wr;
  std::uint64_t seed{0};

  const ParticipantDescriptor* participant(std::string_view pid) const {
    for (const auto& p : participants)
      if (p.id == pid) return &p;
    return nullptr;
  }
  const Stage* stage(std::string_view sid) const {
    for (const auto& s : stages)
      if (s.id == sid) return &s;
    return nullptr;
  }
  std::int64_t rounds() const { return macro_step.count() > 0 ? duration / macro_step : 0; }
};

}  // namespace fedkit::experiment
