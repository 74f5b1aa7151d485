#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "fedkit/core/error.hpp"
#include "fedkit/core/time.hpp"

namespace fedkit {

enum class Quality { good, stale, estimated, bad };

constexpr std::string_view to_string(Quality q) noexcept {
  switch (q) {
    case Quality::good: return "good";
    case Quality::stale: return "stale";
    case Quality::estimated: return "estimated";
    case Quality::bad: return "bad";
  }
  return "bad";
}

inline Quality quality_from_string(std::string_view s) {
  if (s == "good") return Quality::good;
  if (s == "stale") return Quality::stale;
  if (s == "estimated") return Quality::estimated;
  if (s == "bad") return Quality::bad;
  fail(ErrorCode::InvalidArgument, "unknown quality '" + std::string(s) + "'");
}

/// A signal value: real, boolean or enumeration label.
using Value = std::variant<double, bool, std::string>;

inline bool is_real(const Value& v) { return std::holds_alternative<double>(v); }

/// Numeric view used by metrics and guards; labels have no numeric view.
inline std::optional<double> numeric(const Value& v) {
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  return std::nullopt;
}

struct SignalSample {
  std::string topic;
  SimTime sim_time{0};
  Value value{0.0};
  std::string unit;  // unit symbol, resolved through the unit registry
  Quality quality{Quality::good};
  std::string source;
  std::uint64_t seq{0};

  friend bool operator==(const SignalSample&, const SignalSample&) = default;
};

}  // namespace fedkit
