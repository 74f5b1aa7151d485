#pragma once

#include <chrono>
#include <cstdint>

namespace fedkit {

/// Simulation time, integer nanoseconds since experiment start.
using SimTime = std::chrono::nanoseconds;
/// Wall (or emulated wall) time, integer nanoseconds since an arbitrary epoch.
using WallTime = std::chrono::nanoseconds;

using namespace std::chrono_literals;

constexpr std::int64_t ns(SimTime t) noexcept { return t.count(); }

inline WallTime steady_now() {
  return std::chrono::duration_cast<WallTime>(
      std::chrono::steady_clock::now().time_since_epoch());
}

inline WallTime system_now() {
  return std::chrono::duration_cast<WallTime>(
      std::chrono::system_clock::now().time_since_epoch());
}

constexpr double seconds(SimTime t) noexcept { return static_cast<double>(t.count()) * 1e-9; }

}  // namespace fedkit
