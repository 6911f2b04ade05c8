#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace tunerlab {

// Simulated time. Integer microseconds keep event ordering exact.
using SimTime = std::chrono::microseconds;

// Every segment carries at most one MSS of payload ("1KB packets").
inline constexpr std::uint32_t kMss = 1000;

inline constexpr double to_seconds(SimTime t) noexcept {
  return static_cast<double>(t.count()) / 1e6;
}

inline constexpr double to_millis(SimTime t) noexcept {
  return static_cast<double>(t.count()) / 1e3;
}

inline SimTime from_seconds(double s) noexcept {
  return SimTime{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

inline constexpr SimTime from_millis(std::int64_t ms) noexcept { return SimTime{ms * 1000}; }

enum class FlowId : std::uint32_t {};

inline constexpr std::uint32_t to_int(FlowId id) noexcept { return static_cast<std::uint32_t>(id); }

}  // namespace tunerlab
