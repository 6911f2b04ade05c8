#pragma once

// Live parameter updates. Names mirror the kernel module's sysfs files
// (alpha, beta, fast_convergence, tcp_friendliness) plus the two ip-route
// knobs.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "tunerlab/cubic.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/transport.hpp"
#include "tunerlab/units.hpp"

namespace tunerlab {

enum class ParamName { alpha, beta, fast_convergence, tcp_friendliness, rto_min_ms, initcwnd };

inline constexpr std::array<ParamName, 6> kAllParams = {ParamName::alpha,           ParamName::beta,
                                                        ParamName::fast_convergence, ParamName::tcp_friendliness,
                                                        ParamName::rto_min_ms,      ParamName::initcwnd};

inline constexpr std::string_view to_string(ParamName name) noexcept {
  switch (name) {
    case ParamName::alpha: return "alpha";
    case ParamName::beta: return "beta";
    case ParamName::fast_convergence: return "fast_convergence";
    case ParamName::tcp_friendliness: return "tcp_friendliness";
    case ParamName::rto_min_ms: return "rto_min_ms";
    case ParamName::initcwnd: return "initcwnd";
  }
  return "?";
}

inline ParamName parse_param_name(std::string_view text) {
  for (auto name : kAllParams) {
    if (to_string(name) == text) return name;
  }
  throw UnknownParameter("unknown parameter '" + std::string(text) +
                         "' (expected alpha, beta, fast_convergence, tcp_friendliness, rto_min_ms or initcwnd)");
}

struct ParamBounds {
  long min;
  long max;
};

inline constexpr ParamBounds bounds(ParamName name) noexcept {
  switch (name) {
    case ParamName::alpha:
    case ParamName::beta: return {cubic::kParamMin, cubic::kParamMax};
    case ParamName::fast_convergence:
    case ParamName::tcp_friendliness: return {0, 1};
    case ParamName::rto_min_ms: return {1, transport::kRtoMinMsMax};
    case ParamName::initcwnd: return {2, transport::kInitCwndMax};
  }
  return {0, 0};
}

inline void validate_value(ParamName name, long value) {
  const auto b = bounds(name);
  if (value < b.min || value > b.max) {
    const std::string n(to_string(name));
    throw RangeError(n, n + " out of range: " + std::to_string(value) + " (valid bounds [" + std::to_string(b.min) +
                            ", " + std::to_string(b.max) + "])");
  }
}

struct ParamScope {
  std::optional<FlowId> flow;  // empty means global

  bool global() const noexcept { return !flow.has_value(); }
  friend bool operator==(const ParamScope&, const ParamScope&) = default;
};

inline ParamScope parse_scope(std::string_view text) {
  if (text == "global") return {};
  constexpr std::string_view prefix = "flow:";
  if (text.starts_with(prefix) && text.size() > prefix.size()) {
    const auto digits = text.substr(prefix.size());
    unsigned long id = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw Error("malformed scope '" + std::string(text) + "'");
      id = id * 10 + static_cast<unsigned long>(c - '0');
      if (id > 0xFFFFFFFFul) throw Error("malformed scope '" + std::string(text) + "'");
    }
    return {FlowId{static_cast<std::uint32_t>(id)}};
  }
  throw Error("malformed scope '" + std::string(text) + "' (expected \"global\" or \"flow:<id>\")");
}

inline std::string to_string(const ParamScope& scope) {
  return scope.global() ? std::string("global") : "flow:" + std::to_string(to_int(*scope.flow));
}

struct ParamUpdate {
  ParamScope scope;
  ParamName name = ParamName::beta;
  long value = 0;

  friend bool operator==(const ParamUpdate&, const ParamUpdate&) = default;
};

inline ParamUpdate make_update(ParamScope scope, std::string_view name, long value) {
  const auto parsed = parse_param_name(name);
  validate_value(parsed, value);
  return {scope, parsed, value};
}

// Writes the value into the parameter block; the caller decides which flows
// see it and when.
inline void apply(const ParamUpdate& update, cubic::CubicParams& params, transport::RouteParams& route) {
  validate_value(update.name, update.value);
  switch (update.name) {
    case ParamName::alpha: params.alpha_q512 = static_cast<int>(update.value); break;
    case ParamName::beta: params.beta_q1024 = static_cast<int>(update.value); break;
    case ParamName::fast_convergence: params.fast_convergence = update.value != 0; break;
    case ParamName::tcp_friendliness: params.tcp_friendliness = update.value != 0; break;
    case ParamName::rto_min_ms: route.rto_min_ms = update.value; break;
    case ParamName::initcwnd: route.initcwnd = static_cast<int>(update.value); break;
  }
}

inline long read(ParamName name, const cubic::CubicParams& params, const transport::RouteParams& route) noexcept {
  switch (name) {
    case ParamName::alpha: return params.alpha_q512;
    case ParamName::beta: return params.beta_q1024;
    case ParamName::fast_convergence: return params.fast_convergence ? 1 : 0;
    case ParamName::tcp_friendliness: return params.tcp_friendliness ? 1 : 0;
    case ParamName::rto_min_ms: return static_cast<long>(route.rto_min_ms);
    case ParamName::initcwnd: return route.initcwnd;
  }
  return 0;
}

}  // namespace tunerlab
