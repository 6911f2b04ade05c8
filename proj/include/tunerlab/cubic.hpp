#pragma once

// Tunable CUBIC congestion control.
//
// Everything here is a pure function over value types: the transport layer
// owns a CubicState per flow and drives it through the two hooks, on_ack
// (congestion avoidance) and on_loss (ssthresh/reduction). Windows are in
// segments, times in seconds.
//
// The knobs are kept in the same fixed-point form the kernel module exposes:
// alpha is an integer over 512 and beta an integer over 1024, both in 1..1024.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "tunerlab/error.hpp"

namespace tunerlab::cubic {

inline constexpr int kAlphaScale = 512;
inline constexpr int kBetaScale = 1024;
inline constexpr int kParamMin = 1;
inline constexpr int kParamMax = 1024;
inline constexpr double kDefaultC = 0.4;
inline constexpr double kMinWindow = 2.0;

// Defaults match stock CUBIC: alpha 1.0, beta ~0.7, both toggles on.
inline constexpr int kDefaultAlphaQ = 512;
inline constexpr int kDefaultBetaQ = 717;

struct CubicParams {
  int alpha_q512 = kDefaultAlphaQ;
  int beta_q1024 = kDefaultBetaQ;
  bool fast_convergence = true;
  bool tcp_friendliness = true;
  double c_scale = kDefaultC;

  double alpha() const noexcept { return static_cast<double>(alpha_q512) / kAlphaScale; }
  double beta() const noexcept { return static_cast<double>(beta_q1024) / kBetaScale; }

  friend bool operator==(const CubicParams&, const CubicParams&) = default;
};

struct EncodedParams {
  int alpha_q512;
  int beta_q1024;

  friend bool operator==(const EncodedParams&, const EncodedParams&) = default;
};

struct CubicState {
  double cwnd = 0.0;
  double ssthresh = std::numeric_limits<double>::infinity();
  double last_max = 0.0;
  std::optional<double> epoch_start;
  double origin_point = 0.0;
  double k_seconds = 0.0;
  double tcp_cwnd = 0.0;
  long ack_cnt = 0;
  double min_rtt = std::numeric_limits<double>::infinity();

  bool in_slow_start() const noexcept { return cwnd < ssthresh; }

  friend bool operator==(const CubicState&, const CubicState&) = default;
};

inline void check_q_range(const char* name, long value) {
  if (value < kParamMin || value > kParamMax) {
    throw RangeError(name, std::string(name) + " must be in [" + std::to_string(kParamMin) + ", " +
                               std::to_string(kParamMax) + "], got " + std::to_string(value));
  }
}

inline CubicParams decode_params(long alpha_q512, long beta_q1024, bool fast_convergence,
                                 bool tcp_friendliness) {
  check_q_range("alpha", alpha_q512);
  check_q_range("beta", beta_q1024);
  return CubicParams{static_cast<int>(alpha_q512), static_cast<int>(beta_q1024), fast_convergence,
                     tcp_friendliness, kDefaultC};
}

inline EncodedParams encode_params(const CubicParams& params) noexcept {
  return {params.alpha_q512, params.beta_q1024};
}

inline void validate(const CubicParams& params) {
  check_q_range("alpha", params.alpha_q512);
  check_q_range("beta", params.beta_q1024);
  if (!(params.c_scale > 0.0) || !std::isfinite(params.c_scale)) {
    throw RangeError("c_scale", "c_scale must be a positive finite number");
  }
}

inline CubicState init_state(double initcwnd) {
  if (!(initcwnd >= kMinWindow)) {
    throw RangeError("initcwnd", "initcwnd must be at least 2 segments");
  }
  CubicState state;
  state.cwnd = initcwnd;
  return state;
}

// W(t) = origin + C * (t - K)^3. The signed cube covers both sides of the
// plateau, so the |t - K| branch form used by the kernel collapses into this.
inline double cubic_target(const CubicState& state, const CubicParams& params, double elapsed_s) noexcept {
  const double offset = elapsed_s - state.k_seconds;
  return state.origin_point + params.c_scale * offset * offset * offset;
}

inline CubicState epoch_begin(CubicState state, const CubicParams& params, double now_s) {
  state.epoch_start = now_s;
  state.ack_cnt = 1;
  state.tcp_cwnd = state.cwnd;
  if (state.cwnd < state.last_max) {
    state.origin_point = state.last_max;
    state.k_seconds = std::cbrt((state.last_max - state.cwnd) / params.c_scale);
  } else {
    state.origin_point = state.cwnd;
    state.k_seconds = 0.0;
  }
  return state;
}

// Per-RTT growth of the standard-TCP estimate that matches AIMD throughput
// for this beta.
inline double friendly_slope(const CubicParams& params) noexcept {
  const double beta = params.beta();
  return 3.0 * (1.0 - beta) / (1.0 + beta);
}

inline double friendly_floor(const CubicState& state, const CubicParams&) noexcept {
  return state.tcp_cwnd;
}

inline CubicState on_ack(CubicState state, const CubicParams& params, double now_s, double rtt_sample_s) {
  if (!(rtt_sample_s > 0.0)) {
    throw RangeError("rtt_sample", "rtt sample must be positive");
  }
  state.min_rtt = std::min(state.min_rtt, rtt_sample_s);

  if (state.in_slow_start()) {
    state.cwnd += 1.0;
    return state;
  }

  if (!state.epoch_start) {
    state = epoch_begin(state, params, now_s);
  } else {
    ++state.ack_cnt;
  }
  state.tcp_cwnd += friendly_slope(params) / state.cwnd;

  const double elapsed = (now_s - *state.epoch_start) + state.min_rtt;
  double target = cubic_target(state, params, elapsed);
  if (params.tcp_friendliness) {
    target = std::max(target, friendly_floor(state, params));
  }

  if (target > state.cwnd) {
    state.cwnd += (target - state.cwnd) / state.cwnd;
  } else {
    state.cwnd += 1.0 / (100.0 * state.cwnd);
  }
  return state;
}

inline CubicState on_loss(CubicState state, const CubicParams& params) noexcept {
  const double window = state.cwnd;
  const double beta = params.beta();

  double base = window;
  if (params.fast_convergence && window < state.last_max) {
    base = window * (1.0 + beta) / 2.0;
  }
  state.last_max = base * params.alpha();

  state.ssthresh = std::max(window * beta, kMinWindow);
  state.cwnd = state.ssthresh;
  state.epoch_start.reset();
  return state;
}

}  // namespace tunerlab::cubic
