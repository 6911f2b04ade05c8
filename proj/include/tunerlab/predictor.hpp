#pragma once

// Closed-form sketch of the congestion window for one greedy flow whose only
// losses come from overflowing the tail-drop queue. Fast convergence and the
// TCP-friendly region are ignored, as in the GUI overlay this reproduces.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tunerlab/cubic.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/netsim.hpp"
#include "tunerlab/telemetry.hpp"
#include "tunerlab/units.hpp"

namespace tunerlab::predictor {

inline constexpr double kSampleInterval = 0.2;
inline constexpr double kTruncateFactor = 10.0;

struct PredictorModel {
  cubic::CubicParams params;
  netsim::LinkConfig link;
  std::uint32_t mss = kMss;
  double duration_s = 120.0;
  double initcwnd = 10.0;
  bool slow_start = true;
};

struct Point {
  double t_s = 0.0;
  double cwnd = 0.0;
};

struct Prediction {
  std::vector<Point> series;
  std::vector<double> loss_times;
  double w_cap = 0.0;
  std::optional<double> period_s;  // spacing of steady-state losses
  double peak_cwnd = 0.0;
  bool alpha_below_beta = false;
  bool truncated = false;
  std::vector<std::string> diagnostics;
};

// Window at which pipe plus queue overflow.
// Only rate and delay matter here, so a queueless link is allowed.
inline double peak_window(const netsim::LinkConfig& link, std::uint32_t mss = kMss) {
  if (!(link.rate_bps > 0.0) || !std::isfinite(link.rate_bps)) throw RangeError("rate", "link rate must be positive");
  if (!(link.rtt_ms >= 0.0) || !std::isfinite(link.rtt_ms)) throw RangeError("rtt_ms", "rtt must be non-negative");
  if (mss == 0) throw RangeError("mss", "mss must be positive");
  return (link.rate_bps * link.rtt_ms / 1000.0 / 8.0 + static_cast<double>(link.queue_bytes)) / mss;
}

namespace detail {

// One stretch of the trajectory, valid on [start, end).
struct Piece {
  enum class Kind { slow_start, cubic, flat } kind;
  double start = 0.0;
  double end = 0.0;
  double w0 = 0.0;      // slow start base, or flat level
  double origin = 0.0;  // cubic
  double k = 0.0;
  double c = 0.0;
  double rtt = 0.0;

  double at(double t) const {
    const double dt = t - start;
    switch (kind) {
      case Kind::slow_start: return w0 * std::exp2(dt / rtt);
      case Kind::cubic: {
        const double x = dt - k;
        return origin + c * x * x * x;
      }
      case Kind::flat: return w0;
    }
    return w0;
  }
};

}  // namespace detail

inline Prediction predict(const PredictorModel& model) {
  cubic::validate(model.params);
  if (!(model.duration_s > 0.0)) throw RangeError("duration_s", "duration must be positive");
  if (!(model.initcwnd >= cubic::kMinWindow)) throw RangeError("initcwnd", "initcwnd must be at least 2 segments");

  cubic::CubicParams params = model.params;
  params.fast_convergence = false;
  params.tcp_friendliness = false;

  Prediction out;
  out.w_cap = peak_window(model.link, model.mss);
  out.alpha_below_beta = params.alpha() < params.beta();
  if (out.alpha_below_beta) {
    out.diagnostics.emplace_back("alpha < beta: post-loss window sits above the cubic plateau, so every epoch probes from K = 0");
  }

  const double w_cap = out.w_cap;
  const double rtt = model.link.rtt_ms / 1000.0;
  const double end = model.duration_s;
  std::vector<detail::Piece> pieces;

  double t = 0.0;
  if (model.slow_start && model.initcwnd < w_cap) {
    const double reach = rtt * std::log2(w_cap / model.initcwnd);
    pieces.push_back({detail::Piece::Kind::slow_start, 0.0, reach, model.initcwnd, 0, 0, 0, rtt});
    t = reach;
  }

  cubic::CubicState state;
  state.cwnd = model.slow_start ? w_cap : std::min(model.initcwnd, w_cap);
  if (!model.slow_start && model.initcwnd < w_cap) {
    // No slow start: begin on a cubic epoch from the initial window with no memory.
    state.last_max = state.cwnd;
  }

  while (t < end) {
    if (state.cwnd >= w_cap) {
      out.loss_times.push_back(t);
      state = cubic::on_loss(state, params);
    }
    state = cubic::epoch_begin(state, params, t);
    if (state.cwnd >= w_cap) {
      // Nothing left to reduce: the window pins at the ceiling.
      pieces.push_back({detail::Piece::Kind::flat, t, end, w_cap, 0, 0, 0, rtt});
      break;
    }
    const double touch = state.k_seconds + std::cbrt((w_cap - state.origin_point) / params.c_scale);
    if (state.k_seconds > 0.0 && touch > kTruncateFactor * state.k_seconds) {
      const double stop = t + kTruncateFactor * state.k_seconds;
      pieces.push_back({detail::Piece::Kind::cubic, t, std::min(stop, end), 0, state.origin_point, state.k_seconds,
                        params.c_scale, rtt});
      out.truncated = true;
      out.diagnostics.push_back("epoch starting at t=" + std::to_string(t) + " s cannot re-reach W_cap within 10*K; trace truncated");
      break;
    }
    pieces.push_back({detail::Piece::Kind::cubic, t, t + touch, 0, state.origin_point, state.k_seconds,
                      params.c_scale, rtt});
    t += touch;
    state.cwnd = w_cap;
  }

  const double horizon = pieces.empty() ? 0.0 : std::min(end, pieces.back().end);
  std::size_t idx = 0;
  for (long i = 0;; ++i) {
    const double ts = static_cast<double>(i) * kSampleInterval;
    if (ts > horizon + 1e-9 || ts > end + 1e-9) break;
    while (idx + 1 < pieces.size() && ts >= pieces[idx].end) ++idx;
    if (pieces.empty()) break;
    const double w = std::max(pieces[idx].at(std::min(ts, pieces[idx].end)), cubic::kMinWindow);
    out.series.push_back({ts, w});
    out.peak_cwnd = std::max(out.peak_cwnd, w);
  }
  // The analytic peak is reached at a loss instant, which samples may straddle.
  if (!out.loss_times.empty()) out.peak_cwnd = std::max(out.peak_cwnd, w_cap);

  // Steady state: every epoch after the first loss has the same length.
  if (out.loss_times.size() >= 3) {
    const auto n = out.loss_times.size();
    out.period_s = (out.loss_times[n - 1] - out.loss_times[1]) / static_cast<double>(n - 2);
  } else if (out.loss_times.size() == 2) {
    out.period_s = out.loss_times[1] - out.loss_times[0];
  }
  return out;
}

inline std::vector<Point> predict_trace(const PredictorModel& model) { return predict(model).series; }

inline PredictorModel model_for(const cubic::CubicParams& params, const netsim::LinkConfig& link, double duration_s,
                                double initcwnd = 10.0) {
  PredictorModel m;
  m.params = params;
  m.link = link;
  m.duration_s = duration_s;
  m.initcwnd = initcwnd;
  return m;
}

inline void write_prediction_csv(std::ostream& out, const Prediction& p) {
  out << kTelemetryCsvHeader << '\n';
  for (const auto& pt : p.series) {
    out << format_csv_row(std::llround(pt.t_s * 1000.0), "predicted", pt.cwnd, 0.0, 0.0, 0, 0) << '\n';
  }
}

}  // namespace tunerlab::predictor
