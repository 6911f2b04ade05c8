#pragma once

// Running scenarios and turning telemetry into the numbers the experiments
// report: windowed goodput and offered load, Jain's index, transfer times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunerlab/error.hpp"
#include "tunerlab/netsim.hpp"
#include "tunerlab/scenario.hpp"
#include "tunerlab/telemetry.hpp"

namespace tunerlab::experiment {

using nlohmann::json;
using scenario::Scenario;

struct FlowSummary {
  FlowId id{};
  std::string label;
  double start_s = 0.0;
  double mean_goodput_bps = 0.0;
  double mean_offered_bps = 0.0;
  std::optional<double> completion_s;
  std::uint64_t retransmits = 0;
  std::uint64_t delivered_bytes = 0;
  std::uint64_t loss_events = 0;
  std::uint64_t rto_events = 0;
};

struct LinkSummary {
  double aggregate_offered_bps = 0.0;
  double aggregate_goodput_bps = 0.0;
  std::uint64_t drops_tail = 0;
  std::uint64_t drops_random = 0;
};

struct ExperimentResult {
  Scenario scenario;
  std::vector<TelemetrySample> series;
  double window_start_s = 0.0;
  double window_end_s = 0.0;
  std::vector<FlowSummary> flows;
  LinkSummary link;
  std::vector<std::vector<netsim::LossRecord>> losses;
  std::vector<std::string> invariant_violations;
};

namespace detail {

inline const TelemetrySample& sample_at(const std::vector<TelemetrySample>& series, double t_s) {
  if (series.empty()) throw LookupError("empty telemetry series");
  const SimTime t = from_seconds(t_s);
  auto it = std::lower_bound(series.begin(), series.end(), t,
                             [](const TelemetrySample& s, SimTime v) { return s.t < v; });
  if (it == series.end()) return series.back();
  return *it;
}

template <typename Field>
double counter_rate(const std::vector<TelemetrySample>& series, FlowId id, double from_s, double to_s, Field field) {
  if (!(to_s > from_s)) throw RangeError("window", "measurement window must have positive length");
  const auto& a = sample_at(series, from_s);
  const auto& b = sample_at(series, to_s);
  const auto* fa = a.find(id);
  const auto* fb = b.find(id);
  if (!fb) return 0.0;
  const double start = fa ? static_cast<double>(field(*fa)) : 0.0;
  const double span = to_seconds(b.t - a.t);
  if (span <= 0.0) return 0.0;
  return (static_cast<double>(field(*fb)) - start) * 8.0 / span;
}

}  // namespace detail

// Mean goodput of one flow over [from_s, to_s], from cumulative delivered
// bytes in the telemetry series.
inline double mean_goodput(const std::vector<TelemetrySample>& series, FlowId id, double from_s, double to_s) {
  return detail::counter_rate(series, id, from_s, to_s, [](const FlowSample& f) { return f.delivered_bytes; });
}

// Mean rate at which the sender pushed bytes onto the link, retransmissions
// included.
inline double mean_offered(const std::vector<TelemetrySample>& series, FlowId id, double from_s, double to_s) {
  return detail::counter_rate(series, id, from_s, to_s, [](const FlowSample& f) { return f.bytes_sent; });
}

inline double jain_fairness(const std::vector<double>& goodputs) {
  if (goodputs.empty()) throw RangeError("goodputs", "fairness needs at least one rate");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : goodputs) {
    if (!(x >= 0.0)) throw RangeError("goodputs", "rates must be non-negative");
    sum += x;
    sum_sq += x * x;
  }
  if (sum_sq == 0.0) throw UndefinedMetric("fairness is undefined when every rate is zero");
  return sum * sum / (static_cast<double>(goodputs.size()) * sum_sq);
}

struct RunOptions {
  bool record_trace = false;
  bool check_invariants = true;
  // Summaries cover [window_start, duration]; default is the final third.
  std::optional<double> window_start_s;
};

inline ExperimentResult summarize(const Scenario& sc, std::vector<TelemetrySample> series, double window_start_s) {
  ExperimentResult r;
  r.scenario = sc;
  r.series = std::move(series);
  r.window_start_s = window_start_s;
  r.window_end_s = sc.duration_s;
  const auto& last = r.series.back();
  r.link.drops_tail = last.drops_tail;
  r.link.drops_random = last.drops_random;
  for (std::size_t i = 0; i < sc.flows.size(); ++i) {
    const FlowId id{static_cast<std::uint32_t>(i + 1)};
    FlowSummary f;
    f.id = id;
    f.label = sc.flows[i].label;
    f.start_s = sc.flows[i].start_s;
    const double from = std::max(window_start_s, f.start_s);
    if (r.window_end_s > from) {
      f.mean_goodput_bps = mean_goodput(r.series, id, from, r.window_end_s);
      f.mean_offered_bps = mean_offered(r.series, id, from, r.window_end_s);
    }
    if (const auto* fs = last.find(id)) {
      f.retransmits = fs->retx_total;
      f.delivered_bytes = fs->delivered_bytes;
      f.loss_events = fs->loss_events;
      f.rto_events = fs->rto_events;
    }
    r.link.aggregate_goodput_bps += f.mean_goodput_bps;
    r.link.aggregate_offered_bps += f.mean_offered_bps;
    r.flows.push_back(f);
  }
  return r;
}

inline ExperimentResult run_scenario(const Scenario& sc, const RunOptions& options = {}) {
  scenario::validate(sc);
  netsim::Simulator sim(sc.link, netsim::SimOptions{true, options.record_trace, options.check_invariants});
  for (const auto& f : sc.flows) sim.add_flow(f.spec());
  sim.run(from_seconds(sc.duration_s));

  const double window_start = options.window_start_s.value_or(sc.duration_s * 2.0 / 3.0);
  auto result = summarize(sc, sim.telemetry(), window_start);
  for (std::size_t i = 0; i < sim.flow_count(); ++i) {
    const auto& e = sim.flows()[i];
    result.losses.push_back(e.losses);
    if (e.state.completed_at) result.flows[i].completion_s = to_seconds(*e.state.completed_at);
  }
  result.invariant_violations = sim.invariant_violations();
  return result;
}

// Independent runs in parallel; results come back in input order.
inline std::vector<ExperimentResult> run_batch(const std::vector<Scenario>& scenarios, const RunOptions& options = {}) {
  std::vector<std::future<ExperimentResult>> pending;
  pending.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    pending.push_back(std::async(std::launch::async, [&sc, &options] { return run_scenario(sc, options); }));
  }
  std::vector<ExperimentResult> out;
  out.reserve(pending.size());
  for (auto& p : pending) out.push_back(p.get());
  return out;
}

struct SeriesPoint {
  std::int64_t t_ms = 0;
  double bps = 0.0;
};

// Re-bins a flow's goodput into windows of `window_ms`. Each bin is the bytes
// delivered in it divided by the bin width, so the series integrates to the
// same byte count at any window size.
inline std::vector<SeriesPoint> throughput_series(const ExperimentResult& result, FlowId id, std::int64_t window_ms) {
  const auto interval_ms = kTelemetryInterval.count() / 1000;
  if (window_ms <= 0 || window_ms % interval_ms != 0) {
    throw RangeError("window_ms", "window must be a positive multiple of 200 ms");
  }
  bool known = false;
  for (const auto& f : result.flows) known = known || f.id == id;
  if (!known) throw LookupError("unknown flow " + std::to_string(to_int(id)));

  std::vector<SeriesPoint> out;
  for (const auto& s : result.series) {
    const auto* f = s.find(id);
    if (!f) continue;
    const std::int64_t bin = (s.t_ms() + window_ms - 1) / window_ms;
    const std::int64_t bin_t = bin * window_ms;
    if (out.empty() || out.back().t_ms != bin_t) out.push_back({bin_t, 0.0});
    out.back().bps += f->goodput_bps * static_cast<double>(interval_ms) / static_cast<double>(window_ms);
  }
  return out;
}

class TransferTimeout : public Error {
public:
  TransferTimeout(std::uint64_t seed, double cap_s, std::uint64_t acked_bytes, std::uint64_t goal)
      : Error("transfer (seed " + std::to_string(seed) + ") did not finish within " + std::to_string(cap_s) +
              " s: " + std::to_string(acked_bytes) + " of " + std::to_string(goal) + " bytes acknowledged"),
        seed_(seed),
        cap_s_(cap_s),
        acked_bytes_(acked_bytes),
        goal_(goal) {}

  std::uint64_t seed() const noexcept { return seed_; }
  double cap_s() const noexcept { return cap_s_; }
  std::uint64_t acked_bytes() const noexcept { return acked_bytes_; }
  std::uint64_t goal() const noexcept { return goal_; }

private:
  std::uint64_t seed_;
  double cap_s_;
  std::uint64_t acked_bytes_;
  std::uint64_t goal_;
};

inline double serialization_floor_s(std::uint64_t bytes, const netsim::LinkConfig& link) {
  return static_cast<double>(bytes) * 8.0 / link.rate_bps;
}

// Ten times a deliberately loose estimate of a lossy transfer.
inline double transfer_cap_s(std::uint64_t bytes, const netsim::LinkConfig& link) {
  return 10.0 * (serialization_floor_s(bytes, link) + 100.0 * link.rtt_ms / 1e3 + 1.0);
}

// Completion time of one byte-limited flow: the instant its final byte is
// cumulatively acknowledged at the sender.
inline double transfer_once(netsim::LinkConfig link, const cubic::CubicParams& params,
                            const transport::RouteParams& route, std::uint64_t bytes_goal, std::uint64_t seed) {
  link.seed = seed;
  netsim::Simulator sim(link, netsim::SimOptions{false, false, false});
  const auto id = sim.add_flow(netsim::FlowSpec{0.0, params, route, bytes_goal, "transfer"});
  const double cap = transfer_cap_s(bytes_goal, link);
  const SimTime step = from_millis(100);
  while (!sim.flow(id).completed_at) {
    if (to_seconds(sim.now()) >= cap) {
      throw TransferTimeout(seed, cap, sim.flow(id).snd_una, bytes_goal);
    }
    sim.run(sim.now() + step);
  }
  return to_seconds(*sim.flow(id).completed_at);
}

inline std::vector<double> transfer_time(const netsim::LinkConfig& link, const cubic::CubicParams& params,
                                         const transport::RouteParams& route, std::uint64_t bytes_goal,
                                         const std::vector<std::uint64_t>& seeds) {
  if (bytes_goal == 0) throw ValidationError({"bytes_goal must be positive"});
  netsim::validate(link);
  cubic::validate(params);
  transport::validate(route);
  std::vector<std::future<double>> pending;
  for (auto seed : seeds) {
    pending.push_back(std::async(std::launch::async, [=, &link, &params, &route] {
      return transfer_once(link, params, route, bytes_goal, seed);
    }));
  }
  std::vector<double> out;
  for (auto& p : pending) out.push_back(p.get());
  return out;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw UndefinedMetric("median of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct EpochStats {
  std::size_t losses = 0;
  double period_s = 0.0;    // mean spacing of consecutive reductions
  double peak_cwnd = 0.0;   // mean window just before a reduction
};

// Sawtooth shape of one flow after `settle_s`, from its fast-retransmit
// reductions. Needs at least two of them.
inline std::optional<EpochStats> steady_epochs(const std::vector<netsim::LossRecord>& losses, double settle_s) {
  std::vector<const netsim::LossRecord*> steady;
  for (const auto& l : losses) {
    if (!l.timeout && to_seconds(l.at) >= settle_s) steady.push_back(&l);
  }
  if (steady.size() < 2) return std::nullopt;
  EpochStats s;
  s.losses = steady.size();
  s.period_s = to_seconds(steady.back()->at - steady.front()->at) / static_cast<double>(steady.size() - 1);
  for (const auto* l : steady) s.peak_cwnd += l->window;
  s.peak_cwnd /= static_cast<double>(steady.size());
  return s;
}

inline json summary_json(const ExperimentResult& r) {
  json flows = json::array();
  std::vector<double> goodputs;
  for (const auto& f : r.flows) {
    goodputs.push_back(f.mean_goodput_bps);
    json jf = {{"flow_id", to_int(f.id)},
               {"label", f.label},
               {"start_s", f.start_s},
               {"mean_goodput_bps", f.mean_goodput_bps},
               {"mean_offered_bps", f.mean_offered_bps},
               {"retransmits", f.retransmits},
               {"delivered_bytes", f.delivered_bytes},
               {"loss_events", f.loss_events},
               {"rto_events", f.rto_events}};
    jf["completion_s"] = f.completion_s ? json(*f.completion_s) : json(nullptr);
    flows.push_back(std::move(jf));
  }
  json metrics = json::object();
  try {
    metrics["jain_fairness"] = jain_fairness(goodputs);
  } catch (const UndefinedMetric&) {
    metrics["jain_fairness"] = nullptr;
  }
  return {{"scenario", scenario::to_json(r.scenario)},
          {"window_s", {r.window_start_s, r.window_end_s}},
          {"flows", flows},
          {"link",
           {{"aggregate_offered_bps", r.link.aggregate_offered_bps},
            {"aggregate_goodput_bps", r.link.aggregate_goodput_bps},
            {"drops_tail", r.link.drops_tail},
            {"drops_random", r.link.drops_random}}},
          {"metrics", metrics},
          {"invariant_violations", r.invariant_violations.size()}};
}

}  // namespace tunerlab::experiment
