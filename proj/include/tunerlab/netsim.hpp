#pragma once

// Deterministic discrete-event simulator: one bottleneck uplink with a
// byte-limited tail-drop FIFO, optional Bernoulli loss, a pure-delay ACK
// return path, and telemetry every 200 ms.
//
// Events are totally ordered by (fire_at, ordinal); the ordinal is a global
// insertion counter, so ties resolve FIFO and a run is a pure function of the
// scenario and the seed.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tunerlab/cubic.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/param_update.hpp"
#include "tunerlab/telemetry.hpp"
#include "tunerlab/transport.hpp"
#include "tunerlab/units.hpp"

namespace tunerlab::netsim {

struct LinkConfig {
  double rate_bps = 12e6;
  double rtt_ms = 80.0;
  std::uint64_t queue_bytes = 120'000;
  double loss_prob = 0.0;
  std::uint64_t seed = 1;

  SimTime one_way_delay() const noexcept { return from_seconds(rtt_ms / 2e3); }
  double bdp_bytes() const noexcept { return rate_bps * (rtt_ms / 1e3) / 8.0; }
};

inline std::vector<std::string> link_problems(const LinkConfig& link) {
  std::vector<std::string> problems;
  if (!(link.rate_bps > 0.0) || !std::isfinite(link.rate_bps)) problems.emplace_back("link.rate must be positive");
  if (!(link.rtt_ms >= 0.0) || !std::isfinite(link.rtt_ms)) problems.emplace_back("link.rtt_ms must be non-negative");
  if (link.queue_bytes < kMss) problems.emplace_back("link.queue_bytes must hold at least one segment");
  if (!(link.loss_prob >= 0.0 && link.loss_prob < 1.0)) problems.emplace_back("link.loss_prob must be in [0, 1)");
  return problems;
}

inline void validate(const LinkConfig& link) {
  auto problems = link_problems(link);
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

struct Segment {
  FlowId flow{};
  std::uint64_t seq = 0;
  std::uint32_t len = 0;
  bool is_retransmit = false;
  SimTime sent_at{};
  std::uint64_t xmit_order = 0;
};

enum class DropReason { tail_drop, random };

struct Enqueued {};
struct Dropped {
  DropReason reason;
};
using EnqueueResult = std::variant<Enqueued, Dropped>;

// Reproducible uniform draws. mt19937_64 output is fixed by the standard, and
// the conversion to [0, 1) is done by hand so no library distribution is
// involved.
class LossRng {
public:
  explicit LossRng(std::uint64_t seed) : engine_(seed) {}

  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
  std::mt19937_64 engine_;
};

class BottleneckLink {
public:
  explicit BottleneckLink(const LinkConfig& config) : config_(config), rng_(config.seed) { validate(config); }

  // Tail-drop admission. The loss draw happens only for segments the queue
  // would accept, so with loss_prob == 0 the RNG never influences drops.
  EnqueueResult enqueue(const Segment& seg) {
    if (occupancy_ + seg.len > config_.queue_bytes) {
      ++drops_tail_;
      return Dropped{DropReason::tail_drop};
    }
    if (config_.loss_prob > 0.0 && rng_.next_unit() < config_.loss_prob) {
      ++drops_random_;
      return Dropped{DropReason::random};
    }
    occupancy_ += seg.len;
    queue_.push_back(seg);
    return Enqueued{};
  }

  // Removes the head segment once it has finished serialization.
  Segment pop() {
    if (queue_.empty()) throw InternalError("dequeue from an empty link");
    Segment seg = queue_.front();
    queue_.pop_front();
    occupancy_ -= seg.len;
    bytes_served_ += seg.len;
    return seg;
  }

  // Serialization time of `len` bytes. The sub-microsecond remainder is
  // carried so the long-run service rate is exact.
  SimTime serialization_time(std::uint32_t len) {
    const auto rate = static_cast<unsigned __int128>(std::llround(config_.rate_bps));
    const unsigned __int128 numerator = static_cast<unsigned __int128>(len) * 8u * 1'000'000u + carry_;
    carry_ = numerator % rate;
    return SimTime{static_cast<std::int64_t>(numerator / rate)};
  }

  void reset_carry() noexcept { carry_ = 0; }

  const LinkConfig& config() const noexcept { return config_; }
  bool empty() const noexcept { return queue_.empty(); }
  const Segment& head() const { return queue_.front(); }
  std::uint64_t occupancy() const noexcept { return occupancy_; }
  std::uint64_t drops_tail() const noexcept { return drops_tail_; }
  std::uint64_t drops_random() const noexcept { return drops_random_; }
  std::uint64_t bytes_served() const noexcept { return bytes_served_; }
  const std::deque<Segment>& queued() const noexcept { return queue_; }

private:
  LinkConfig config_;
  LossRng rng_;
  std::deque<Segment> queue_;
  std::uint64_t occupancy_ = 0;
  std::uint64_t drops_tail_ = 0;
  std::uint64_t drops_random_ = 0;
  std::uint64_t bytes_served_ = 0;
  unsigned __int128 carry_ = 0;
};

enum class EventKind { segment_arrival, ack_arrival, dequeue_complete, rto_fire, telemetry_tick, param_update, flow_start };

struct SegmentArrival {
  Segment segment;
};
struct AckArrival {
  FlowId flow;
  std::uint64_t ack;
  std::optional<transport::SackBlock> sack;
  std::uint64_t echo_order = 0;
};
struct DequeueComplete {};
struct RtoFire {
  FlowId flow;
};
struct TelemetryTick {};
struct ParamUpdateEvent {
  ParamUpdate update;
};
struct FlowStart {
  FlowId flow;
};

using EventPayload =
    std::variant<SegmentArrival, AckArrival, DequeueComplete, RtoFire, TelemetryTick, ParamUpdateEvent, FlowStart>;

struct SimEvent {
  SimTime fire_at{};
  std::uint64_t ordinal = 0;
  EventPayload payload;

  EventKind kind() const noexcept { return static_cast<EventKind>(payload.index()); }
};

struct TraceEntry {
  SimTime fire_at{};
  std::uint64_t ordinal = 0;
  EventKind kind{};

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct FlowSpec {
  double start_s = 0.0;
  cubic::CubicParams params;
  transport::RouteParams route;
  std::optional<std::uint64_t> bytes_goal;
  std::string label = "cubic";
};

struct LossRecord {
  SimTime at{};
  double window = 0.0;  // cwnd just before the reduction
  bool timeout = false;
};

struct SimOptions {
  bool record_telemetry = true;
  bool record_trace = false;
  bool check_invariants = true;
};

class Simulator {
public:
  struct FlowEntry {
    FlowSpec spec;
    transport::FlowState state;
    transport::Receiver receiver;
    bool started = false;
    SimTime start_time{};
    std::optional<SimTime> rto_event_at;
    std::uint64_t delivered_at_last_tick = 0;
    std::uint64_t last_ack = 0;
    std::vector<LossRecord> losses;
  };

  explicit Simulator(const LinkConfig& link, SimOptions options = {}) : link_(link), options_(options) {}

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  FlowId add_flow(const FlowSpec& spec) {
    if (!(spec.start_s >= 0.0) || !std::isfinite(spec.start_s)) {
      throw RangeError("start_s", "flow start time must be non-negative");
    }
    const FlowId id{static_cast<std::uint32_t>(flows_.size() + 1)};
    FlowEntry entry;
    entry.spec = spec;
    entry.state = transport::make_flow(id, spec.params, spec.route, spec.bytes_goal);
    flows_.push_back(std::move(entry));
    schedule(std::max(now_, from_seconds(spec.start_s)), FlowStart{id});
    return id;
  }

  // Queues the update behind everything already pending at the current
  // instant and returns the sim time at which it takes effect.
  SimTime apply_param_update(const ParamUpdate& update) {
    validate_value(update.name, update.value);
    if (update.scope.flow) entry(*update.scope.flow);
    schedule(now_, ParamUpdateEvent{update});
    return now_;
  }

  void run(SimTime until) {
    if (until < now_) throw InternalError("run target lies in the past");
    if (!tick_scheduled_) {
      tick_scheduled_ = true;
      schedule(now_, TelemetryTick{});
    }
    while (!events_.empty() && events_.top().fire_at <= until) {
      SimEvent ev = events_.top();
      events_.pop();
      if (ev.fire_at < now_) throw InternalError("event queue went backwards");
      now_ = ev.fire_at;
      if (options_.record_trace) trace_.push_back({ev.fire_at, ev.ordinal, ev.kind()});
      dispatch(ev);
    }
    now_ = until;
  }

  std::optional<SimTime> next_event_time() const {
    if (events_.empty()) return std::nullopt;
    return events_.top().fire_at;
  }

  SimTime now() const noexcept { return now_; }
  const BottleneckLink& link() const noexcept { return link_; }
  const LinkConfig& link_config() const noexcept { return link_.config(); }

  std::size_t flow_count() const noexcept { return flows_.size(); }
  const FlowEntry& entry(FlowId id) const {
    const auto index = static_cast<std::size_t>(to_int(id));
    if (index == 0 || index > flows_.size()) {
      throw LookupError("unknown flow " + std::to_string(to_int(id)));
    }
    return flows_[index - 1];
  }
  const transport::FlowState& flow(FlowId id) const { return entry(id).state; }
  const std::vector<FlowEntry>& flows() const noexcept { return flows_; }

  const cubic::CubicParams& global_params() const noexcept { return global_params_; }
  const transport::RouteParams& global_route() const noexcept { return global_route_; }
  void set_global_defaults(const cubic::CubicParams& params, const transport::RouteParams& route) {
    cubic::validate(params);
    transport::validate(route);
    global_params_ = params;
    global_route_ = route;
  }

  const std::vector<TelemetrySample>& telemetry() const noexcept { return telemetry_; }
  const std::vector<TraceEntry>& trace() const noexcept { return trace_; }
  const std::vector<std::string>& invariant_violations() const noexcept { return violations_; }
  std::uint64_t events_processed() const noexcept { return ordinal_processed_; }

  void set_telemetry_sink(std::function<void(const TelemetrySample&)> sink) { sink_ = std::move(sink); }

  // Every module invariant that can be observed from outside, as messages.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> out;
    const auto fail = [&](const FlowEntry& e, const std::string& what) {
      out.push_back("t=" + std::to_string(now_.count()) + "us flow " + std::to_string(to_int(e.state.id)) + ": " +
                    what);
    };
    if (link_.occupancy() > link_.config().queue_bytes) out.push_back("queue occupancy above capacity");
    for (const auto& e : flows_) {
      const auto& s = e.state;
      if (s.cc.cwnd < cubic::kMinWindow - 1e-9) fail(e, "cwnd below 2");
      if (!(s.snd_una <= s.snd_nxt && s.snd_nxt <= s.snd_max)) fail(e, "sequence pointers out of order");
      if (static_cast<double>(s.in_flight_bytes()) > s.flight_cap_bytes + kMss + 1e-6) fail(e, "in-flight above window");
      if (s.in_flight_bytes() != s.recount_pipe()) fail(e, "pipe estimate out of step with scoreboard");
      if (s.cc.ssthresh < cubic::kMinWindow - 1e-9) fail(e, "ssthresh below 2");
      if (s.counters.delivered_bytes > s.counters.new_bytes_sent) fail(e, "delivered more than sent");
      if (s.cc.k_seconds < 0.0) fail(e, "negative K");
      if (e.receiver.rcv_nxt() < e.last_ack) fail(e, "cumulative ack went backwards");
      if (s.params.alpha_q512 < cubic::kParamMin || s.params.alpha_q512 > cubic::kParamMax ||
          s.params.beta_q1024 < cubic::kParamMin || s.params.beta_q1024 > cubic::kParamMax) {
        fail(e, "cubic parameters out of range");
      }
      if (s.route.initcwnd < 2 || s.route.rto_min_ms < 1) fail(e, "route parameters out of range");
      if (!std::isfinite(s.cc.cwnd)) fail(e, "cwnd not finite");
    }
    return out;
  }

private:
  struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.ordinal > b.ordinal;
    }
  };

  FlowEntry& entry(FlowId id) {
    return const_cast<FlowEntry&>(static_cast<const Simulator&>(*this).entry(id));
  }

  void schedule(SimTime at, EventPayload payload) {
    if (at < now_) throw InternalError("event scheduled in the past");
    events_.push(SimEvent{at, next_ordinal_++, std::move(payload)});
  }

  void dispatch(const SimEvent& ev) {
    ++ordinal_processed_;
    std::visit([this](const auto& p) { handle(p); }, ev.payload);
  }

  void transmit(FlowEntry& e, const transport::SendActions& actions) {
    for (const auto& tx : actions) {
      const Segment seg{e.state.id, tx.seq, tx.len, tx.is_retransmit, now_, tx.xmit_order};
      const auto result = link_.enqueue(seg);
      if (std::holds_alternative<Enqueued>(result) && !link_busy_) {
        link_busy_ = true;
        link_.reset_carry();
        schedule(now_ + link_.serialization_time(link_.head().len), DequeueComplete{});
      }
    }
  }

  void sync_rto(FlowEntry& e) {
    const auto& deadline = e.state.rto_deadline;
    if (!deadline) return;
    if (!e.rto_event_at || *e.rto_event_at > *deadline) {
      e.rto_event_at = *deadline;
      schedule(std::max(*deadline, now_), RtoFire{e.state.id});
    }
  }

  template <typename Fn>
  void drive(FlowEntry& e, Fn&& step) {
    const double window = e.state.cc.cwnd;
    const auto losses = e.state.counters.loss_events;
    const auto timeouts = e.state.counters.rto_events;
    const auto actions = step(e.state);
    if (e.state.counters.loss_events != losses) {
      e.losses.push_back({now_, window, e.state.counters.rto_events != timeouts});
    }
    transmit(e, actions);
    sync_rto(e);
  }

  void handle(const FlowStart& ev) {
    auto& e = entry(ev.flow);
    if (e.started) return;
    e.started = true;
    e.start_time = now_;
    e.state.cc = cubic::init_state(e.state.route.initcwnd);
    drive(e, [&](transport::FlowState& s) { return transport::start_flow(s, now_); });
  }

  void handle(const DequeueComplete&) {
    const Segment seg = link_.pop();
    schedule(now_ + link_.config().one_way_delay(), SegmentArrival{seg});
    if (link_.empty()) {
      link_busy_ = false;
    } else {
      schedule(now_ + link_.serialization_time(link_.head().len), DequeueComplete{});
    }
  }

  void handle(const SegmentArrival& ev) {
    auto& e = entry(ev.segment.flow);
    const auto result = e.receiver.on_segment(ev.segment.seq, ev.segment.len);
    e.state.counters.delivered_bytes += result.new_bytes;
    e.last_ack = std::max(e.last_ack, result.ack);
    schedule(now_ + link_.config().one_way_delay(), AckArrival{ev.segment.flow, result.ack, result.sack, ev.segment.xmit_order});
  }

  void handle(const AckArrival& ev) {
    auto& e = entry(ev.flow);
    drive(e, [&](transport::FlowState& s) { return transport::on_ack_segment(s, ev.ack, now_, ev.sack, ev.echo_order); });
  }

  void handle(const RtoFire& ev) {
    auto& e = entry(ev.flow);
    if (!e.rto_event_at || *e.rto_event_at != now_) return;  // superseded
    e.rto_event_at.reset();
    const auto& deadline = e.state.rto_deadline;
    if (!deadline) return;
    if (now_ < *deadline) {
      sync_rto(e);
      return;
    }
    drive(e, [&](transport::FlowState& s) { return transport::on_rto(s, now_); });
  }

  void handle(const ParamUpdateEvent& ev) {
    const auto& update = ev.update;
    if (update.scope.global()) {
      apply(update, global_params_, global_route_);
      for (auto& e : flows_) apply(update, e.state.params, e.state.route);
    } else {
      auto& e = entry(*update.scope.flow);
      apply(update, e.state.params, e.state.route);
    }
  }

  void handle(const TelemetryTick&) {
    TelemetrySample sample;
    sample.t = now_;
    sample.queue_bytes = link_.occupancy();
    sample.drops_tail = link_.drops_tail();
    sample.drops_random = link_.drops_random();
    const double interval_s = to_seconds(kTelemetryInterval);
    for (auto& e : flows_) {
      if (!e.started) continue;
      const auto& s = e.state;
      FlowSample f;
      f.id = s.id;
      f.cwnd_segments = s.cc.cwnd;
      f.goodput_bps = static_cast<double>(s.counters.delivered_bytes - e.delivered_at_last_tick) * 8.0 / interval_s;
      if (s.srtt) f.srtt_ms = *s.srtt * 1e3;
      f.retx_total = s.counters.retransmits;
      f.delivered_bytes = s.counters.delivered_bytes;
      f.bytes_sent = s.counters.bytes_sent;
      f.loss_events = s.counters.loss_events;
      f.rto_events = s.counters.rto_events;
      f.ssthresh = s.cc.ssthresh;
      f.complete = s.complete();
      e.delivered_at_last_tick = s.counters.delivered_bytes;
      sample.flows.push_back(f);
    }
    if (options_.check_invariants) {
      for (auto& v : check_invariants()) violations_.push_back(std::move(v));
    }
    schedule(now_ + kTelemetryInterval, TelemetryTick{});
    if (sink_) sink_(sample);
    if (options_.record_telemetry) telemetry_.push_back(std::move(sample));
  }

  BottleneckLink link_;
  SimOptions options_;
  SimTime now_{0};
  std::uint64_t next_ordinal_ = 0;
  std::uint64_t ordinal_processed_ = 0;
  bool link_busy_ = false;
  bool tick_scheduled_ = false;
  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> events_;
  std::vector<FlowEntry> flows_;
  cubic::CubicParams global_params_;
  transport::RouteParams global_route_;
  std::vector<TelemetrySample> telemetry_;
  std::vector<TraceEntry> trace_;
  std::vector<std::string> violations_;
  std::function<void(const TelemetrySample&)> sink_;
};

}  // namespace tunerlab::netsim
