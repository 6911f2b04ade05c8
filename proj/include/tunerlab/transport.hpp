#pragma once

// Reliable byte-stream sender and receiver driven by the simulator.
//
// Cumulative ACKs, one ACK per received segment. Each ACK also reports the
// receiver's out-of-order block that contains the segment that triggered it,
// which the sender folds into a scoreboard. Three duplicate ACKs (equivalently
// three SACKed segments above snd_una) start a recovery episode: the head
// segment is retransmitted, cubic::on_loss runs exactly once, and further
// holes are repaired as the pipe estimate allows. An RTO collapses the window
// to two segments and resends everything not known to be received.
//
// Functions mutate the FlowState they are handed and return the segments the
// caller must put on the wire.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <vector>

#include "tunerlab/cubic.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/units.hpp"

namespace tunerlab::transport {

inline constexpr double kInitialRtoSeconds = 1.0;
inline constexpr double kMaxRtoSeconds = 60.0;
inline constexpr int kDupAckThreshold = 3;
inline constexpr int kMaxBackoff = 16;

inline constexpr std::int64_t kRtoMinMsMax = 60'000;
inline constexpr int kInitCwndMax = 1000;

struct RouteParams {
  std::int64_t rto_min_ms = 200;
  int initcwnd = 10;

  double rto_min_seconds() const noexcept { return static_cast<double>(rto_min_ms) / 1e3; }

  friend bool operator==(const RouteParams&, const RouteParams&) = default;
};

inline void validate(const RouteParams& route) {
  if (route.rto_min_ms < 1 || route.rto_min_ms > kRtoMinMsMax) {
    throw RangeError("rto_min_ms", "rto_min_ms must be in [1, " + std::to_string(kRtoMinMsMax) + "], got " +
                                       std::to_string(route.rto_min_ms));
  }
  if (route.initcwnd < 2 || route.initcwnd > kInitCwndMax) {
    throw RangeError("initcwnd", "initcwnd must be in [2, " + std::to_string(kInitCwndMax) + "], got " +
                                     std::to_string(route.initcwnd));
  }
}

struct Transmit {
  std::uint64_t seq = 0;
  std::uint32_t len = 0;
  bool is_retransmit = false;
  std::uint64_t xmit_order = 0;  // echoed back by the receiver's ACK

  friend bool operator==(const Transmit& a, const Transmit& b) {
    return a.seq == b.seq && a.len == b.len && a.is_retransmit == b.is_retransmit;
  }
};

using SendActions = std::vector<Transmit>;

// Half-open byte range [start, end) held by the receiver above its
// cumulative ACK point.
struct SackBlock {
  std::uint64_t start = 0;
  std::uint64_t end = 0;

  friend bool operator==(const SackBlock&, const SackBlock&) = default;
};

struct FlowCounters {
  std::uint64_t segments_sent = 0;
  std::uint64_t retransmits = 0;
  std::uint64_t bytes_sent = 0;      // every transmission, retransmits included
  std::uint64_t new_bytes_sent = 0;  // first transmissions only
  std::uint64_t delivered_bytes = 0; // unique bytes that reached the receiver
  std::uint64_t loss_events = 0;     // cc on_loss invocations
  std::uint64_t rto_events = 0;
};

struct SentRecord {
  SimTime sent_at{};
  std::uint32_t len = 0;
  bool retransmitted = false;   // ever; Karn's rule
  bool sacked = false;
  bool lost = false;
  bool retx_in_flight = false;  // a retransmission not yet accounted for
  bool in_pipe = false;         // counted in the flow's pipe estimate
  std::uint64_t xmit_order = 0; // position in the flow's transmission sequence
};

struct FlowState {
  FlowId id{};
  std::uint64_t snd_una = 0;
  std::uint64_t snd_nxt = 0;
  std::uint64_t snd_max = 0;
  std::optional<std::uint64_t> bytes_goal;

  int dupack_count = 0;
  std::optional<std::uint64_t> in_recovery_until;
  // Set by an RTO: no new recovery episode until snd_una passes this point.
  std::optional<std::uint64_t> rto_recover;

  std::optional<double> srtt;
  std::optional<double> rttvar;
  std::optional<double> last_rtt;
  std::optional<SimTime> rto_deadline;
  int rto_backoff = 0;

  // Window in force when the most recent segment left; the pipe can never
  // exceed it by more than one segment.
  double flight_cap_bytes = 0.0;
  std::optional<SimTime> completed_at;
  std::map<std::uint64_t, SentRecord> outstanding;
  // Indexes over `outstanding`, kept in step by the detail helpers.
  std::set<std::uint64_t> unsacked;                      // seq
  std::set<std::uint64_t> repair_queue;                  // seq of lost, unrepaired segments
  std::map<std::uint64_t, std::uint64_t> pipe_by_order;  // xmit order -> seq
  std::uint64_t pipe_bytes = 0;
  std::uint64_t next_xmit_order = 1;
  std::uint64_t highest_delivered_order = 0;

  cubic::CubicState cc;
  cubic::CubicParams params;
  RouteParams route;
  FlowCounters counters;

  bool in_recovery() const noexcept { return in_recovery_until.has_value(); }
  bool complete() const noexcept { return bytes_goal && snd_una >= *bytes_goal; }
  double window_bytes() const noexcept { return cc.cwnd * static_cast<double>(kMss); }

  // Bytes believed to be in the network.
  std::uint64_t in_flight_bytes() const noexcept { return pipe_bytes; }

  // Same quantity rebuilt from the scoreboard, for consistency checks.
  std::uint64_t recount_pipe() const noexcept {
    std::uint64_t pipe = 0;
    for (const auto& [seq, r] : outstanding) {
      if (!r.sacked && (!r.lost || r.retx_in_flight)) pipe += r.len;
    }
    return pipe;
  }
};

inline FlowState make_flow(FlowId id, const cubic::CubicParams& params, const RouteParams& route,
                           std::optional<std::uint64_t> bytes_goal = std::nullopt) {
  cubic::validate(params);
  validate(route);
  if (bytes_goal && *bytes_goal == 0) {
    throw RangeError("bytes_goal", "bytes_goal must be positive when present");
  }
  FlowState flow;
  flow.id = id;
  flow.bytes_goal = bytes_goal;
  flow.params = params;
  flow.route = route;
  flow.cc = cubic::init_state(route.initcwnd);
  return flow;
}

inline double rto_value(std::optional<double> srtt, std::optional<double> rttvar, const RouteParams& route,
                        int backoff) {
  const double base = (srtt && rttvar) ? *srtt + 4.0 * *rttvar : kInitialRtoSeconds;
  const double floored = std::max(base, route.rto_min_seconds());
  const double scaled = floored * std::ldexp(1.0, std::max(backoff, 0));
  return std::min(scaled, kMaxRtoSeconds);
}

inline double rto_value(const FlowState& flow) {
  return rto_value(flow.srtt, flow.rttvar, flow.route, flow.rto_backoff);
}

inline void update_rtt(FlowState& flow, double sample) {
  if (!(sample > 0.0)) {
    throw RangeError("rtt_sample", "rtt sample must be positive");
  }
  if (!flow.srtt) {
    flow.srtt = sample;
    flow.rttvar = sample / 2.0;
  } else {
    flow.rttvar = 0.75 * *flow.rttvar + 0.25 * std::abs(*flow.srtt - sample);
    flow.srtt = 0.875 * *flow.srtt + 0.125 * sample;
  }
  flow.last_rtt = sample;
  flow.rto_backoff = 0;
}

namespace detail {

inline void arm_rto(FlowState& flow, SimTime now) { flow.rto_deadline = now + from_seconds(rto_value(flow)); }

inline void leave_pipe(FlowState& flow, SentRecord& r) {
  if (!r.in_pipe) return;
  flow.pipe_by_order.erase(r.xmit_order);
  flow.pipe_bytes -= r.len;
  r.in_pipe = false;
}

inline void mark_sacked(FlowState& flow, std::uint64_t seq, SentRecord& r) {
  if (r.sacked) return;
  leave_pipe(flow, r);
  r.sacked = true;
  r.retx_in_flight = false;
  flow.unsacked.erase(seq);
  flow.repair_queue.erase(seq);
}

// Presumes the segment's latest transmission is gone and queues it for repair.
inline void mark_lost(FlowState& flow, std::uint64_t seq, SentRecord& r) {
  if (r.sacked) return;
  leave_pipe(flow, r);
  r.lost = true;
  r.retx_in_flight = false;
  flow.repair_queue.insert(seq);
}

inline void forget(FlowState& flow, std::uint64_t seq, SentRecord& r) {
  leave_pipe(flow, r);
  flow.unsacked.erase(seq);
  flow.repair_queue.erase(seq);
}

inline Transmit transmit_at(FlowState& flow, std::uint64_t seq, SimTime now) {
  const std::uint64_t remaining = flow.bytes_goal ? *flow.bytes_goal - seq : kMss;
  const auto len = static_cast<std::uint32_t>(std::min<std::uint64_t>(kMss, remaining));
  const bool retx = seq < flow.snd_max;
  auto& record = flow.outstanding[seq];
  leave_pipe(flow, record);
  record.sent_at = now;
  record.len = len;
  record.xmit_order = flow.next_xmit_order++;
  record.in_pipe = true;
  flow.pipe_by_order.emplace(record.xmit_order, seq);
  flow.pipe_bytes += len;
  if (retx) {
    record.retransmitted = true;
    record.retx_in_flight = true;
    flow.repair_queue.erase(seq);
    ++flow.counters.retransmits;
  } else {
    flow.unsacked.insert(seq);
    flow.counters.new_bytes_sent += len;
  }
  ++flow.counters.segments_sent;
  flow.counters.bytes_sent += len;
  return Transmit{seq, len, retx, record.xmit_order};
}

// A transmission is lost once DupThresh transmissions sent after it have been
// delivered. The forward path is FIFO, so this also catches retransmissions
// that were dropped again.
inline bool detect_losses(FlowState& flow) {
  bool found = false;
  while (!flow.pipe_by_order.empty()) {
    const auto [order, seq] = *flow.pipe_by_order.begin();
    if (order + kDupAckThreshold > flow.highest_delivered_order) break;
    mark_lost(flow, seq, flow.outstanding.at(seq));
    found = true;
  }
  return found;
}

inline std::optional<std::uint64_t> next_lost(const FlowState& flow) {
  if (flow.repair_queue.empty()) return std::nullopt;
  return *flow.repair_queue.begin();
}

}  // namespace detail

// Sends as much as the window allows: repairs first, then new data.
inline SendActions fill_window(FlowState& flow, SimTime now) {
  SendActions out;
  const double window = flow.window_bytes();
  std::uint64_t pipe = flow.in_flight_bytes();
  for (;;) {
    if (auto seq = detail::next_lost(flow)) {
      const auto len = flow.outstanding.at(*seq).len;
      if (static_cast<double>(pipe + len) > window) break;
      out.push_back(detail::transmit_at(flow, *seq, now));
      pipe += len;
      flow.flight_cap_bytes = window;
      continue;
    }
    if (flow.bytes_goal && flow.snd_nxt >= *flow.bytes_goal) break;
    const std::uint64_t remaining = flow.bytes_goal ? *flow.bytes_goal - flow.snd_nxt : kMss;
    const auto len = std::min<std::uint64_t>(kMss, remaining);
    if (static_cast<double>(pipe + len) > window) break;
    out.push_back(detail::transmit_at(flow, flow.snd_nxt, now));
    flow.snd_nxt += len;
    flow.snd_max = std::max(flow.snd_max, flow.snd_nxt);
    pipe += len;
    flow.flight_cap_bytes = window;
  }
  if (!out.empty() && !flow.rto_deadline) {
    detail::arm_rto(flow, now);
  }
  return out;
}

inline SendActions start_flow(FlowState& flow, SimTime now) { return fill_window(flow, now); }

inline SendActions on_ack_segment(FlowState& flow, std::uint64_t ack_seq, SimTime now,
                                  std::optional<SackBlock> sack = std::nullopt, std::uint64_t echo_order = 0) {
  if (ack_seq > flow.snd_max) {
    throw ProtocolError("ack " + std::to_string(ack_seq) + " beyond highest sent byte " +
                        std::to_string(flow.snd_max) + " on flow " + std::to_string(to_int(flow.id)));
  }
  if (sack && (sack->end > flow.snd_max || sack->start >= sack->end)) {
    throw ProtocolError("malformed sack block on flow " + std::to_string(to_int(flow.id)));
  }

  SendActions out;
  flow.highest_delivered_order = std::max(flow.highest_delivered_order, echo_order);
  const bool advanced = ack_seq > flow.snd_una;
  const bool was_duplicate = ack_seq == flow.snd_una && flow.snd_una < flow.snd_max;
  std::uint64_t acked = 0;

  if (advanced) {
    acked = ack_seq - flow.snd_una;

    // Karn: only time ACKs that cover no retransmitted segment.
    bool ambiguous = false;
    std::optional<SimTime> newest_sent;
    auto it = flow.outstanding.begin();
    while (it != flow.outstanding.end() && it->first < ack_seq) {
      auto& r = it->second;
      ambiguous = ambiguous || r.retransmitted;
      if (!r.sacked) newest_sent = r.sent_at;
      detail::forget(flow, it->first, r);
      it = flow.outstanding.erase(it);
    }
    if (!ambiguous && newest_sent && now > *newest_sent) {
      update_rtt(flow, to_seconds(now - *newest_sent));
    }

    flow.snd_una = ack_seq;
    flow.dupack_count = 0;
    if (flow.rto_recover && flow.snd_una >= *flow.rto_recover) flow.rto_recover.reset();
  }

  if (sack) {
    auto it = flow.unsacked.lower_bound(sack->start);
    while (it != flow.unsacked.end() && *it < sack->end) {
      const auto seq = *it++;
      detail::mark_sacked(flow, seq, flow.outstanding.at(seq));
    }
  }

  if (was_duplicate) ++flow.dupack_count;

  if (flow.in_recovery() && flow.snd_una >= *flow.in_recovery_until) {
    flow.in_recovery_until.reset();
  }

  const bool detected = detail::detect_losses(flow);
  if (!flow.in_recovery() && !flow.rto_recover && flow.snd_una < flow.snd_max &&
      (flow.dupack_count >= kDupAckThreshold || detected)) {
    // Fast retransmit: start a recovery episode and resend the head now.
    flow.in_recovery_until = flow.snd_max;
    flow.cc = cubic::on_loss(flow.cc, flow.params);
    ++flow.counters.loss_events;
    detail::mark_lost(flow, flow.snd_una, flow.outstanding.at(flow.snd_una));
    out.push_back(detail::transmit_at(flow, flow.snd_una, now));
  }

  if (advanced && !flow.in_recovery()) {
    const double rtt = flow.last_rtt.value_or(flow.srtt.value_or(kInitialRtoSeconds));
    const auto segments = (acked + kMss - 1) / kMss;
    for (std::uint64_t i = 0; i < segments; ++i) {
      flow.cc = cubic::on_ack(flow.cc, flow.params, to_seconds(now), rtt);
    }
  }

  if (advanced) {
    if (flow.snd_una >= flow.snd_max) {
      flow.rto_deadline.reset();
    } else {
      detail::arm_rto(flow, now);
    }
    if (flow.complete() && !flow.completed_at) flow.completed_at = now;
  }

  auto more = fill_window(flow, now);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

inline SendActions on_rto(FlowState& flow, SimTime now) {
  if (flow.snd_una >= flow.snd_max) {
    flow.rto_deadline.reset();
    return {};
  }

  // A fast-retransmit episode already paid its reduction.
  if (!flow.in_recovery()) {
    flow.cc = cubic::on_loss(flow.cc, flow.params);
    ++flow.counters.loss_events;
  }
  flow.cc.cwnd = cubic::kMinWindow;
  flow.cc.epoch_start.reset();
  ++flow.counters.rto_events;

  flow.rto_backoff = std::min(flow.rto_backoff + 1, kMaxBackoff);
  flow.in_recovery_until.reset();
  flow.dupack_count = 0;
  flow.rto_recover = flow.snd_max;

  // Everything not known to be at the receiver is presumed lost.
  for (auto& [seq, r] : flow.outstanding) detail::mark_lost(flow, seq, r);

  flow.rto_deadline.reset();
  auto out = fill_window(flow, now);
  detail::arm_rto(flow, now);
  return out;
}

// Cumulative-ACK receiver with an out-of-order buffer of merged byte ranges.
class Receiver {
public:
  struct Result {
    std::uint64_t ack = 0;
    std::uint64_t new_bytes = 0;
    std::optional<SackBlock> sack;
  };

  Result on_segment(std::uint64_t seq, std::uint32_t len) {
    Result result;
    const std::uint64_t end = seq + len;
    if (end > rcv_nxt_ && !holds(seq, end)) {
      if (seq <= rcv_nxt_) {
        result.new_bytes = end - rcv_nxt_;
        rcv_nxt_ = end;
        auto it = blocks_.begin();
        while (it != blocks_.end() && it->first <= rcv_nxt_) {
          rcv_nxt_ = std::max(rcv_nxt_, it->second);
          it = blocks_.erase(it);
        }
      } else {
        result.new_bytes = len;
        insert(seq, end);
      }
    }
    unique_bytes_ += result.new_bytes;
    result.ack = rcv_nxt_;
    if (seq >= rcv_nxt_) result.sack = block_containing(seq);
    return result;
  }

  std::uint64_t rcv_nxt() const noexcept { return rcv_nxt_; }
  std::uint64_t unique_bytes() const noexcept { return unique_bytes_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }

private:
  bool holds(std::uint64_t start, std::uint64_t end) const {
    auto it = blocks_.upper_bound(start);
    if (it == blocks_.begin()) return false;
    --it;
    return it->first <= start && end <= it->second;
  }

  std::optional<SackBlock> block_containing(std::uint64_t seq) const {
    auto it = blocks_.upper_bound(seq);
    if (it == blocks_.begin()) return std::nullopt;
    --it;
    if (seq < it->first || seq >= it->second) return std::nullopt;
    return SackBlock{it->first, it->second};
  }

  void insert(std::uint64_t start, std::uint64_t end) {
    auto it = blocks_.upper_bound(start);
    if (it != blocks_.begin()) {
      auto prev = std::prev(it);
      if (prev->second >= start) {
        start = prev->first;
        end = std::max(end, prev->second);
        it = blocks_.erase(prev);
      }
    }
    while (it != blocks_.end() && it->first <= end) {
      end = std::max(end, it->second);
      it = blocks_.erase(it);
    }
    blocks_.emplace(start, end);
  }

  std::uint64_t rcv_nxt_ = 0;
  std::uint64_t unique_bytes_ = 0;
  std::map<std::uint64_t, std::uint64_t> blocks_;
};

}  // namespace tunerlab::transport
