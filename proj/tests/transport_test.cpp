#include <deque>
#include <random>

#include <gtest/gtest.h>

#include "tunerlab/transport.hpp"

using namespace tunerlab;
using namespace tunerlab::transport;

namespace {

FlowState flow_with(int initcwnd, int beta_q = 717, std::optional<std::uint64_t> goal = std::nullopt) {
  RouteParams route;
  route.initcwnd = initcwnd;
  return make_flow(FlowId{1}, cubic::decode_params(512, beta_q, false, false), route, goal);
}

SimTime ms(std::int64_t v) { return from_millis(v); }

}  // namespace

TEST(RtoValue, WorkedPoints) {
  RouteParams route;
  EXPECT_DOUBLE_EQ(rto_value(std::nullopt, std::nullopt, route, 0), 1.0);
  EXPECT_NEAR(rto_value(0.3, 0.05, route, 0), 0.5, 1e-12);
  EXPECT_NEAR(rto_value(0.1, 0.025, route, 0), 0.2, 1e-12);
  route.rto_min_ms = 400;
  EXPECT_NEAR(rto_value(0.1, 0.025, route, 0), 0.4, 1e-12);
}

TEST(RtoValue, BackoffDoublesAndCaps) {
  RouteParams route;
  EXPECT_NEAR(rto_value(0.3, 0.05, route, 1), 1.0, 1e-12);
  EXPECT_NEAR(rto_value(0.3, 0.05, route, 2), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(rto_value(0.3, 0.05, route, 10), 60.0);
}

TEST(UpdateRtt, SmoothedEstimator) {
  auto f = flow_with(10);
  f.rto_backoff = 3;
  update_rtt(f, 0.08);
  EXPECT_DOUBLE_EQ(*f.srtt, 0.08);
  EXPECT_DOUBLE_EQ(*f.rttvar, 0.04);
  EXPECT_EQ(f.rto_backoff, 0);
  update_rtt(f, 0.08);
  EXPECT_NEAR(*f.srtt, 0.08, 1e-15);
  EXPECT_NEAR(*f.rttvar, 0.03, 1e-15);
  update_rtt(f, 0.16);
  EXPECT_NEAR(*f.rttvar, 0.75 * 0.03 + 0.25 * 0.08, 1e-15);
  EXPECT_NEAR(*f.srtt, 0.875 * 0.08 + 0.125 * 0.16, 1e-15);
  EXPECT_THROW(update_rtt(f, 0.0), RangeError);
}

TEST(RouteParams, Validation) {
  RouteParams r;
  EXPECT_NO_THROW(validate(r));
  r.initcwnd = 1;
  EXPECT_THROW(validate(r), RangeError);
  r.initcwnd = 10;
  r.rto_min_ms = 0;
  EXPECT_THROW(validate(r), RangeError);
}

TEST(OnAckSegment, CumulativeAckSlidesWindow) {
  auto f = flow_with(10);
  const auto first = start_flow(f, ms(0));
  ASSERT_EQ(first.size(), 10u);
  EXPECT_EQ(f.snd_nxt, 10'000u);

  const auto more = on_ack_segment(f, 3000, ms(80), std::nullopt, 3);
  EXPECT_EQ(f.snd_una, 3000u);
  EXPECT_DOUBLE_EQ(f.cc.cwnd, 13.0);  // three slow-start on_ack calls
  // 7 segments still out, window now 13.
  ASSERT_EQ(more.size(), 6u);
  EXPECT_EQ(more.front().seq, 10'000u);
  EXPECT_FALSE(more.front().is_retransmit);
  EXPECT_NEAR(*f.srtt, 0.08, 1e-12);
}

TEST(OnAckSegment, ThirdDupAckTriggersOneFastRetransmit) {
  auto f = flow_with(10);
  start_flow(f, ms(0));
  on_ack_segment(f, 1000, ms(80), std::nullopt, 1);
  // Segment at 1000 is lost; the next ones arrive and are SACKed.
  for (int i = 1; i <= 2; ++i) {
    const auto out = on_ack_segment(f, 1000, ms(80 + i), SackBlock{2000, 2000u + 1000u * i}, 2 + i);
    for (const auto& t : out) EXPECT_FALSE(t.is_retransmit);
    EXPECT_EQ(f.counters.loss_events, 0u);
  }
  const auto out = on_ack_segment(f, 1000, ms(83), SackBlock{2000, 5000}, 5);
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out.front(), (Transmit{1000, 1000, true}));
  EXPECT_EQ(f.counters.loss_events, 1u);
  EXPECT_TRUE(f.in_recovery());
  EXPECT_NEAR(f.cc.cwnd, 11 * 717.0 / 1024, 1e-9);

  // More duplicates inside the episode: no second reduction.
  on_ack_segment(f, 1000, ms(84), SackBlock{2000, 6000}, 6);
  on_ack_segment(f, 1000, ms(85), SackBlock{2000, 7000}, 7);
  EXPECT_EQ(f.counters.loss_events, 1u);
}

TEST(OnAckSegment, AckBeyondSentIsProtocolError) {
  auto f = flow_with(10);
  start_flow(f, ms(0));
  EXPECT_THROW(on_ack_segment(f, 20'000, ms(10)), ProtocolError);
}

TEST(OnRto, CollapsesAfterReduction) {
  auto f = flow_with(100);
  start_flow(f, ms(0));
  const double rto_before = rto_value(f);
  const auto out = on_rto(f, ms(1000));
  EXPECT_NEAR(f.cc.ssthresh, 100 * 717.0 / 1024, 1e-9);
  EXPECT_DOUBLE_EQ(f.cc.cwnd, 2.0);
  EXPECT_EQ(f.rto_backoff, 1);
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out.front(), (Transmit{0, 1000, true}));
  EXPECT_NEAR(rto_value(f), 2 * rto_before, 1e-12);

  on_rto(f, ms(3000));
  EXPECT_EQ(f.rto_backoff, 2);
  EXPECT_NEAR(rto_value(f), 4 * rto_before, 1e-12);
  EXPECT_EQ(f.counters.rto_events, 2u);
}

TEST(OnRto, NothingInFlightIsNoOp) {
  auto f = flow_with(10, 717, 1000);
  start_flow(f, ms(0));
  on_ack_segment(f, 1000, ms(80), std::nullopt, 1);
  ASSERT_TRUE(f.complete());
  const auto before = f.cc;
  EXPECT_TRUE(on_rto(f, ms(2000)).empty());
  EXPECT_FALSE(f.rto_deadline.has_value());
  EXPECT_EQ(f.cc, before);
}

TEST(Receiver, CumulativeAckAndSackBlocks) {
  Receiver r;
  EXPECT_EQ(r.on_segment(0, 1000).ack, 1000u);
  auto res = r.on_segment(2000, 1000);
  EXPECT_EQ(res.ack, 1000u);
  EXPECT_EQ(res.sack, (SackBlock{2000, 3000}));
  res = r.on_segment(1000, 1000);
  EXPECT_EQ(res.ack, 3000u);
  EXPECT_EQ(res.new_bytes, 1000u);
  res = r.on_segment(1000, 1000);  // duplicate
  EXPECT_EQ(res.new_bytes, 0u);
  EXPECT_EQ(r.unique_bytes(), 3000u);
}

// A lossy loopback: fixed one-way delay each way, Bernoulli drops on the data
// path only. Checks the sender's invariants after every step.
struct LoopbackResult {
  bool completed = false;
  std::uint64_t max_loss_per_episode = 0;
};

LoopbackResult run_loopback(double loss, std::uint64_t seed, std::uint64_t goal, int beta_q) {
  auto f = flow_with(10, beta_q, goal);
  Receiver rx;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(loss);
  struct Ack {
    SimTime at;
    std::uint64_t ack;
    std::optional<SackBlock> sack;
    std::uint64_t order;
  };
  std::deque<Ack> acks;
  const SimTime delay = ms(20);
  SimTime now{};
  std::uint64_t last_ack = 0;
  std::uint64_t episode_start_losses = 0;
  LoopbackResult out;

  auto ship = [&](const SendActions& sends) {
    for (const auto& t : sends) {
      if (drop(rng)) continue;
      const auto r = rx.on_segment(t.seq, t.len);
      acks.push_back({now + 2 * delay, r.ack, r.sack, t.xmit_order});
    }
  };
  auto check = [&] {
    EXPECT_LE(f.snd_una, f.snd_nxt);
    EXPECT_LE(static_cast<double>(f.in_flight_bytes()), f.flight_cap_bytes + kMss);
    EXPECT_EQ(f.in_flight_bytes(), f.recount_pipe());
    EXPECT_LE(rx.unique_bytes(), f.counters.bytes_sent);
  };

  ship(start_flow(f, now));
  for (int step = 0; step < 2'000'000 && !f.complete(); ++step) {
    const auto prior_episode = f.in_recovery_until;
    if (!acks.empty() && (!f.rto_deadline || acks.front().at <= *f.rto_deadline)) {
      const auto a = acks.front();
      acks.pop_front();
      now = a.at;
      EXPECT_GE(a.ack, last_ack);
      last_ack = a.ack;
      ship(on_ack_segment(f, a.ack, now, a.sack, a.order));
    } else if (f.rto_deadline) {
      now = *f.rto_deadline;
      ship(on_rto(f, now));
    } else {
      ADD_FAILURE() << "sender stalled with nothing scheduled";
      break;
    }
    // One ACK can close an episode and open the next, so episodes are told
    // apart by their recovery point.
    if (f.in_recovery() && f.in_recovery_until != prior_episode) episode_start_losses = f.counters.loss_events - 1;
    if (f.in_recovery()) {
      out.max_loss_per_episode = std::max(out.max_loss_per_episode, f.counters.loss_events - episode_start_losses);
    }
    check();
  }
  out.completed = f.complete();
  return out;
}

TEST(TransportProperties, LivenessAndInvariantsUnderLoss) {
  for (double loss : {0.0, 0.01, 0.1, 0.3}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto r = run_loopback(loss, seed, 300'000, 717);
      EXPECT_TRUE(r.completed) << "loss " << loss << " seed " << seed;
      EXPECT_LE(r.max_loss_per_episode, 1u) << "loss " << loss << " seed " << seed;
    }
  }
}

TEST(TransportProperties, NoReductionFlowStillCompletes) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    EXPECT_TRUE(run_loopback(0.05, seed, 300'000, 1024).completed);
  }
}
