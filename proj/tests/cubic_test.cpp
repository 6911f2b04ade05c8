#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tunerlab/cubic.hpp"

using namespace tunerlab;
using namespace tunerlab::cubic;

namespace {

CubicParams params(int alpha_q, int beta_q, bool fc, bool tf) { return decode_params(alpha_q, beta_q, fc, tf); }

CubicState epoch(double origin, double k) {
  CubicState s = init_state(10);
  s.origin_point = origin;
  s.k_seconds = k;
  s.epoch_start = 0.0;
  return s;
}

// Root of f(k) = c*k^3 - gap by bisection; independent of std::cbrt.
double bisect_k(double gap, double c) {
  double lo = 0.0;
  double hi = 1.0;
  while (c * hi * hi * hi < gap) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (c * mid * mid * mid < gap ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(DecodeParams, ScalesByFixedPointDenominators) {
  const auto a = params(512, 1024, true, true);
  EXPECT_DOUBLE_EQ(a.alpha(), 1.0);
  EXPECT_DOUBLE_EQ(a.beta(), 1.0);
  EXPECT_DOUBLE_EQ(a.c_scale, 0.4);

  const auto b = params(512, 512, false, false);
  EXPECT_DOUBLE_EQ(b.beta(), 0.5);
  EXPECT_FALSE(b.fast_convergence);
  EXPECT_FALSE(b.tcp_friendliness);

  const auto c = params(1024, 717, true, true);
  EXPECT_DOUBLE_EQ(c.alpha(), 2.0);
  EXPECT_NEAR(c.beta(), 0.7, 0.001);
}

TEST(DecodeParams, RejectsOutOfRangeAndNamesTheParameter) {
  for (long bad : {0L, 1025L, -3L, 2048L}) {
    try {
      decode_params(bad, 512, true, true);
      FAIL() << "alpha " << bad << " accepted";
    } catch (const RangeError& e) {
      EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
    }
    try {
      decode_params(512, bad, true, true);
      FAIL() << "beta " << bad << " accepted";
    } catch (const RangeError& e) {
      EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
    }
  }
}

TEST(DecodeParams, FixedPointRoundTripIsExact) {
  for (int a = kParamMin; a <= kParamMax; ++a) {
    for (int b = kParamMin; b <= kParamMax; b += 7) {
      const auto e = encode_params(decode_params(a, b, true, false));
      ASSERT_EQ(e.alpha_q512, a);
      ASSERT_EQ(e.beta_q1024, b);
    }
  }
}

TEST(InitState, FreshFlowHasNoHistory) {
  const auto s = init_state(10);
  EXPECT_EQ(s.cwnd, 10.0);
  EXPECT_TRUE(std::isinf(s.ssthresh));
  EXPECT_EQ(s.last_max, 0.0);
  EXPECT_FALSE(s.epoch_start.has_value());
  EXPECT_EQ(s.tcp_cwnd, 0.0);
  EXPECT_EQ(s.ack_cnt, 0);
  EXPECT_TRUE(std::isinf(s.min_rtt));
  EXPECT_EQ(init_state(2).cwnd, 2.0);
  EXPECT_THROW(init_state(1), RangeError);
}

TEST(CubicTarget, WorkedPoints) {
  const double k = bisect_k(30.0, 0.4);
  const auto p = params(512, 717, false, false);
  const auto s = epoch(100.0, k);
  EXPECT_NEAR(cubic_target(s, p, k), 100.0, 1e-12);
  EXPECT_NEAR(cubic_target(s, p, 0.0), 70.0, 1e-9);
  EXPECT_NEAR(cubic_target(s, p, k + 2.0), 103.2, 1e-9);
}

TEST(EpochBegin, WorkedPoints) {
  const auto p = params(512, 717, false, false);
  auto s = init_state(10);
  s.last_max = 100;
  s.cwnd = 70;
  s = epoch_begin(s, p, 3.0);
  EXPECT_NEAR(s.k_seconds, bisect_k(30.0, 0.4), 1e-12);
  EXPECT_NEAR(0.4 * std::pow(s.k_seconds, 3), 30.0, 1e-9);
  EXPECT_EQ(s.origin_point, 100.0);
  EXPECT_EQ(*s.epoch_start, 3.0);
  EXPECT_EQ(s.ack_cnt, 1);
  EXPECT_EQ(s.tcp_cwnd, 70.0);

  s = epoch_begin(init_state(10), p, 0.0);
  EXPECT_EQ(s.k_seconds, 0.0);
  EXPECT_EQ(s.origin_point, 10.0);

  auto t = init_state(10);
  t.last_max = 240;
  t.cwnd = 168;
  t = epoch_begin(t, p, 0.0);
  EXPECT_NEAR(t.k_seconds, 5.6462, 1e-4);
  EXPECT_NEAR(0.4 * std::pow(t.k_seconds, 3), 72.0, 1e-9);
}

TEST(CubicProperties, EpochContinuityAndPlateauOverRandomInputs) {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> max_dist(3.0, 5000.0);
  std::uniform_real_distribution<double> frac(0.01, 0.999);
  std::uniform_real_distribution<double> c_dist(0.01, 4.0);
  for (int i = 0; i < 1000; ++i) {
    CubicParams p = params(512, 717, false, false);
    p.c_scale = c_dist(rng);
    auto s = init_state(2);
    s.last_max = max_dist(rng);
    s.cwnd = std::max(2.0, s.last_max * frac(rng));
    if (!(s.cwnd < s.last_max)) continue;
    const double cwnd = s.cwnd;
    const double last_max = s.last_max;
    s = epoch_begin(s, p, 0.0);
    ASSERT_NEAR(cubic_target(s, p, 0.0), cwnd, 1e-6 * cwnd) << "case " << i;
    ASSERT_NEAR(cubic_target(s, p, s.k_seconds), last_max, 1e-9 * last_max) << "case " << i;
  }
}

TEST(CubicProperties, SignedCubeMatchesBranchForm) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> origin_dist(2.0, 1000.0);
  std::uniform_real_distribution<double> k_dist(0.0, 20.0);
  std::uniform_real_distribution<double> c_dist(0.01, 4.0);
  std::uniform_real_distribution<double> t_dist(0.0, 40.0);
  for (int i = 0; i < 1000; ++i) {
    CubicParams p = params(512, 717, false, false);
    p.c_scale = c_dist(rng);
    const auto s = epoch(origin_dist(rng), k_dist(rng));
    const double t = t_dist(rng);
    const double d = std::abs(t - s.k_seconds);
    const double branch = t < s.k_seconds ? s.origin_point - p.c_scale * d * d * d : s.origin_point + p.c_scale * d * d * d;
    ASSERT_NEAR(cubic_target(s, p, t), branch, 1e-12 * std::max(1.0, std::abs(branch)));
  }
}

TEST(OnAck, CongestionAvoidanceStepTowardTarget) {
  const auto p = params(512, 717, false, false);
  auto s = epoch(100.0, bisect_k(30.0, 0.4));
  s.cwnd = 70;
  s.ssthresh = 70;
  s.last_max = 100;
  s.min_rtt = 0.1;
  s = on_ack(s, p, 0.9, 0.1);  // 0.9 s elapsed plus 0.1 s lookahead
  const double target = 100.0 + 0.4 * std::pow(1.0 - bisect_k(30.0, 0.4), 3);
  EXPECT_NEAR(target, 86.68, 0.01);
  EXPECT_NEAR(s.cwnd, 70.0 + (target - 70.0) / 70.0, 1e-9);
  EXPECT_NEAR(s.cwnd, 70.238, 1e-3);
  EXPECT_EQ(s.ack_cnt, 1);
}

TEST(OnAck, SlowStartAddsOneSegment) {
  const auto p = params(512, 717, true, true);
  const auto s = on_ack(init_state(5), p, 0.0, 0.08);
  EXPECT_EQ(s.cwnd, 6.0);
  EXPECT_FALSE(s.epoch_start.has_value());
  EXPECT_EQ(s.min_rtt, 0.08);
}

TEST(OnAck, PlateauProbingCreeps) {
  const auto p = params(512, 717, false, false);
  auto s = epoch(100.0, 2.0);
  s.cwnd = 100;
  s.ssthresh = 50;
  s.min_rtt = 0.5;
  s = on_ack(s, p, 1.5, 0.5);
  EXPECT_NEAR(s.cwnd, 100.0 + 1.0 / 10000.0, 1e-12);
}

TEST(OnAck, RejectsNonPositiveRtt) {
  const auto p = params(512, 717, true, true);
  EXPECT_THROW(on_ack(init_state(10), p, 0.0, 0.0), RangeError);
  EXPECT_THROW(on_ack(init_state(10), p, 0.0, -1.0), RangeError);
}

TEST(OnAck, WindowNeverShrinksWithoutLoss) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> q(1, 1024);
  std::uniform_real_distribution<double> rtt(0.005, 0.5);
  for (int run = 0; run < 50; ++run) {
    const auto p = params(q(rng), q(rng), run % 2 == 0, run % 3 == 0);
    auto s = init_state(10);
    s.last_max = 50.0 + run;
    s.ssthresh = 8;
    double now = 0;
    for (int i = 0; i < 2000; ++i) {
      now += rtt(rng) / 20.0;
      const double before = s.cwnd;
      s = on_ack(s, p, now, rtt(rng));
      ASSERT_GE(s.cwnd, before);
    }
  }
}

TEST(FriendlyFloor, SlopePerRtt) {
  EXPECT_EQ(friendly_slope(params(512, 1024, true, true)), 0.0);
  EXPECT_NEAR(friendly_slope(params(512, 512, true, true)), 1.0, 1e-12);
  const double b = 717.0 / 1024.0;
  EXPECT_NEAR(friendly_slope(params(512, 717, true, true)), 3 * (1 - b) / (1 + b), 1e-12);
  EXPECT_NEAR(friendly_slope(params(512, 717, true, true)), 0.529, 0.002);
}

TEST(FriendlyFloor, GrowsBySlopeOverOneWindowOfAcks) {
  const auto p = params(512, 512, false, true);
  auto s = init_state(10);
  s.cwnd = 40;
  s.ssthresh = 40;
  s.last_max = 40;
  s = epoch_begin(s, p, 0.0);
  const double start = friendly_floor(s, p);
  for (int i = 0; i < 40; ++i) s = on_ack(s, p, 0.001 * i, 0.1);
  // One cwnd of ACKs is one RTT: slope 1.0 segment, give or take cwnd drift.
  EXPECT_NEAR(friendly_floor(s, p) - start, 1.0, 0.02);
}

struct LossCase {
  int alpha_q;
  int beta_q;
  bool fast_convergence;
  double prior_last_max;
  double cwnd_after;
  double last_max_after;
};

class LossRule : public ::testing::TestWithParam<LossCase> {};

TEST_P(LossRule, ReducesAndRecordsPlateau) {
  const auto c = GetParam();
  auto s = init_state(10);
  s.cwnd = 100;
  s.last_max = c.prior_last_max;
  s.epoch_start = 1.0;
  const auto p = params(c.alpha_q, c.beta_q, c.fast_convergence, false);
  const auto out = on_loss(s, p);
  EXPECT_NEAR(out.cwnd, c.cwnd_after, 1e-9);
  EXPECT_NEAR(out.ssthresh, c.cwnd_after, 1e-9);
  EXPECT_NEAR(out.last_max, c.last_max_after, 1e-9);
  EXPECT_FALSE(out.epoch_start.has_value());
}

// beta 0.7 is taken as the exact fraction 717/1024.
INSTANTIATE_TEST_SUITE_P(Table, LossRule,
                         ::testing::Values(LossCase{512, 717, false, 0, 100 * 717.0 / 1024, 100},
                                           LossCase{512, 717, true, 120, 100 * 717.0 / 1024,
                                                    100 * (1 + 717.0 / 1024) / 2},
                                           LossCase{512, 1024, false, 0, 100, 100},
                                           LossCase{1024, 717, false, 0, 100 * 717.0 / 1024, 200}));

TEST(OnLoss, FloorsAtTwoSegments) {
  auto s = init_state(2);
  const auto out = on_loss(s, params(512, 1, false, false));
  EXPECT_EQ(out.cwnd, 2.0);
  EXPECT_EQ(out.ssthresh, 2.0);
}
