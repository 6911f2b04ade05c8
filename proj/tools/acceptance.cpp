// Headless acceptance run: one PASS/FAIL line per criterion. A FAIL is a
// measured shortfall, not a crash; the process exits 0 once every criterion
// has been evaluated unless --strict is given.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tunerlab/client.hpp"
#include "tunerlab/cubic.hpp"
#include "tunerlab/experiment.hpp"
#include "tunerlab/predictor.hpp"
#include "tunerlab/scenario.hpp"
#include "tunerlab/service.hpp"

using namespace tunerlab;
using namespace std::chrono_literals;
using experiment::mean_goodput;
using experiment::mean_offered;
using nlohmann::json;
namespace presets = tunerlab::scenario::presets;

namespace {

constexpr double kLinkRate = 12e6;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string csv_of(const std::vector<TelemetrySample>& series) {
  std::ostringstream out;
  write_telemetry_csv(out, series);
  return out.str();
}

Verdict cubic_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> max_dist(3.0, 10000.0);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  std::uniform_real_distribution<double> c_dist(0.01, 4.0);
  double worst_t0 = 0.0;
  double worst_k = 0.0;
  int cases = 0;
  while (cases < 1000) {
    cubic::CubicParams p;
    p.c_scale = c_dist(rng);
    cubic::CubicState s = cubic::init_state(2);
    s.last_max = max_dist(rng);
    s.cwnd = 2.0 + (s.last_max - 2.0) * frac(rng);
    if (!(s.cwnd < s.last_max)) continue;
    ++cases;
    const double cwnd = s.cwnd;
    const double last_max = s.last_max;
    s = cubic::epoch_begin(s, p, 0.0);
    worst_t0 = std::max(worst_t0, std::abs(cubic::cubic_target(s, p, 0.0) - cwnd) / cwnd);
    worst_k = std::max(worst_k, std::abs(cubic::cubic_target(s, p, s.k_seconds) - last_max) / last_max);
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst_t0 <= 1e-6 && worst_k <= 1e-9 && elapsed < 1.0;
  return {pass, fmt::format("{} cases, worst rel err t=0 {:.2e} (<=1e-6), t=K {:.2e} (<=1e-9), {:.3f} s (<1 s)", cases,
                            worst_t0, worst_k, elapsed)};
}

Verdict loss_table() {
  struct Row {
    const char* what;
    int alpha_q;
    int beta_q;
    bool fc;
    double prior_max;
    double nominal_cwnd;
    double nominal_max;
  };
  const Row rows[] = {{"beta 0.7", 512, 717, false, 0, 70, 100},
                      {"fast convergence", 512, 717, true, 120, 70, 85},
                      {"beta 1", 512, 1024, false, 0, 100, 100},
                      {"alpha 2", 1024, 717, false, 0, 70, 200}};
  // 0.7 is carried as 717/1024, so nominal values are met to within the
  // encoding step; the exact check is against the decoded fraction.
  const double step = 100.0 / 1024.0;
  bool pass = true;
  std::string detail;
  for (const auto& r : rows) {
    const auto p = cubic::decode_params(r.alpha_q, r.beta_q, r.fc, false);
    auto s = cubic::init_state(10);
    s.cwnd = 100;
    s.last_max = r.prior_max;
    const auto out = cubic::on_loss(s, p);
    const double beta = p.beta();
    const double expect_cwnd = 100 * beta;
    const double base = (r.fc && 100 < r.prior_max) ? 100 * (1 + beta) / 2 : 100;
    const double expect_max = base * p.alpha();
    const bool ok = out.cwnd == expect_cwnd && out.last_max == expect_max && out.ssthresh == expect_cwnd &&
                    std::abs(out.cwnd - r.nominal_cwnd) <= step && std::abs(out.last_max - r.nominal_max) <= step;
    pass = pass && ok;
    detail += fmt::format("{}{}: cwnd {:.3f} last_max {:.3f}{}", detail.empty() ? "" : "; ", r.what, out.cwnd,
                          out.last_max, ok ? "" : " MISMATCH");
  }
  return {pass, detail};
}

Verdict figure3() {
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = experiment::run_scenario(presets::figure3(seed));
    const double a = mean_goodput(r.series, FlowId{1}, 80, 120);
    const double b = mean_goodput(r.series, FlowId{2}, 80, 120);
    const bool ok = b >= 8 * a && a < 0.1 * kLinkRate && r.invariant_violations.empty();
    pass = pass && ok;
    detail += fmt::format("s{} A {:.2f} B {:.2f}{}; ", seed, a / 1e6, b / 1e6, ok ? "" : " x");
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 30.0;
  return {pass, detail + fmt::format("Mbps over 80-120 s, need B>=8A and A<1.2; {:.1f} s (<30 s)", elapsed)};
}

Verdict figure5() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = experiment::run_scenario(presets::figure5(seed));
    const double a = mean_goodput(r.series, FlowId{1}, 80, 120);
    const double b = mean_goodput(r.series, FlowId{2}, 80, 120);
    if (a > b) ++wins;
    detail += fmt::format("s{} A {:.2f} B {:.2f}; ", seed, a / 1e6, b / 1e6);
  }
  return {wins >= 4, detail + fmt::format("Mbps, A ahead in {}/5 seeds (need >=4)", wins)};
}

Verdict figure6() {
  const auto r = experiment::run_scenario(presets::figure6(1));
  const double offered = mean_offered(r.series, FlowId{1}, 80, 120) + mean_offered(r.series, FlowId{2}, 80, 120);
  const double a = mean_goodput(r.series, FlowId{1}, 80, 120);
  const double b = mean_goodput(r.series, FlowId{2}, 80, 120);
  // Drops sampled once per second across the window must keep rising.
  bool rising = true;
  std::uint64_t prev = 0;
  bool first = true;
  for (const auto& s : r.series) {
    if (s.t_ms() < 80'000 || s.t_ms() % 1000 != 0) continue;
    if (!first && s.drops_tail <= prev) rising = false;
    prev = s.drops_tail;
    first = false;
  }
  const bool pass = offered > 1.2 * kLinkRate && rising && b > 0 && b < a;
  const bool in_band = b >= 1e6 && b <= 7e6;
  return {pass, fmt::format("offered {:.2f} Mbps (>14.4), drops rising each second {}, A {:.2f} B {:.2f} Mbps (0<B<A); "
                            "loose [1, 7] Mbps band for B {}",
                            offered / 1e6, rising ? "yes" : "no", a / 1e6, b / 1e6,
                            in_band ? "met" : "not met (non-binding)")};
}

Verdict fairness() {
  const auto r = experiment::run_scenario(presets::fairness(1));
  const double a = mean_goodput(r.series, FlowId{1}, 60, 120);
  const double b = mean_goodput(r.series, FlowId{2}, 60, 120);
  const double j = experiment::jain_fairness({a, b});
  return {j >= 0.95, fmt::format("A {:.2f} B {:.2f} Mbps over 60-120 s, Jain {:.3f} (need >=0.95)", a / 1e6, b / 1e6, j)};
}

Verdict transfers() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const double floor = experiment::serialization_floor_s(presets::kTransferBytes, presets::lossy_transfer_link());
  std::vector<double> medians;
  double min_sample = 1e9;
  std::string detail;
  for (int beta : {256, 512, 717, 921, 1024}) {
    const auto sc = presets::transfer(beta);
    const auto times = experiment::transfer_time(sc.link, sc.flows[0].params, sc.flows[0].route,
                                                 presets::kTransferBytes, seeds);
    medians.push_back(experiment::median(times));
    for (double t : times) min_sample = std::min(min_sample, t);
    detail += fmt::format("{}:{:.3f} ", beta, medians.back());
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];
  const double elapsed = seconds_since(start);
  const bool pass = decreasing && min_sample > floor && elapsed < 60.0;
  return {pass, fmt::format("medians s {}(strictly decreasing {}), min sample {:.3f} > floor {:.3f}, {:.1f} s (<60 s)",
                            detail, decreasing ? "yes" : "no", min_sample, floor, elapsed)};
}

Verdict predictor_agreement() {
  bool pass = true;
  std::string detail;
  for (auto [alpha, beta] : {std::pair{512, 717}, std::pair{512, 512}, std::pair{768, 717}}) {
    const auto sc = presets::single_flow(alpha, beta);
    const auto r = experiment::run_scenario(sc);
    const auto sim = experiment::steady_epochs(r.losses[0], 30.0);
    const auto p = predictor::predict(predictor::model_for(sc.flows[0].params, sc.link, sc.duration_s));
    if (!sim || !p.period_s) {
      pass = false;
      detail += fmt::format("({}, {}): no steady sawtooth; ", alpha, beta);
      continue;
    }
    const double dp = std::abs(sim->period_s - *p.period_s) / *p.period_s;
    const double dw = std::abs(sim->peak_cwnd - p.peak_cwnd) / p.peak_cwnd;
    const bool ok = dp <= 0.15 && dw <= 0.10;
    pass = pass && ok;
    detail += fmt::format("a{}/b{}: period sim {:.3f} model {:.3f} ({:.1f}%), peak sim {:.1f} model {:.1f} ({:.1f}%){}; ",
                          alpha, beta, sim->period_s, *p.period_s, 100 * dp, sim->peak_cwnd, p.peak_cwnd, 100 * dw,
                          ok ? "" : " x");
  }
  return {pass, detail + "limits 15% / 10%"};
}

Verdict determinism() {
  std::vector<std::pair<std::string, scenario::Scenario>> cases;
  for (const char* name : {"fig3", "fig5", "fig6", "fairness", "single"}) {
    cases.emplace_back(name, scenario::load_file(std::string(TUNERLAB_SCENARIO_DIR) + "/" + name + ".json"));
  }
  auto lossy = scenario::load_file(std::string(TUNERLAB_SCENARIO_DIR) + "/transfer.json");
  lossy.link.seed = 42;
  lossy.flows[0].bytes_goal.reset();  // keep sending so the loss draws run all the way
  lossy.duration_s = 60;
  cases.emplace_back("lossy", lossy);
  bool pass = true;
  std::string detail;
  for (const auto& [name, sc] : cases) {
    const auto a = csv_of(experiment::run_scenario(sc).series);
    const auto b = csv_of(experiment::run_scenario(sc).series);
    const bool same = a == b;
    pass = pass && same;
    detail += fmt::format("{} {}; ", name, same ? "identical" : "DIFFERENT");
  }
  return {pass, detail + "telemetry CSV compared byte for byte"};
}

// A real WebSocket client drives a realtime-paced service for 60 s.
Verdict live_fuzz() {
  auto sc = presets::figure3(1);
  sc.flows[1].start_s = 5.0;
  sc.duration_s = 60.0;
  service::Service svc(sc, service::ServiceOptions{{"127.0.0.1", 0}, service::Pace::realtime});
  svc.start();
  client::Client c("127.0.0.1", svc.port());
  const auto wall0 = std::chrono::steady_clock::now();

  struct Planned {
    double at_s;
    json msg;
  };
  std::vector<Planned> plan;
  std::mt19937_64 rng(2016);
  std::uniform_int_distribution<int> pick_name(0, 5);
  std::uniform_int_distribution<int> pick_scope(0, 2);
  const char* names[] = {"alpha", "beta", "fast_convergence", "tcp_friendliness", "rto_min_ms", "initcwnd"};
  for (int i = 0; i < 100; ++i) {
    const std::string name = names[pick_name(rng)];
    const auto b = bounds(parse_param_name(name));
    std::uniform_int_distribution<long> value(b.min, b.max);
    const int s = pick_scope(rng);
    plan.push_back({1.0 + 0.39 * i,
                    {{"type", "set_param"},
                     {"scope", s == 0 ? std::string("global") : "flow:" + std::to_string(s)},
                     {"name", name},
                     {"value", value(rng)}}});
  }
  plan.push_back({40.0, {{"type", "set_param"}, {"scope", "global"}, {"name", "beta"}, {"value", 1024}}});

  std::size_t next = 0;
  std::vector<long> applied;
  int errors = 0;
  std::vector<std::int64_t> stamps;
  double first_frame_wall = -1;
  double last_frame_wall = 0;
  bool stop_sent = false;
  bool stop_acked = false;
  for (;;) {
    auto frame = c.read();
    if (!frame) break;
    const auto type = frame->value("type", "");
    if (type == "telemetry") {
      stamps.push_back((*frame)["t_ms"]);
      last_frame_wall = seconds_since(wall0);
      if (first_frame_wall < 0) first_frame_wall = last_frame_wall;
    } else if (type == "ack") {
      if (applied.size() < plan.size()) {
        applied.push_back((*frame)["applied_at_ms"]);
      } else {
        stop_acked = true;
      }
    } else {
      ++errors;
    }
    while (next < plan.size() && seconds_since(wall0) >= plan[next].at_s) c.send(plan[next++].msg);
    if (!stop_sent && next == plan.size() && !stamps.empty() && stamps.back() >= 60'000) {
      c.send({{"type", "stop"}});
      stop_sent = true;
    }
    if (stop_acked) break;
  }
  c.close();
  svc.wait();

  const auto& sim = svc.simulator();
  const auto& series = sim.telemetry();
  const bool invariants = sim.invariant_violations().empty();
  bool ordered = applied.size() == plan.size() && errors == 0;
  for (std::size_t i = 1; i < applied.size(); ++i) ordered = ordered && applied[i] >= applied[i - 1];

  // After the final update, cwnd may only fall across a retransmission timeout.
  const long final_at = applied.empty() ? 0 : applied.back();
  int pairs = 0;
  int rto_pairs = 0;
  int drops = 0;
  std::uint64_t reductions_spanned = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i - 1].t_ms() <= final_at) continue;
    for (const auto& f : series[i].flows) {
      const auto* prev = series[i - 1].find(f.id);
      if (!prev) continue;
      if (f.rto_events != prev->rto_events) {
        ++rto_pairs;
        continue;
      }
      ++pairs;
      reductions_spanned += f.loss_events - prev->loss_events;
      if (f.cwnd_segments < prev->cwnd_segments) ++drops;
    }
  }
  const bool suppressed = pairs > 0 && drops == 0;

  bool contiguous = !stamps.empty();
  for (std::size_t i = 1; i < stamps.size(); ++i) contiguous = contiguous && stamps[i] - stamps[i - 1] == 200;
  const double wall = last_frame_wall - first_frame_wall;
  const double expected = 5.0 * wall;
  const bool rate_ok = std::abs(static_cast<double>(stamps.size() - 1) - expected) <= 1.0 + wall / 10.0;

  const bool pass = svc.finished_run() && invariants && ordered && suppressed && contiguous && rate_ok;
  return {pass, fmt::format("{} updates acked in order {}, invariant violations {}, after final beta=1024 at {} ms: "
                            "{} tick pairs checked, {} cwnd decreases, {} fast-retransmit losses spanned, {} pairs "
                            "skipped for RTO; {} frames over {:.2f} s wall (expected {:.1f} +- {:.1f}), gaps {}",
                            applied.size(), ordered ? "yes" : "no", sim.invariant_violations().size(), final_at,
                            pairs, drops, reductions_spanned, rto_pairs, stamps.size(), wall, expected + 1,
                            1.0 + wall / 10.0, contiguous ? "none" : "present")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string report_path;
  bool strict = false;
  bool skip_live = false;
  app.add_option("--report", report_path, "also write the report to this file");
  app.add_flag("--strict", strict, "exit nonzero if any criterion fails");
  app.add_flag("--skip-live", skip_live, "skip the 60 s realtime criterion");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"cubic math oracle", cubic_oracle},
      {"loss-rule table", loss_table},
      {"aggressive newcomer starves default", figure3},
      {"low-beta newcomer yields", figure5},
      {"two aggressive flows oversubscribe", figure6},
      {"equal-parameter fairness", fairness},
      {"transfer time falls with beta", transfers},
      {"predictor agreement", predictor_agreement},
      {"determinism", determinism},
      {"live-update fuzz", live_fuzz},
  };

  std::ostringstream report;
  int passed = 0;
  int evaluated = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, check] = criteria[i];
    if (skip_live && i + 1 == criteria.size()) {
      const auto line = fmt::format("SKIP {:>2} {}", i + 1, name);
      std::cout << line << std::endl;
      report << line << '\n';
      continue;
    }
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("aborted: ") + e.what()};
    }
    ++evaluated;
    passed += v.pass ? 1 : 0;
    const auto line = fmt::format("{} {:>2} {}: {}", v.pass ? "PASS" : "FAIL", i + 1, name, v.detail);
    std::cout << line << std::endl;
    report << line << '\n';
  }
  const auto total = fmt::format("{} of {} criteria pass", passed, evaluated);
  std::cout << total << std::endl;
  report << total << '\n';
  if (!report_path.empty()) std::ofstream(report_path) << report.str();
  return strict && passed != evaluated ? 1 : 0;
}
