#include <chrono>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <spdlog/spdlog.h>

#include "tunerlab/client.hpp"
#include "tunerlab/experiment.hpp"
#include "tunerlab/service.hpp"

using namespace tunerlab;
using namespace std::chrono_literals;
using client::Client;
using nlohmann::json;
namespace presets = tunerlab::scenario::presets;

namespace {

service::ServiceOptions local(service::Pace pace) { return {service::Endpoint{"127.0.0.1", 0}, pace}; }

scenario::Scenario short_fig3(double duration_s) {
  auto sc = presets::figure3(3);
  sc.flows[1].start_s = 2.0;
  sc.duration_s = duration_s;
  return sc;
}

std::string csv_of(const std::vector<TelemetrySample>& series) {
  std::ostringstream out;
  write_telemetry_csv(out, series);
  return out.str();
}

struct Quiet {
  Quiet() { spdlog::set_level(spdlog::level::warn); }
} quiet;

}  // namespace

TEST(ParseListen, Forms) {
  auto ep = service::parse_listen("0.0.0.0:9000");
  EXPECT_EQ(ep.host, "0.0.0.0");
  EXPECT_EQ(ep.port, 9000);
  EXPECT_EQ(service::parse_listen(":81").port, 81);
  EXPECT_EQ(service::parse_listen(":81").host, "127.0.0.1");
  EXPECT_EQ(service::parse_listen("82").port, 82);
  EXPECT_THROW(service::parse_listen("host:port"), RangeError);
  EXPECT_THROW(service::parse_listen("1:70000"), RangeError);
  EXPECT_EQ(service::parse_pace("fast"), service::Pace::fast);
  EXPECT_THROW(service::parse_pace("slow"), RangeError);
}

TEST(Service, BindFailureIsAStartupError) {
  service::Service first(short_fig3(5), local(service::Pace::fast));
  const auto port = first.port();
  EXPECT_THROW(service::Service(short_fig3(5), service::ServiceOptions{{"127.0.0.1", port}, service::Pace::fast}),
               Error);
  EXPECT_THROW(service::Service(short_fig3(5), service::ServiceOptions{{"not-an-address", 0}, service::Pace::fast}),
               Error);
}

TEST(Service, FastPaceMatchesBatchRun) {
  const auto sc = short_fig3(10);
  service::Service svc(sc, local(service::Pace::fast));
  svc.start();
  Client c("127.0.0.1", svc.port());
  std::vector<json> frames;
  while (!svc.finished_run()) std::this_thread::sleep_for(10ms);
  const auto reply = c.request({{"type", "stop"}}, [&](const json& f) { frames.push_back(f); });
  EXPECT_EQ(reply["type"], "ack");
  svc.wait();

  const auto batch = experiment::run_scenario(sc);
  EXPECT_EQ(csv_of(svc.simulator().telemetry()), csv_of(batch.series));
  EXPECT_TRUE(svc.simulator().invariant_violations().empty());

  // Whatever frames reached the client are the batch samples on the wire.
  for (const auto& f : frames) {
    const auto t = f["t_ms"].get<std::int64_t>();
    ASSERT_EQ(t % 200, 0);
    EXPECT_EQ(f, control::telemetry_frame(batch.series.at(static_cast<std::size_t>(t / 200))));
  }
}

TEST(Service, MalformedFrameKeepsConnection) {
  service::Service svc(short_fig3(5), local(service::Pace::fast));
  svc.start();
  Client c("127.0.0.1", svc.port());
  c.send_text("{not json");
  auto reply = c.request({{"type", "get_params"}});
  // The error for the junk frame arrives first, then the snapshot.
  EXPECT_EQ(reply["type"], "error");
  EXPECT_NE(reply["message"].get<std::string>().find("malformed"), std::string::npos);
  for (;;) {
    auto next = c.read();
    ASSERT_TRUE(next.has_value());
    if ((*next)["type"] == "telemetry") continue;
    EXPECT_EQ((*next)["type"], "params");
    EXPECT_EQ((*next)["flows"].size(), 2u);
    break;
  }
  c.request({{"type", "stop"}});
  svc.wait();
}

TEST(Service, LiveUpdatesReachTheSimulator) {
  service::Service svc(short_fig3(30), local(service::Pace::fast));
  svc.start();
  Client c("127.0.0.1", svc.port());
  const auto ack = c.request({{"type", "set_param"}, {"scope", "flow:1"}, {"name", "beta"}, {"value", 512}});
  ASSERT_EQ(ack["type"], "ack") << ack.dump();
  const auto added = c.request({{"type", "add_flow"}, {"flow", {{"beta_q1024", 256}}}});
  ASSERT_EQ(added["type"], "ack") << added.dump();
  EXPECT_EQ(added["flow_id"], 3);
  const auto params = c.request({{"type", "get_params"}});
  EXPECT_EQ(params["flows"][0]["beta"], 512);
  EXPECT_EQ(params["flows"][2]["beta"], 256);
  const auto pred = c.request({{"type", "get_prediction"}});
  EXPECT_EQ(pred["type"], "prediction");
  c.request({{"type", "stop"}});
  svc.wait();
  EXPECT_TRUE(svc.simulator().invariant_violations().empty());
}

TEST(Service, RealtimeTelemetryAtFiveHertz) {
  service::Service svc(short_fig3(30), local(service::Pace::realtime));
  svc.start();
  Client c("127.0.0.1", svc.port());
  const auto begin = std::chrono::steady_clock::now();
  std::vector<std::int64_t> stamps;
  while (std::chrono::steady_clock::now() - begin < 3s) {
    auto f = c.read();
    ASSERT_TRUE(f.has_value());
    if ((*f)["type"] == "telemetry") stamps.push_back((*f)["t_ms"]);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  c.request({{"type", "stop"}});
  svc.wait();
  ASSERT_FALSE(stamps.empty());
  for (std::size_t i = 1; i < stamps.size(); ++i) EXPECT_EQ(stamps[i] - stamps[i - 1], 200);
  EXPECT_NEAR(static_cast<double>(stamps.size()), 5.0 * wall, 1.0 + wall / 10.0);
}

TEST(Service, ExternalStopEndsServe) {
  service::Service svc(short_fig3(60), local(service::Pace::realtime));
  svc.start();
  std::thread stopper([&] {
    std::this_thread::sleep_for(300ms);
    svc.request_stop();
  });
  svc.wait();
  stopper.join();
  EXPECT_FALSE(svc.finished_run());
  EXPECT_LT(svc.simulator().now(), from_seconds(5.0));
}
