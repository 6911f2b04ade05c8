// Serve the Figure 3 setup in real time, then retune the second flow over a WebSocket and
// watch its window.

#include <cstdio>

#include <spdlog/spdlog.h>

#include "tunerlab/client.hpp"
#include "tunerlab/service.hpp"

using namespace tunerlab;
namespace presets = tunerlab::scenario::presets;

int main() {
  spdlog::set_level(spdlog::level::warn);
  auto sc = presets::figure3();
  sc.flows[1].start_s = 1.0;
  sc.duration_s = 10.0;
  service::Service svc(sc, service::ServiceOptions{{"127.0.0.1", 0}, service::Pace::realtime});
  svc.start();

  client::Client c("127.0.0.1", svc.port());
  const auto ack = c.request({{"type", "set_param"}, {"scope", "flow:2"}, {"name", "beta"}, {"value", 512}});
  std::printf("beta=512 on flow 2 applied at %lld ms\n", ack["applied_at_ms"].get<long long>());

  for (;;) {
    auto frame = c.read();
    if (!frame) break;
    if ((*frame)["type"] != "telemetry") continue;
    const auto t = (*frame)["t_ms"].get<long long>();
    if (t % 1000 == 0) {
      std::printf("t=%5lld ms", t);
      for (const auto& f : (*frame)["flows"]) {
        std::printf("  flow %d cwnd %6.1f", f["id"].get<int>(), f["cwnd"].get<double>());
      }
      std::printf("\n");
    }
    if (t >= 10'000) break;
  }
  c.request({{"type", "stop"}});
  svc.wait();
}
