#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tunerlab/units.hpp"

namespace tunerlab {

inline constexpr SimTime kTelemetryInterval = from_millis(200);

struct FlowSample {
  FlowId id{};
  double cwnd_segments = 0.0;
  double goodput_bps = 0.0;
  std::optional<double> srtt_ms;
  std::uint64_t retx_total = 0;

  // Not part of the CSV; kept so summaries can be rebuilt from the series.
  std::uint64_t delivered_bytes = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t loss_events = 0;
  std::uint64_t rto_events = 0;
  double ssthresh = 0.0;
  bool complete = false;
};

struct TelemetrySample {
  SimTime t{};
  std::vector<FlowSample> flows;
  std::uint64_t queue_bytes = 0;
  std::uint64_t drops_tail = 0;
  std::uint64_t drops_random = 0;

  std::int64_t t_ms() const noexcept { return t.count() / 1000; }
  const FlowSample* find(FlowId id) const noexcept {
    for (const auto& f : flows) {
      if (f.id == id) return &f;
    }
    return nullptr;
  }
};

inline constexpr std::string_view kTelemetryCsvHeader =
    "t_ms,flow_id,cwnd_segments,goodput_bps,srtt_ms,retx_total,queue_bytes";

inline std::string format_csv_row(std::int64_t t_ms, std::string_view flow_id, double cwnd, double goodput,
                                  double srtt_ms, std::uint64_t retx, std::uint64_t queue_bytes) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.*s,%.4f,%.1f,%.3f,%llu,%llu", static_cast<long long>(t_ms),
                static_cast<int>(flow_id.size()), flow_id.data(), cwnd, goodput, srtt_ms,
                static_cast<unsigned long long>(retx), static_cast<unsigned long long>(queue_bytes));
  return buf;
}

inline void write_csv_rows(std::ostream& out, const TelemetrySample& sample) {
  for (const auto& f : sample.flows) {
    out << format_csv_row(sample.t_ms(), std::to_string(to_int(f.id)), f.cwnd_segments, f.goodput_bps,
                          f.srtt_ms.value_or(0.0), f.retx_total, sample.queue_bytes)
        << '\n';
  }
}

inline void write_telemetry_csv(std::ostream& out, const std::vector<TelemetrySample>& samples) {
  out << kTelemetryCsvHeader << '\n';
  for (const auto& s : samples) write_csv_rows(out, s);
}

}  // namespace tunerlab
