#pragma once

// Scenario schema, JSON mapping, and presets for the bundled experiments.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tunerlab/cubic.hpp"
#include "tunerlab/error.hpp"
#include "tunerlab/netsim.hpp"
#include "tunerlab/transport.hpp"

namespace tunerlab::scenario {

using nlohmann::json;

struct ScenarioFlow {
  double start_s = 0.0;
  std::string label = "cubic";
  cubic::CubicParams params;
  transport::RouteParams route;
  std::optional<std::uint64_t> bytes_goal;

  netsim::FlowSpec spec() const { return {start_s, params, route, bytes_goal, label}; }
};

struct Scenario {
  netsim::LinkConfig link;
  std::vector<ScenarioFlow> flows;
  double duration_s = 120.0;

  std::uint64_t seed() const noexcept { return link.seed; }
};

inline std::vector<std::string> problems(const Scenario& s) {
  auto out = netsim::link_problems(s.link);
  if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) out.emplace_back("duration_s must be positive");
  if (s.flows.empty()) out.emplace_back("flows must contain at least one flow");
  for (std::size_t i = 0; i < s.flows.size(); ++i) {
    const auto& f = s.flows[i];
    const std::string at = "flows[" + std::to_string(i) + "].";
    if (!(f.start_s >= 0.0 && f.start_s <= s.duration_s)) out.push_back(at + "start_s must lie in [0, duration_s]");
    if (f.params.alpha_q512 < cubic::kParamMin || f.params.alpha_q512 > cubic::kParamMax)
      out.push_back(at + "alpha_q512 must be in [1, 1024]");
    if (f.params.beta_q1024 < cubic::kParamMin || f.params.beta_q1024 > cubic::kParamMax)
      out.push_back(at + "beta_q1024 must be in [1, 1024]");
    try {
      transport::validate(f.route);
    } catch (const RangeError& e) {
      out.push_back(at + e.what());
    }
    if (f.bytes_goal && *f.bytes_goal == 0) out.push_back(at + "bytes_goal must be positive");
  }
  return out;
}

inline void validate(const Scenario& s) {
  auto found = problems(s);
  if (!found.empty()) throw ValidationError(std::move(found));
}

namespace detail {

template <typename T>
T field_or(const json& obj, const char* key, T fallback, std::vector<std::string>& errs, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    errs.push_back(where + key + " has the wrong type");
    return fallback;
  }
}

}  // namespace detail

// Parses one flow object. Absent fields take the supplied defaults, which is
// what lets add_flow omit everything but the interesting knobs.
inline ScenarioFlow flow_from_json(const json& j, const cubic::CubicParams& default_params,
                                   const transport::RouteParams& default_route, std::vector<std::string>& errs,
                                   const std::string& where = "flow.") {
  ScenarioFlow f;
  if (!j.is_object()) {
    errs.push_back(where + " must be an object");
    return f;
  }
  f.start_s = detail::field_or(j, "start_s", 0.0, errs, where);
  f.label = detail::field_or<std::string>(j, "label", "cubic", errs, where);
  f.params = default_params;
  f.params.alpha_q512 = detail::field_or(j, "alpha_q512", default_params.alpha_q512, errs, where);
  f.params.beta_q1024 = detail::field_or(j, "beta_q1024", default_params.beta_q1024, errs, where);
  f.params.fast_convergence = detail::field_or(j, "fast_convergence", default_params.fast_convergence, errs, where);
  f.params.tcp_friendliness = detail::field_or(j, "tcp_friendliness", default_params.tcp_friendliness, errs, where);
  f.route.rto_min_ms = detail::field_or(j, "rto_min_ms", default_route.rto_min_ms, errs, where);
  f.route.initcwnd = detail::field_or(j, "initcwnd", default_route.initcwnd, errs, where);
  if (j.contains("bytes_goal") && !j.at("bytes_goal").is_null()) {
    const auto& goal = j.at("bytes_goal");
    if (goal.is_number_integer() && goal.get<std::int64_t>() >= 0) {
      f.bytes_goal = goal.get<std::uint64_t>();
    } else {
      errs.push_back(where + "bytes_goal must be a non-negative integer or null");
    }
  }
  return f;
}

inline Scenario from_json(const json& j) {
  std::vector<std::string> errs;
  Scenario s;
  if (!j.is_object()) throw ValidationError({"scenario must be a JSON object"});

  if (!j.contains("link") || !j.at("link").is_object()) {
    errs.emplace_back("link is required");
  } else {
    const auto& l = j.at("link");
    for (const char* key : {"rate_mbps", "rtt_ms", "queue_bytes"}) {
      if (!l.contains(key)) errs.push_back(std::string("link.") + key + " is required");
    }
    s.link.rate_bps = detail::field_or(l, "rate_mbps", 12.0, errs, "link.") * 1e6;
    s.link.rtt_ms = detail::field_or(l, "rtt_ms", 80.0, errs, "link.");
    s.link.queue_bytes = detail::field_or<std::uint64_t>(l, "queue_bytes", 120'000, errs, "link.");
    s.link.loss_prob = detail::field_or(l, "loss_prob", 0.0, errs, "link.");
    s.link.seed = detail::field_or<std::uint64_t>(l, "seed", 1, errs, "link.");
  }
  if (!j.contains("duration_s")) errs.emplace_back("duration_s is required");
  s.duration_s = detail::field_or(j, "duration_s", 120.0, errs, "");

  if (!j.contains("flows") || !j.at("flows").is_array()) {
    errs.emplace_back("flows must be an array");
  } else {
    const auto& flows = j.at("flows");
    for (std::size_t i = 0; i < flows.size(); ++i) {
      s.flows.push_back(
          flow_from_json(flows[i], cubic::CubicParams{}, transport::RouteParams{}, errs, "flows[" + std::to_string(i) + "]."));
    }
  }
  for (auto& p : problems(s)) errs.push_back(std::move(p));
  if (!errs.empty()) throw ValidationError(std::move(errs));
  return s;
}

inline json flow_to_json(const ScenarioFlow& f) {
  json j = {{"start_s", f.start_s},
            {"label", f.label},
            {"alpha_q512", f.params.alpha_q512},
            {"beta_q1024", f.params.beta_q1024},
            {"fast_convergence", f.params.fast_convergence},
            {"tcp_friendliness", f.params.tcp_friendliness},
            {"rto_min_ms", f.route.rto_min_ms},
            {"initcwnd", f.route.initcwnd}};
  j["bytes_goal"] = f.bytes_goal ? json(*f.bytes_goal) : json(nullptr);
  return j;
}

inline json to_json(const Scenario& s) {
  json flows = json::array();
  for (const auto& f : s.flows) flows.push_back(flow_to_json(f));
  return {{"link",
           {{"rate_mbps", s.link.rate_bps / 1e6},
            {"rtt_ms", s.link.rtt_ms},
            {"queue_bytes", s.link.queue_bytes},
            {"loss_prob", s.link.loss_prob},
            {"seed", s.link.seed}}},
          {"duration_s", s.duration_s},
          {"flows", flows}};
}

inline Scenario load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("scenario file is not valid JSON: ") + e.what()});
  }
  return from_json(j);
}

namespace presets {

// 12 Mbps uplink, 80 ms RTT, 120000-byte tail-drop queue.
inline netsim::LinkConfig reference_link(std::uint64_t seed = 1) {
  return netsim::LinkConfig{12e6, 80.0, 120'000, 0.0, seed};
}

// 12 Mbps, 50 ms RTT, 1% random loss: the file-transfer setup.
inline netsim::LinkConfig lossy_transfer_link(std::uint64_t seed = 1) {
  return netsim::LinkConfig{12e6, 50.0, 120'000, 0.01, seed};
}

inline constexpr double kSecondFlowStart = 20.0;
inline constexpr double kCompetitionDuration = 120.0;
inline constexpr std::uint64_t kTransferBytes = 1'000'000;

inline ScenarioFlow default_cubic(double start_s = 0.0) {
  ScenarioFlow f;
  f.start_s = start_s;
  f.label = "cubic";
  return f;
}

inline ScenarioFlow tuner(int alpha_q512, int beta_q1024, double start_s = 0.0) {
  ScenarioFlow f;
  f.start_s = start_s;
  f.label = "tuner";
  f.params.alpha_q512 = alpha_q512;
  f.params.beta_q1024 = beta_q1024;
  return f;
}

// Stock CUBIC at t=0 against a tuner flow that joins at 20 s.
inline Scenario cubic_vs_tuner(int alpha_q512, int beta_q1024, std::uint64_t seed = 1) {
  return Scenario{reference_link(seed), {default_cubic(), tuner(alpha_q512, beta_q1024, kSecondFlowStart)},
                  kCompetitionDuration};
}

inline Scenario figure3(std::uint64_t seed = 1) { return cubic_vs_tuner(512, 1024, seed); }
inline Scenario figure5(std::uint64_t seed = 1) { return cubic_vs_tuner(512, 256, seed); }

// Two tuner flows with identical knobs, the second joining at 20 s.
inline Scenario tuner_pair(int beta_q1024, std::uint64_t seed = 1) {
  return Scenario{reference_link(seed), {tuner(512, beta_q1024), tuner(512, beta_q1024, kSecondFlowStart)},
                  kCompetitionDuration};
}

inline Scenario figure6(std::uint64_t seed = 1) { return tuner_pair(1024, seed); }
inline Scenario fairness(std::uint64_t seed = 1) { return tuner_pair(717, seed); }

// One greedy flow with the visualization model's assumptions: both toggles off.
inline Scenario single_flow(int alpha_q512, int beta_q1024, double duration_s = 120.0, std::uint64_t seed = 1) {
  ScenarioFlow f = tuner(alpha_q512, beta_q1024);
  f.params.fast_convergence = false;
  f.params.tcp_friendliness = false;
  return Scenario{reference_link(seed), {f}, duration_s};
}

inline Scenario transfer(int beta_q1024, std::uint64_t seed = 1) {
  ScenarioFlow f = tuner(512, beta_q1024);
  f.bytes_goal = kTransferBytes;
  return Scenario{lossy_transfer_link(seed), {f}, 60.0};
}

}  // namespace presets

}  // namespace tunerlab::scenario
