#pragma once

// The JSON wire protocol spoken by the live service. Everything here runs on
// the thread that owns the simulator; the network side only moves strings.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tunerlab/error.hpp"
#include "tunerlab/netsim.hpp"
#include "tunerlab/param_update.hpp"
#include "tunerlab/predictor.hpp"
#include "tunerlab/scenario.hpp"
#include "tunerlab/telemetry.hpp"

namespace tunerlab::control {

using nlohmann::json;

inline json error_reply(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

inline json ack_reply(SimTime applied_at) {
  return {{"type", "ack"}, {"applied_at_ms", applied_at.count() / 1000}};
}

inline json params_json(const cubic::CubicParams& params, const transport::RouteParams& route) {
  json out = json::object();
  for (auto name : kAllParams) out[std::string(to_string(name))] = read(name, params, route);
  return out;
}

inline json telemetry_frame(const TelemetrySample& sample) {
  json flows = json::array();
  for (const auto& f : sample.flows) {
    flows.push_back({{"id", to_int(f.id)},
                     {"cwnd", f.cwnd_segments},
                     {"goodput_bps", f.goodput_bps},
                     {"srtt_ms", f.srtt_ms.value_or(0.0)},
                     {"retx", f.retx_total}});
  }
  return {{"type", "telemetry"}, {"t_ms", sample.t_ms()}, {"flows", flows}, {"queue_bytes", sample.queue_bytes}};
}

inline json prediction_frame(const predictor::Prediction& p) {
  json series = json::array();
  for (const auto& pt : p.series) series.push_back(json::array({pt.t_s, pt.cwnd}));
  json out = {{"type", "prediction"}, {"series", series}, {"w_cap", p.w_cap}};
  if (p.period_s) out["period_s"] = *p.period_s;
  if (!p.diagnostics.empty()) out["diagnostics"] = p.diagnostics;
  return out;
}

// Applies client commands to a simulator it does not own the lifetime of.
class CommandProcessor {
public:
  CommandProcessor(netsim::Simulator& sim, double duration_s) : sim_(sim), duration_s_(duration_s) {}

  bool stop_requested() const noexcept { return stopped_; }

  json handle_text(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error&) {
      return error_reply("malformed message: not valid JSON");
    }
    return handle(msg);
  }

  json handle(const json& msg) {
    if (!msg.is_object()) return error_reply("malformed message: expected a JSON object");
    const auto type_it = msg.find("type");
    if (type_it == msg.end() || !type_it->is_string()) return error_reply("malformed message: missing \"type\"");
    const auto type = type_it->get<std::string>();
    try {
      if (type == "set_param") return set_param(msg);
      if (type == "get_params") return get_params();
      if (type == "add_flow") return add_flow(msg);
      if (type == "get_prediction") return get_prediction();
      if (type == "stop") {
        stopped_ = true;
        return ack_reply(sim_.now());
      }
    } catch (const Error& e) {
      return error_reply(e.what());
    }
    return error_reply("unknown message type '" + type + "'");
  }

private:
  json set_param(const json& msg) {
    const auto scope = msg.find("scope");
    const auto name = msg.find("name");
    const auto value = msg.find("value");
    if (scope == msg.end() || !scope->is_string()) return error_reply("set_param needs a string \"scope\"");
    if (name == msg.end() || !name->is_string()) return error_reply("set_param needs a string \"name\"");
    if (value == msg.end() || !value->is_number_integer()) return error_reply("set_param needs an integer \"value\"");
    const auto update =
        make_update(parse_scope(scope->get<std::string>()), name->get<std::string>(), value->get<long>());
    return ack_reply(sim_.apply_param_update(update));
  }

  json get_params() const {
    json flows = json::array();
    for (const auto& e : sim_.flows()) {
      json f = params_json(e.state.params, e.state.route);
      f["id"] = to_int(e.state.id);
      flows.push_back(std::move(f));
    }
    return {{"type", "params"}, {"global", params_json(sim_.global_params(), sim_.global_route())}, {"flows", flows}};
  }

  json add_flow(const json& msg) {
    const auto flow = msg.find("flow");
    if (flow == msg.end() || !flow->is_object()) return error_reply("add_flow needs a \"flow\" object");
    std::vector<std::string> errs;
    auto parsed = scenario::flow_from_json(*flow, sim_.global_params(), sim_.global_route(), errs, "flow.");
    if (!flow->contains("start_s")) parsed.start_s = to_seconds(sim_.now());
    parsed.start_s = std::max(parsed.start_s, to_seconds(sim_.now()));
    cubic::validate(parsed.params);
    transport::validate(parsed.route);
    if (parsed.bytes_goal && *parsed.bytes_goal == 0) errs.emplace_back("flow.bytes_goal must be positive");
    if (!errs.empty()) throw ValidationError(std::move(errs));
    const FlowId id = sim_.add_flow(parsed.spec());
    json reply = ack_reply(sim_.now());
    reply["flow_id"] = to_int(id);
    return reply;
  }

  json get_prediction() const {
    const auto model = predictor::model_for(sim_.global_params(), sim_.link_config(), duration_s_,
                                            sim_.global_route().initcwnd);
    return prediction_frame(predictor::predict(model));
  }

  netsim::Simulator& sim_;
  double duration_s_;
  bool stopped_ = false;
};

}  // namespace tunerlab::control
