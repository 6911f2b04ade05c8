// Command-line front end: batch runs, beta sweeps, predictor traces and the
// live service.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tunerlab/experiment.hpp"
#include "tunerlab/predictor.hpp"
#include "tunerlab/scenario.hpp"
#include "tunerlab/service.hpp"

namespace fs = std::filesystem;
using namespace tunerlab;

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("tunerlab");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("TUNERLAB_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("TUNERLAB_LOG='{}' not recognised; using info", level);
  }
}

fs::path prepare_out(const std::string& dir) {
  const fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  return f;
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
            std::optional<double> duration) {
  auto sc = scenario::load_file(scenario_path);
  if (seed) sc.link.seed = *seed;
  if (duration) sc.duration_s = *duration;
  const auto out = prepare_out(out_dir);
  spdlog::info("running {} flow(s) for {} s, seed {}", sc.flows.size(), sc.duration_s, sc.seed());
  const auto result = experiment::run_scenario(sc);
  {
    auto csv = open_out(out / "telemetry.csv");
    write_telemetry_csv(csv, result.series);
  }
  {
    auto js = open_out(out / "summary.json");
    js << experiment::summary_json(result).dump(2) << '\n';
  }
  for (const auto& v : result.invariant_violations) spdlog::error("invariant violated: {}", v);
  for (const auto& f : result.flows) {
    spdlog::info("flow {} ({}): goodput {:.2f} Mbps, offered {:.2f} Mbps, {} retransmits", to_int(f.id), f.label,
                 f.mean_goodput_bps / 1e6, f.mean_offered_bps / 1e6, f.retransmits);
  }
  return result.invariant_violations.empty() ? 0 : 1;
}

int cmd_sweep(const std::string& scenario_path, const std::string& param, const std::vector<long>& values,
              unsigned seeds, const std::string& out_dir) {
  const auto sc = scenario::load_file(scenario_path);
  const auto& flow = sc.flows.front();
  if (!flow.bytes_goal) throw ValidationError({"sweep needs a scenario whose first flow sets bytes_goal"});
  const auto name = parse_param_name(param);
  if (name != ParamName::alpha && name != ParamName::beta) {
    throw RangeError("param", "sweep supports 'alpha' or 'beta', got '" + param + "'");
  }
  std::vector<std::uint64_t> seed_list;
  for (unsigned i = 0; i < seeds; ++i) seed_list.push_back(sc.seed() + i);

  const auto out = prepare_out(out_dir);
  auto csv = open_out(out / "sweep.csv");
  const std::string column = name == ParamName::beta ? "beta_q1024" : "alpha_q512";
  csv << column << ",seed,transfer_s\n";
  for (long value : values) {
    auto params = flow.params;
    auto route = flow.route;
    apply(make_update(ParamScope{}, param, value), params, route);
    const auto times = experiment::transfer_time(sc.link, params, route, *flow.bytes_goal, seed_list);
    for (std::size_t i = 0; i < times.size(); ++i) csv << value << ',' << seed_list[i] << ',' << times[i] << '\n';
    spdlog::info("{}={}: median transfer {:.3f} s over {} seeds", column, value, experiment::median(times),
                 times.size());
  }
  return 0;
}

int cmd_predict(const std::string& scenario_path, const std::string& out_dir) {
  const auto sc = scenario::load_file(scenario_path);
  const auto& flow = sc.flows.front();
  const auto p = predictor::predict(predictor::model_for(flow.params, sc.link, sc.duration_s, flow.route.initcwnd));
  const auto out = prepare_out(out_dir);
  auto csv = open_out(out / "prediction.csv");
  predictor::write_prediction_csv(csv, p);
  for (const auto& d : p.diagnostics) spdlog::warn("{}", d);
  if (p.period_s) {
    spdlog::info("W_cap {:.1f} segments, epoch period {:.3f} s", p.w_cap, *p.period_s);
  } else {
    spdlog::info("W_cap {:.1f} segments, no periodic sawtooth", p.w_cap);
  }
  return 0;
}

int cmd_serve(const std::string& scenario_path, const std::string& listen, const std::string& pace) {
  auto sc = scenario::load_file(scenario_path);
  service::ServiceOptions options{service::parse_listen(listen), service::parse_pace(pace)};

  // Signals are taken synchronously by one thread so the stop path stays ordinary code.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Service svc(std::move(sc), options);
  svc.start();
  std::cout << "listening on " << options.listen.host << ':' << svc.port() << std::endl;
  std::thread([&svc, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received; stopping", sig);
    svc.request_stop();
  }).detach();
  svc.wait();
  return svc.simulator().invariant_violations().empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"tunerlab: tunable CUBIC on a simulated bottleneck"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "run one scenario and write telemetry.csv and summary.json");
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seed", seed, "override the link seed");
  run->add_option("--duration", duration, "override the run length in seconds")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "transfer-time sweep over one parameter");
  std::string param = "beta";
  std::vector<long> values;
  unsigned seeds = 20;
  sweep->add_option("--scenario", scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", param, "parameter to sweep (alpha or beta)");
  sweep->add_option("--values", values, "comma-separated fixed-point values")->required()->delimiter(',');
  sweep->add_option("--seeds", seeds, "seeds per value")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "write the predicted cwnd trace for the first flow");
  predict->add_option("--scenario", scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out_dir, "output directory")->required();

  auto* serve = app.add_subcommand("serve", "run a scenario as a live WebSocket service");
  std::string listen = "127.0.0.1:8080";
  std::string pace = "realtime";
  serve->add_option("--scenario", scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", listen, "host:port to bind");
  serve->add_option("--pace", pace, "realtime or fast")->check(CLI::IsMember({"realtime", "fast"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_path, out_dir, seed, duration);
    if (*sweep) return cmd_sweep(scenario_path, param, values, seeds, out_dir);
    if (*predict) return cmd_predict(scenario_path, out_dir);
    if (*serve) return cmd_serve(scenario_path, listen, pace);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}
