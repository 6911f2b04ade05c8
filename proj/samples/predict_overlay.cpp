// Simulated window of one flow next to the model's sawtooth, one row per second.

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "tunerlab/experiment.hpp"
#include "tunerlab/predictor.hpp"

using namespace tunerlab;
namespace presets = tunerlab::scenario::presets;

int main(int argc, char** argv) {
  const int beta = argc > 1 ? std::atoi(argv[1]) : 717;
  const auto sc = presets::single_flow(512, beta, 60.0);
  const auto run = experiment::run_scenario(sc);
  const auto p = predictor::predict(predictor::model_for(sc.flows[0].params, sc.link, sc.duration_s));

  std::printf("w_cap %.1f, model period %.3f s\n", p.w_cap, p.period_s.value_or(0.0));
  std::printf("t_s  sim_cwnd  model_cwnd\n");
  for (const auto& pt : p.series) {
    const auto ms = std::llround(pt.t_s * 1000.0);
    if (ms % 1000 != 0) continue;
    const auto& s = run.series.at(static_cast<std::size_t>(ms / 200));
    std::printf("%3lld  %8.1f  %10.1f\n", ms / 1000, s.flows.at(0).cwnd_segments, pt.cwnd);
  }
}
