// Median time to move 1 MB over a lossy link as beta varies.

#include <cstdio>
#include <vector>

#include "tunerlab/experiment.hpp"

using namespace tunerlab;
namespace presets = tunerlab::scenario::presets;

int main() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  std::printf("beta_q1024  median_s\n");
  for (int beta : {256, 512, 717, 921, 1024}) {
    const auto sc = presets::transfer(beta);
    const auto& f = sc.flows[0];
    const auto times = experiment::transfer_time(sc.link, f.params, f.route, presets::kTransferBytes, seeds);
    std::printf("%10d  %8.3f\n", beta, experiment::median(times));
  }
}
