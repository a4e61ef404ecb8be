// Pick a routing for NSFNET under loss and jitter/delay bounds with the
// queueing baseline, then check the pick against the simulator.

#include <cstdio>

#include "routenet/optimizer.hpp"

using namespace routenet;

int main() {
  const Topology topo = topologies::nsfnet();
  const auto candidates = generate_routing_variants(topo, 30, 21, 0.5, 11);
  SimConfig sim;
  sim.duration = 3000;
  sim.seed = 12;

  for (double ti : {8.0, 14.0, 20.0}) {
    const auto tm = generate_traffic_matrix(topo, ti, 13);
    const auto qt = select_routing(topo, candidates, tm, baseline_provider(), {}, default_jobs());
    const auto truth = select_routing(topo, candidates, tm, simulator_provider(sim), {}, default_jobs());
    const auto& picked = truth.scores[qt.decision.chosen];
    const auto& best = truth.scores[truth.decision.chosen];
    std::printf("TI %4.1f  baseline picks %2zu (branch %d): simulated delay %.4f loss %.2e | simulator picks %2zu: "
                "delay %.4f loss %.2e\n",
                ti, qt.decision.chosen, static_cast<int>(qt.decision.branch), picked.mean_delay, picked.mean_loss,
                truth.decision.chosen, best.mean_delay, best.mean_loss);
  }

  const auto tm = generate_traffic_matrix(topo, 14.0, 14);
  const auto plan = plan_link(topo, tm, 10000, {10, 21, 0.5, 15}, baseline_provider(), {}, false, default_jobs());
  std::printf("\nnew 10 kbit link: %s", plan_csv_header().c_str());
  std::printf("                  %s", plan_csv_row(plan.report).c_str());
}
