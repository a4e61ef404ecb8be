#include <gtest/gtest.h>

#include "routenet/queueing.hpp"
#include "routenet/simulator.hpp"

using namespace routenet;

namespace {

Topology single_link(double capacity, int buffer = 32) {
  return Topology("single", 2, {Link{0, 0, 1, capacity, buffer}});
}

RoutingScheme single_route() {
  RoutingScheme r;
  r.paths[{0, 1}] = {0};
  return r;
}

TrafficMatrix single_demand(double bw) {
  TrafficMatrix tm(2);
  tm.set_demand(0, 1, bw);
  return tm;
}

}  // namespace

TEST(Summarize, HandExamples) {
  PairStats s{2, 0, 4.0, 10.0, std::log(3.0)};
  const auto d = summarize(s);
  EXPECT_DOUBLE_EQ(d.mean_delay, 2.0);
  EXPECT_DOUBLE_EQ(d.delay_variance, 1.0);
  EXPECT_FALSE(d.no_packets);

  const auto z = summarize(PairStats{});
  EXPECT_TRUE(z.no_packets);
  EXPECT_EQ(z.mean_delay, 0.0);
  EXPECT_EQ(z.loss_ratio, 0.0);

  PairStats l{4, 1, 4.0, 4.0, 0.0};
  EXPECT_DOUBLE_EQ(summarize(l).loss_ratio, 0.2);
}

TEST(Simulate, ZeroTrafficGivesZeroStats) {
  const auto t = topologies::toy5();
  const auto res = simulate(t, shortest_path_routing(t), TrafficMatrix(5), SimConfig{});
  EXPECT_TRUE(res.pairs.empty());
  for (const auto& l : res.links) EXPECT_EQ(l.arrivals, 0u);
}

TEST(Simulate, MissingPathFailsBeforeRunning) {
  const auto t = topologies::toy5();
  auto r = shortest_path_routing(t);
  r.paths.erase({0, 4});
  const auto tm = generate_traffic_matrix(t, 5.0, 1);
  try {
    simulate(t, r, tm, SimConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchema);
    EXPECT_NE(std::string(e.what()).find("(0,4)"), std::string::npos);
  }
}

TEST(Simulate, MeanDelayMatchesPollaczekKhinchineAtHalfLoad) {
  // Two-point sizes are not exponential: the M/G/1 mean sojourn is
  // E[S] + lambda E[S^2] / (2 (1 - rho)). Blocking at rho 0.5, b 32 is ~1e-10.
  SimConfig cfg;
  cfg.duration = 160000;
  cfg.seed = 3;
  const auto res = simulate(single_link(10000), single_route(), single_demand(5000), cfg);
  const auto d = summarize(res.pairs.at({0, 1}));
  const double lambda = 5.0;
  const double es = 0.1;
  const double es2 = 0.5 * (0.03 * 0.03 + 0.17 * 0.17);
  const double pk = es + lambda * es2 / (2 * (1 - 0.5));
  EXPECT_NEAR(d.mean_delay, pk, 0.03 * pk);
  // The exponential-service closed form overstates the mean by ~15% here.
  const auto mm1b = link_mm1b_stats(0.5, 10.0, 32);
  EXPECT_GT(mm1b.mean_delay, 1.1 * pk);
}

TEST(Simulate, SaturatedLinkLosesAboutHalf) {
  SimConfig cfg;
  cfg.duration = 40000;
  const auto res = simulate(single_link(10000), single_route(), single_demand(20000), cfg);
  const auto d = summarize(res.pairs.at({0, 1}));
  EXPECT_NEAR(d.loss_ratio, 0.5, 0.03);
}

TEST(Simulate, ConservationAndDeterminism) {
  const auto t = topologies::toy6();
  const auto r = shortest_path_routing(t);
  const auto tm = generate_traffic_matrix(t, 18.0, 5);
  SimConfig cfg;
  cfg.duration = 4000;
  cfg.seed = 9;
  const auto a = simulate(t, r, tm, cfg);
  const auto b = simulate(t, r, tm, cfg);
  EXPECT_EQ(a.pairs, b.pairs);
  std::uint64_t drops = 0;
  for (const auto& l : a.links) {
    EXPECT_EQ(l.arrivals, l.departures + l.drops + l.in_system_at_end);
    EXPECT_LE(l.in_system_at_end, 32u);
    drops += l.drops;
  }
  EXPECT_GT(drops, 0u) << "instance chosen to overload some link";
  cfg.seed = 10;
  EXPECT_NE(simulate(t, r, tm, cfg).pairs, a.pairs);
}

TEST(Simulate, DelaysRespectTransmissionFloor) {
  const auto t = topologies::toy8();
  const auto r = shortest_path_routing(t);
  const auto tm = generate_traffic_matrix(t, 10.0, 2);
  SimConfig cfg;
  cfg.duration = 3000;
  const auto res = simulate(t, r, tm, cfg);
  for (const auto& [pair, s] : res.pairs) {
    if (s.delivered == 0) continue;
    double floor = 0.0;
    for (int lid : *r.find(pair)) floor += 300.0 / t.link(lid).capacity;
    // Mean of values each >= floor is >= floor; Cauchy-Schwarz on the sums.
    EXPECT_GE(s.sum_delay / static_cast<double>(s.delivered), floor * (1 - 1e-12));
    EXPECT_GE(s.sum_delay_sq * static_cast<double>(s.delivered), s.sum_delay * s.sum_delay * (1 - 1e-12));
  }
}

TEST(Simulate, HugeBufferNeverDrops) {
  const auto t = Topology::from_undirected("ring", 4, {{0, 1, 10000}, {1, 2, 10000}, {2, 3, 10000}, {3, 0, 10000}},
                                           1000000);
  const auto r = shortest_path_routing(t);
  const auto tm = generate_traffic_matrix(t, 6.0, 4);
  SimConfig cfg;
  cfg.duration = 5000;
  const auto res = simulate(t, r, tm, cfg);
  for (const auto& l : res.links) EXPECT_EQ(l.drops, 0u);
}

TEST(Simulate, ExponentialModeMatchesMM1BWithinFivePercent) {
  SimConfig cfg;
  cfg.duration = 160000;
  cfg.packet_sizes = PacketSizeModel::kExponential;
  for (double rho : {0.3, 0.5, 0.7}) {
    cfg.seed = 100 + static_cast<std::uint64_t>(rho * 10);
    const auto res = simulate(single_link(10000), single_route(), single_demand(rho * 10000), cfg);
    const auto d = summarize(res.pairs.at({0, 1}));
    const auto oracle = link_mm1b_stats(rho, 10.0, 32);
    EXPECT_NEAR(d.mean_delay, oracle.mean_delay, 0.05 * oracle.mean_delay) << "rho " << rho;
  }
}

TEST(Simulate, BufferExcludingServiceAllowsOneMore) {
  SimConfig cfg;
  cfg.duration = 2000;
  cfg.buffer_includes_in_service = false;
  const auto res = simulate(single_link(10000, 2), single_route(), single_demand(40000), cfg);
  EXPECT_LE(res.links[0].in_system_at_end, 3u);
  EXPECT_GT(res.links[0].drops, 0u);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.duration = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.duration = 10;
  cfg.warmup_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}
