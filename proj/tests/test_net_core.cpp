#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <limits>

#include "routenet/net_core.hpp"

using namespace routenet;

namespace {

// Minimum path cost by enumerating every simple path with DFS.
double brute_force_cost(const Topology& topo, const std::vector<double>& w, int src, int dst) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> visited(static_cast<std::size_t>(topo.node_count()), false);
  std::function<void(int, double)> dfs = [&](int u, double cost) {
    if (u == dst) {
      best = std::min(best, cost);
      return;
    }
    visited[static_cast<std::size_t>(u)] = true;
    for (const Link& l : topo.links())
      if (l.src == u && !visited[static_cast<std::size_t>(l.dst)])
        dfs(l.dst, cost + w[static_cast<std::size_t>(l.id)]);
    visited[static_cast<std::size_t>(u)] = false;
  };
  dfs(src, 0.0);
  return best;
}

double path_cost(const std::vector<int>& path, const std::vector<double>& w) {
  double c = 0.0;
  for (int l : path) c += w[static_cast<std::size_t>(l)];
  return c;
}

std::vector<int> node_sequence(const Topology& topo, const std::vector<int>& path) {
  std::vector<int> nodes{topo.link(path.front()).src};
  for (int l : path) nodes.push_back(topo.link(l).dst);
  return nodes;
}

}  // namespace

TEST(Topology, RejectsInvalidConstruction) {
  EXPECT_THROW(Topology("x", 1, {}), Error);
  EXPECT_THROW(Topology("x", 3, {Link{0, 0, 0}}), Error);
  EXPECT_THROW(Topology("x", 3, {Link{0, 0, 3}}), Error);
  EXPECT_THROW(Topology("x", 3, {Link{1, 0, 1}}), Error);
  EXPECT_THROW(Topology("x", 3, {Link{0, 0, 1, -5.0}}), Error);
  EXPECT_THROW(Topology("x", 3, {Link{0, 0, 1, 10000, 0}}), Error);
  EXPECT_NO_THROW(Topology("x", 3, {Link{0, 0, 1, 123.0, 1}}));
}

TEST(Topology, UndirectedEdgesBecomeTwoLinks) {
  const auto t = topologies::toy5();
  EXPECT_EQ(t.link_count(), 12);
  for (int i = 0; i < t.link_count(); i += 2) {
    EXPECT_EQ(t.link(i).src, t.link(i + 1).dst);
    EXPECT_EQ(t.link(i).capacity, t.link(i + 1).capacity);
    EXPECT_EQ(t.link(i).buffer, 32);
  }
  EXPECT_EQ(topologies::nsfnet().link_count(), 42);
  EXPECT_EQ(topologies::nsfnet().node_count(), 14);
}

TEST(TrafficMatrix, EntriesWithinUniformBounds) {
  const auto t = topologies::nsfnet();
  const auto tm = generate_traffic_matrix(t, 13.0, 7, 1.0);
  for (int s = 0; s < 14; ++s)
    for (int d = 0; d < 14; ++d) {
      if (s == d) {
        EXPECT_EQ(tm.demand(s, d), 0.0);
        continue;
      }
      EXPECT_GE(tm.demand(s, d), 0.1);
      EXPECT_LE(tm.demand(s, d), 1.0);
    }
  EXPECT_EQ(tm.ti(), 13.0);
}

TEST(TrafficMatrix, TinyIntensityGivesTinyDemands) {
  const auto tm = generate_traffic_matrix(topologies::toy5(), 1e-12, 3);
  EXPECT_LT(tm.total(), 1e-6);
  EXPECT_THROW(generate_traffic_matrix(topologies::toy5(), 0.0, 3), Error);
  EXPECT_THROW(generate_traffic_matrix(topologies::toy5(), -1.0, 3), Error);
}

TEST(TrafficMatrix, MeanEntryMatchesUniformExpectation) {
  const auto t = topologies::nsfnet();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; count < 100000; ++seed) {
    const auto tm = generate_traffic_matrix(t, 11.0, seed, 1.0);
    for (const auto& p : tm.active_pairs()) {
      sum += tm.demand(p.src, p.dst);
      ++count;
    }
  }
  const double expected = 0.55 * 11.0 / 13.0;
  // U(0.1,1) * 11/13 has std 0.26 * 0.846; the mean of 1e5 draws is within 4 sigma.
  EXPECT_NEAR(sum / static_cast<double>(count), expected, 4 * 0.26 * 0.846 / std::sqrt(1e5));
}

TEST(TrafficMatrix, PureInSeed) {
  const auto t = topologies::toy6();
  EXPECT_EQ(generate_traffic_matrix(t, 5.0, 11), generate_traffic_matrix(t, 5.0, 11));
  EXPECT_FALSE(generate_traffic_matrix(t, 5.0, 11) == generate_traffic_matrix(t, 5.0, 12));
}

TEST(ShortestPath, LineGraph) {
  const auto t = Topology::from_undirected("line", 3, {{0, 1, 10000}, {1, 2, 10000}});
  const auto r = shortest_path_routing(t);
  const auto* p = r.find({0, 2});
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(node_sequence(t, *p), (std::vector<int>{0, 1, 2}));
}

TEST(ShortestPath, TriangleTakesCheaperTwoHopPath) {
  const Topology t("tri", 3, {Link{0, 0, 1}, Link{1, 1, 2}, Link{2, 0, 2}, Link{3, 1, 0}, Link{4, 2, 1},
                              Link{5, 2, 0}});
  const std::vector<double> w = {1, 1, 2.05, 1, 1, 1};
  const auto r = shortest_path_routing(t, w);
  EXPECT_EQ(*r.find({0, 2}), (std::vector<int>{0, 1}));
  const std::vector<double> w2 = {1, 1, 1.95, 1, 1, 1};
  EXPECT_EQ(*shortest_path_routing(t, w2).find({0, 2}), (std::vector<int>{2}));
}

TEST(ShortestPath, TieBreakIsLexicographicNodeSequence) {
  // Square 0-1-3 and 0-2-3 both cost 2.
  const auto t = Topology::from_undirected("sq", 4, {{0, 2, 1}, {2, 3, 1}, {0, 1, 1}, {1, 3, 1}});
  const auto r = shortest_path_routing(t);
  EXPECT_EQ(node_sequence(t, *r.find({0, 3})), (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(node_sequence(t, *r.find({3, 0})), (std::vector<int>{3, 1, 0}));
}

TEST(ShortestPath, UnreachablePairIsNamed) {
  const Topology t("oneway", 3, {Link{0, 0, 1}, Link{1, 1, 2}});
  try {
    shortest_path_routing(t);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("(1,0)"), std::string::npos) << e.what();
  }
}

TEST(ShortestPath, MatchesBruteForceOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SplitMix64 rng(seed);
    const int n = 4 + static_cast<int>(rng.below(5));
    const auto t = topologies::random_ring(n, static_cast<int>(rng.below(6)), seed);
    std::vector<double> w(static_cast<std::size_t>(t.link_count()));
    for (double& x : w) x = 1.0 + static_cast<double>(rng.below(4)) * 0.5;
    const auto r = shortest_path_routing(t, w);
    ASSERT_TRUE(validate_routing(t, r).ok);
    for (int s = 0; s < n; ++s)
      for (int d = 0; d < n; ++d) {
        if (s == d) continue;
        const auto* p = r.find({s, d});
        ASSERT_NE(p, nullptr);
        EXPECT_NEAR(path_cost(*p, w), brute_force_cost(t, w, s, d), 1e-12) << "seed " << seed;
      }
  }
}

TEST(RoutingVariants, BaseAndPerturbed) {
  const auto t = topologies::nsfnet();
  const auto one = generate_routing_variants(t, 1, 21, 0.05, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].paths, shortest_path_routing(t).paths);

  const auto flat = generate_routing_variants(t, 450, 21, 0.0, 1);
  ASSERT_EQ(flat.size(), 450u);
  for (const auto& r : flat) EXPECT_EQ(r.paths, flat[0].paths);

  const auto vars = generate_routing_variants(t, 450, 21, 0.05, 1);
  ASSERT_EQ(vars.size(), 450u);
  std::size_t distinct_from_base = 0;
  for (const auto& r : vars) {
    EXPECT_TRUE(validate_routing(t, r).ok);
    if (r.paths != vars[0].paths) ++distinct_from_base;
  }
  EXPECT_GT(distinct_from_base, 0u);
  EXPECT_EQ(vars[17].paths, generate_routing_variants(t, 450, 21, 0.05, 1)[17].paths);
}

TEST(ValidateRouting, ReportsViolations) {
  const auto t = topologies::toy5();
  auto r = shortest_path_routing(t);
  EXPECT_TRUE(validate_routing(t, r).ok);

  auto broken = r;
  const int a = *t.find_link(0, 1);
  const int b = *t.find_link(2, 4);
  broken.paths[{0, 4}] = {a, b};
  const auto rep = validate_routing(t, broken);
  EXPECT_FALSE(rep.ok);
  ASSERT_TRUE(rep.pair.has_value());
  EXPECT_EQ(*rep.pair, (NodePair{0, 4}));
  EXPECT_NE(rep.message.find("non-adjacent"), std::string::npos);

  auto missing = r;
  missing.paths.erase({3, 0});
  const auto tm = generate_traffic_matrix(t, 5.0, 1);
  const auto rep2 = validate_routing(t, missing, &tm);
  EXPECT_FALSE(rep2.ok);
  EXPECT_EQ(*rep2.pair, (NodePair{3, 0}));

  auto repeated = r;
  const int c = *t.find_link(1, 0);
  repeated.paths[{0, 1}] = {a, c, a};
  EXPECT_FALSE(validate_routing(t, repeated).ok);
}

TEST(Topology, DerivedCopies) {
  const auto t = topologies::toy5();
  const double before = t.link(4).capacity;
  const auto up = t.with_capacity(4, 100000);
  EXPECT_EQ(up.link(4).capacity, 100000);
  EXPECT_EQ(t.link(4).capacity, before);
  EXPECT_FALSE(t.adjacent(0, 4));
  const auto more = t.with_links({Link{t.link_count(), 0, 4, 10000, 32}, Link{t.link_count() + 1, 4, 0, 10000, 32}});
  EXPECT_TRUE(more.adjacent(0, 4));
  EXPECT_EQ(more.link_count(), t.link_count() + 2);
}
