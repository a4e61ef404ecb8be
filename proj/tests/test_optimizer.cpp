#include <gtest/gtest.h>

#include "routenet/optimizer.hpp"

using namespace routenet;

namespace {

CandidateScore score(std::size_t i, double delay, double loss, double ratio) {
  CandidateScore s;
  s.index = i;
  s.ok = true;
  s.mean_delay = delay;
  s.mean_loss = loss;
  s.mean_jitter_ratio = ratio;
  return s;
}

// Independent statement of the cascade: rank by (tier, key, index).
std::size_t brute_cascade(const std::vector<CandidateScore>& s, const OptimizationPolicy& p) {
  bool any_loss = false;
  for (const auto& c : s) any_loss |= c.ok && c.mean_loss < p.loss_threshold;
  bool any_both = false;
  for (const auto& c : s)
    any_both |= c.ok && c.mean_loss < p.loss_threshold && c.mean_jitter_ratio < p.jitter_threshold;
  std::vector<std::tuple<double, std::size_t>> pool;
  for (const auto& c : s) {
    if (!c.ok) continue;
    if (!any_loss) pool.emplace_back(c.mean_loss, c.index);
    else if (any_both && c.mean_loss < p.loss_threshold && c.mean_jitter_ratio < p.jitter_threshold)
      pool.emplace_back(c.mean_delay, c.index);
    else if (!any_both && c.mean_loss < p.loss_threshold)
      pool.emplace_back(c.mean_delay, c.index);
  }
  return std::get<1>(*std::min_element(pool.begin(), pool.end()));
}

// Scores straight from raw simulator counters, without the provider layer.
CandidateScore simulated_score(std::size_t i, const Topology& t, const RoutingScheme& r, const TrafficMatrix& tm,
                               const SimConfig& cfg) {
  const auto res = simulate(t, r, tm, cfg);
  double d = 0, l = 0, ratio = 0;
  int n = 0, rn = 0;
  for (const auto& p : tm.active_pairs()) {
    const auto& st = res.pairs.at(p);
    const double mean = st.delivered ? st.sum_delay / st.delivered : 0.0;
    const double var = st.delivered ? st.sum_delay_sq / st.delivered - mean * mean : 0.0;
    d += mean;
    l += st.delivered + st.dropped ? double(st.dropped) / double(st.delivered + st.dropped) : 0.0;
    if (mean > 0) {
      ratio += var / mean;
      ++rn;
    }
    ++n;
  }
  return score(i, d / n, l / n, rn ? ratio / rn : 0.0);
}

}  // namespace

TEST(Cascade, SingleCandidate) {
  const auto d = cascade({score(0, 5, 0.5, 9)}, {});
  EXPECT_EQ(d.chosen, 0u);
  EXPECT_EQ(d.branch, CascadeBranch::kMinLoss);
}

TEST(Cascade, OnlyFeasibleCandidateWins) {
  const auto d = cascade({score(0, 0.1, 0.01, 0.1), score(1, 3.0, 1e-4, 0.1), score(2, 0.2, 1e-4, 0.5)}, {});
  EXPECT_EQ(d.chosen, 1u);
  EXPECT_EQ(d.branch, CascadeBranch::kBothConstraints);
}

TEST(Cascade, MinLossWhenNothingMeetsLossBound) {
  const auto d = cascade({score(0, 0.1, 0.05, 0.1), score(1, 9.0, 0.002, 0.9), score(2, 0.2, 0.01, 0.1)}, {});
  EXPECT_EQ(d.chosen, 1u);
  EXPECT_EQ(d.branch, CascadeBranch::kMinLoss);
}

TEST(Cascade, LossOnlyBranch) {
  const auto d = cascade({score(0, 0.1, 0.05, 0.1), score(1, 2.0, 1e-4, 0.9), score(2, 1.0, 5e-4, 0.3)}, {});
  EXPECT_EQ(d.chosen, 2u);
  EXPECT_EQ(d.branch, CascadeBranch::kLossOnly);
}

TEST(Cascade, TiesGoToLowestIndexAndFailuresAreSkipped) {
  auto bad = score(0, 0.0, 0.0, 0.0);
  bad.ok = false;
  EXPECT_EQ(cascade({bad, score(1, 1, 0, 0), score(2, 1, 0, 0)}, {}).chosen, 1u);
  EXPECT_THROW(cascade({bad}, {}), Error);
  OptimizationPolicy p;
  p.loss_threshold = 0;
  EXPECT_THROW(cascade({score(0, 1, 0, 0)}, p), Error);
}

TEST(Cascade, MatchesBruteForceOnRandomScores) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    SplitMix64 rng(seed);
    std::vector<CandidateScore> s;
    const auto n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i)
      s.push_back(score(i, std::round(rng.uniform(0, 5) * 4) / 4, rng.uniform(0, 0.003), rng.uniform(0, 0.4)));
    EXPECT_EQ(cascade(s, {}).chosen, brute_cascade(s, {})) << "seed " << seed;
  }
}

TEST(SelectRouting, SimulatorChoiceEqualsExhaustiveSearch) {
  const auto t = topologies::toy5();
  const auto cands = generate_routing_variants(t, 20, 12, 0.5, 3);
  SimConfig cfg;
  cfg.duration = 800;
  cfg.seed = 17;
  for (double ti : {6.0, 14.0, 22.0}) {
    const auto tm = generate_traffic_matrix(t, ti, 4);
    const auto trace = select_routing(t, cands, tm, simulator_provider(cfg), {}, 2);
    std::vector<CandidateScore> brute;
    for (std::size_t i = 0; i < cands.size(); ++i) brute.push_back(simulated_score(i, t, cands[i], tm, cfg));
    EXPECT_EQ(trace.decision.chosen, brute_cascade(brute, {})) << "ti " << ti;
    EXPECT_TRUE(replay_matches(trace));
    for (std::size_t i = 0; i < cands.size(); ++i)
      EXPECT_NEAR(trace.scores[i].mean_delay, brute[i].mean_delay, 1e-12);
  }
}

TEST(SelectRouting, ProviderFailureSkipsCandidate) {
  const auto t = topologies::toy5();
  auto cands = generate_routing_variants(t, 3, 6, 0.5, 1);
  cands[0].paths.erase({0, 4});
  const auto tm = generate_traffic_matrix(t, 8, 1);
  const auto trace = select_routing(t, cands, tm, baseline_provider());
  EXPECT_FALSE(trace.scores[0].ok);
  EXPECT_FALSE(trace.scores[0].error.empty());
  EXPECT_NE(trace.decision.chosen, 0u);
  EXPECT_EQ(trace_to_json(trace).at("scores").size(), 3u);
  EXPECT_THROW(select_routing(t, {}, tm, baseline_provider()), Error);
}

TEST(Utilization, HandExamples) {
  const auto tri = Topology::from_undirected("tri", 3, {{0, 1, 10000}, {1, 2, 10000}, {0, 2, 10000}});
  TrafficMatrix u(3);
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < 3; ++d)
      if (s != d) u.set_demand(s, d, 3000);
  EXPECT_NEAR(utilization_variance(tri, shortest_path_routing(tri), u), 0.0, 1e-15);

  const Topology line("line", 3, {Link{0, 0, 1, 10000, 32}, Link{1, 1, 2, 10000, 32}});
  RoutingScheme r;
  r.paths[{0, 1}] = {0};
  r.paths[{1, 2}] = {1};
  TrafficMatrix tm(3);
  tm.set_demand(0, 1, 2000);
  tm.set_demand(1, 2, 8000);
  EXPECT_NEAR(utilization_variance(line, r, tm), 0.09, 1e-15);
}

TEST(Utilization, MatchesIncidenceMatrixOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = topologies::random_ring(7, 4, seed);
    const auto r = generate_routing_variants(t, 2, 10, 0.5, seed).back();
    const auto tm = generate_traffic_matrix(t, 12, seed);
    const auto pairs = tm.active_pairs();
    std::vector<std::vector<double>> a(pairs.size(), std::vector<double>(static_cast<std::size_t>(t.link_count())));
    for (std::size_t i = 0; i < pairs.size(); ++i)
      for (int l : *r.find(pairs[i])) a[i][static_cast<std::size_t>(l)] = 1;
    const auto u = link_utilization(t, r, tm);
    for (int l = 0; l < t.link_count(); ++l) {
      double load = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        load += a[i][static_cast<std::size_t>(l)] * tm.demand(pairs[i].src, pairs[i].dst);
      EXPECT_NEAR(u[static_cast<std::size_t>(l)], load / t.link(l).capacity, 1e-12);
    }
  }
}

TEST(Upgrade, CapacityLadderAndTieBreak) {
  const Topology one("one", 2, {Link{0, 0, 1, 10000, 32}});
  RoutingScheme r;
  r.paths[{0, 1}] = {0};
  TrafficMatrix tm(2);
  tm.set_demand(0, 1, 9000);
  int id = -1;
  const auto up = upgrade_most_loaded(one, r, tm, &id);
  EXPECT_EQ(id, 0);
  EXPECT_EQ(up.link(0).capacity, 40000.0);
  EXPECT_LT(link_utilization(up, r, tm)[0], link_utilization(one, r, tm)[0]);
  EXPECT_EQ(upgraded_capacity(one, 40000), 100000.0);
  EXPECT_EQ(upgraded_capacity(one, 100000), 200000.0);
  EXPECT_EQ(upgraded_capacity(one, 20000), 40000.0);

  const Topology two("two", 3, {Link{0, 0, 1, 10000, 32}, Link{1, 1, 2, 10000, 32}});
  RoutingScheme r2;
  r2.paths[{0, 1}] = {0};
  r2.paths[{1, 2}] = {1};
  TrafficMatrix tm2(3);
  tm2.set_demand(0, 1, 5000);
  tm2.set_demand(1, 2, 5000);
  upgrade_most_loaded(two, r2, tm2, &id);
  EXPECT_EQ(id, 0);
}

TEST(PlanLink, FullyConnectedRejected) {
  const auto tri = Topology::from_undirected("tri", 3, {{0, 1, 10000}, {1, 2, 10000}, {0, 2, 10000}});
  EXPECT_THROW(plan_link(tri, generate_traffic_matrix(tri, 5, 1), 10000, {}, baseline_provider()), Error);
}

TEST(PlanLink, ChoiceEqualsExhaustiveSimulation) {
  const auto t = topologies::toy5();
  const auto tm = generate_traffic_matrix(t, 16, 2);
  SimConfig cfg;
  cfg.duration = 400;
  cfg.seed = 5;
  VariantConfig vc{3, 10, 0.5, 7};
  const auto res = plan_link(t, tm, 10000, vc, simulator_provider(cfg));

  const auto original = generate_routing_variants(t, vc.count, vc.perturbed_links, vc.delta, vc.seed);
  double best = std::numeric_limits<double>::infinity();
  NodePair best_p;
  int placements = 0;
  for (int u = 0; u < 5; ++u)
    for (int v = u + 1; v < 5; ++v) {
      if (t.adjacent(u, v)) continue;
      ++placements;
      const auto aug = t.with_links({Link{0, u, v, 10000, 32}, Link{0, v, u, 10000, 32}});
      const auto cands = augmented_candidates(aug, original, vc);
      for (std::size_t i = 0; i < cands.size(); ++i) {
        const double d = simulated_score(i, aug, cands[i], tm, cfg).mean_delay;
        if (d < best) {
          best = d;
          best_p = {u, v};
        }
      }
    }
  EXPECT_EQ(res.report.placements_evaluated, static_cast<std::size_t>(placements));
  EXPECT_EQ(res.report.placement, best_p);
  EXPECT_NEAR(res.report.new_delay, best, 1e-12);
  // The original routings stay available, so the oracle never gets worse.
  EXPECT_LE(res.report.new_delay, res.report.original_delay);
  EXPECT_EQ(res.topology.link_count(), t.link_count() + 2);
  EXPECT_GE(res.report.upgraded_link, 0);
  EXPECT_NE(plan_csv_row(res.report).find(std::to_string(best_p.src) + "-" + std::to_string(best_p.dst)),
            std::string::npos);
}

TEST(Study, ShapeAndFloors) {
  StudyConfig cfg;
  cfg.topology = topologies::toy5();
  cfg.tis = {8, 20};
  cfg.tms_per_ti = 2;
  cfg.candidates = 4;
  cfg.perturbed_links = 8;
  cfg.delta = 0.5;
  cfg.sim.duration = 300;
  const auto qt = baseline_provider();
  const auto rep = run_routing_study(cfg, &qt);
  ASSERT_EQ(rep.scenarios.size(), 4u);
  for (const auto& sc : rep.scenarios) {
    EXPECT_TRUE(sc.error.empty()) << sc.error;
    EXPECT_EQ(sc.strategies.size(), 4u);
    for (const auto& [name, o] : sc.strategies) EXPECT_GE(o.mean_loss, kLossFloor);
  }
  const auto csv = study_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 4);
  EXPECT_EQ(study_csv(run_routing_study(cfg, &qt)), csv);
}
