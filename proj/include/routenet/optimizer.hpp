#pragma once

// QoS-aware routing selection and single-link placement on top of any KPI
// provider: trained model heads, the queueing baseline, or the simulator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "routenet/io.hpp"
#include "routenet/model.hpp"
#include "routenet/net_core.hpp"
#include "routenet/parallel.hpp"
#include "routenet/queueing.hpp"
#include "routenet/simulator.hpp"

namespace routenet {

enum class ProviderKind { kModel, kBaseline, kSimulator };

inline std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::kModel: return "model";
    case ProviderKind::kBaseline: return "baseline";
    case ProviderKind::kSimulator: return "simulator";
  }
  return "?";
}

using PairKpis = std::map<NodePair, PathKpi>;

/// (topology, routing, tm) -> per-pair delay, jitter (variance) and loss
/// ratio for every pair with demand.
struct KpiProvider {
  ProviderKind kind = ProviderKind::kBaseline;
  std::function<PairKpis(const Topology&, const RoutingScheme&, const TrafficMatrix&)> evaluate;
};

inline KpiProvider model_provider(const ModelParams& delay, const ModelParams& drops) {
  return {ProviderKind::kModel, [&delay, &drops](const Topology& t, const RoutingScheme& r, const TrafficMatrix& tm) {
            const ScenarioGraph g = build_graph(t, r, tm);
            const auto k = predict_kpis(&delay, &drops, g);
            PairKpis out;
            for (std::size_t i = 0; i < g.path_count(); ++i) out[g.pairs[i]] = k[i];
            return out;
          }};
}

inline KpiProvider baseline_provider(FixedPointOptions opt = {}) {
  return {ProviderKind::kBaseline, [opt](const Topology& t, const RoutingScheme& r, const TrafficMatrix& tm) {
            const auto sol = solve_fixed_point(t, r, tm, opt);
            PairKpis out;
            for (const NodePair& p : tm.active_pairs()) {
              const QtPath& q = sol.paths.at(p);
              out[p] = {q.mean_delay, q.delay_variance, q.loss_ratio};
            }
            return out;
          }};
}

/// Every candidate is simulated with the same seed (common random numbers),
/// so differences between candidates are not sampling noise. A pair whose
/// packets were all dropped reports delay 0 and loss ratio 1.
inline KpiProvider simulator_provider(SimConfig cfg) {
  return {ProviderKind::kSimulator, [cfg](const Topology& t, const RoutingScheme& r, const TrafficMatrix& tm) {
            const auto res = simulate(t, r, tm, cfg);
            PairKpis out;
            for (const NodePair& p : tm.active_pairs()) {
              const auto it = res.pairs.find(p);
              const auto d = it == res.pairs.end() ? DelaySummary{} : summarize(it->second);
              out[p] = {d.mean_delay, d.delay_variance, d.loss_ratio};
            }
            return out;
          }};
}

struct OptimizationPolicy {
  double loss_threshold = 1e-3;
  double jitter_threshold = 0.2;  // bound on mean(jitter / delay)

  void validate() const {
    require(loss_threshold > 0.0, "loss threshold must be positive");
    require(jitter_threshold > 0.0, "jitter threshold must be positive");
  }
};

struct CandidateScore {
  std::size_t index = 0;
  bool ok = false;
  std::string error;
  double mean_delay = 0.0;
  double mean_loss = 0.0;
  double mean_jitter_ratio = 0.0;
};

/// Means over pairs with demand. The jitter ratio skips pairs with zero delay.
inline CandidateScore score_kpis(std::size_t index, const PairKpis& k) {
  CandidateScore s;
  s.index = index;
  s.ok = true;
  std::size_t ratio_n = 0;
  for (const auto& [p, v] : k) {
    s.mean_delay += v.delay;
    s.mean_loss += v.loss_ratio;
    if (v.delay > 0.0) {
      s.mean_jitter_ratio += v.jitter / v.delay;
      ++ratio_n;
    }
  }
  if (!k.empty()) {
    s.mean_delay /= static_cast<double>(k.size());
    s.mean_loss /= static_cast<double>(k.size());
  }
  if (ratio_n) s.mean_jitter_ratio /= static_cast<double>(ratio_n);
  return s;
}

/// Branch 1: loss and jitter feasible, min delay. Branch 2: nothing meets the
/// loss bound, min loss. Branch 3: loss feasible but none also meets the jitter
/// bound, min delay among the loss-feasible ones.
enum class CascadeBranch { kBothConstraints = 1, kMinLoss = 2, kLossOnly = 3 };

struct Decision {
  CascadeBranch branch = CascadeBranch::kBothConstraints;
  std::size_t chosen = 0;  // candidate index
};

/// Pure function of the scores; ties go to the lowest candidate index.
inline Decision cascade(const std::vector<CandidateScore>& scores, const OptimizationPolicy& policy) {
  policy.validate();
  std::vector<const CandidateScore*> live, loss_ok, both;
  for (const auto& s : scores)
    if (s.ok) live.push_back(&s);
  require(!live.empty(), "no candidate could be evaluated", ErrorKind::kRuntime);
  for (const auto* s : live)
    if (s->mean_loss < policy.loss_threshold) loss_ok.push_back(s);
  for (const auto* s : loss_ok)
    if (s->mean_jitter_ratio < policy.jitter_threshold) both.push_back(s);
  auto argmin = [](const std::vector<const CandidateScore*>& v, double CandidateScore::*key) {
    const CandidateScore* best = v.front();
    for (const auto* s : v)
      if (s->*key < best->*key || (s->*key == best->*key && s->index < best->index)) best = s;
    return best->index;
  };
  if (loss_ok.empty()) return {CascadeBranch::kMinLoss, argmin(live, &CandidateScore::mean_loss)};
  if (!both.empty()) return {CascadeBranch::kBothConstraints, argmin(both, &CandidateScore::mean_delay)};
  return {CascadeBranch::kLossOnly, argmin(loss_ok, &CandidateScore::mean_delay)};
}

struct SelectionTrace {
  ProviderKind provider = ProviderKind::kBaseline;
  OptimizationPolicy policy;
  std::vector<CandidateScore> scores;
  Decision decision;
};

/// Candidate evaluations run in parallel; a provider failure marks that
/// candidate as skipped.
inline std::vector<CandidateScore> score_candidates(const Topology& topo, const std::vector<RoutingScheme>& candidates,
                                                    const TrafficMatrix& tm, const KpiProvider& provider,
                                                    int jobs = 1) {
  std::vector<CandidateScore> scores(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    try {
      scores[i] = score_kpis(i, provider.evaluate(topo, candidates[i], tm));
    } catch (const std::exception& e) {
      scores[i].index = i;
      scores[i].ok = false;
      scores[i].error = e.what();
    }
  });
  return scores;
}

inline SelectionTrace select_routing(const Topology& topo, const std::vector<RoutingScheme>& candidates,
                                     const TrafficMatrix& tm, const KpiProvider& provider,
                                     const OptimizationPolicy& policy = {}, int jobs = 1) {
  require(!candidates.empty(), "select_routing needs at least one candidate");
  SelectionTrace t;
  t.provider = provider.kind;
  t.policy = policy;
  t.scores = score_candidates(topo, candidates, tm, provider, jobs);
  t.decision = cascade(t.scores, policy);
  return t;
}

/// Re-running the cascade on the recorded scores must give the recorded choice.
inline bool replay_matches(const SelectionTrace& t) {
  const Decision d = cascade(t.scores, t.policy);
  return d.chosen == t.decision.chosen && d.branch == t.decision.branch;
}

inline Json trace_to_json(const SelectionTrace& t) {
  Json scores = Json::array();
  for (const auto& s : t.scores) {
    Json j = {{"index", s.index}, {"ok", s.ok}};
    if (s.ok) {
      j["mean_delay"] = s.mean_delay;
      j["mean_loss"] = s.mean_loss;
      j["mean_jitter_ratio"] = s.mean_jitter_ratio;
    } else {
      j["error"] = s.error;
    }
    scores.push_back(j);
  }
  return {{"provider", to_string(t.provider)},
          {"loss_threshold", t.policy.loss_threshold},
          {"jitter_threshold", t.policy.jitter_threshold},
          {"branch", static_cast<int>(t.decision.branch)},
          {"chosen", t.decision.chosen},
          {"scores", scores}};
}

// ---------------------------------------------------------------------------
// Fluid utilization.

/// Offered load over capacity per link, ignoring losses.
inline std::vector<double> link_utilization(const Topology& topo, const RoutingScheme& routing,
                                            const TrafficMatrix& tm) {
  std::vector<double> load(static_cast<std::size_t>(topo.link_count()), 0.0);
  for (const NodePair& p : tm.active_pairs()) {
    const auto* path = routing.find(p);
    require(path != nullptr, "pair " + to_string(p) + " has demand but no path", ErrorKind::kSchema);
    for (int l : *path) load.at(static_cast<std::size_t>(l)) += tm.demand(p.src, p.dst);
  }
  for (std::size_t l = 0; l < load.size(); ++l) load[l] /= topo.link(static_cast<int>(l)).capacity;
  return load;
}

/// Population variance of link utilizations; lower is more balanced.
inline double utilization_variance(const Topology& topo, const RoutingScheme& routing, const TrafficMatrix& tm) {
  const auto u = link_utilization(topo, routing, tm);
  if (u.empty()) return 0.0;
  double m = 0;
  for (double x : u) m += x;
  m /= static_cast<double>(u.size());
  double v = 0;
  for (double x : u) v += (x - m) * (x - m);
  return v / static_cast<double>(u.size());
}

inline std::size_t select_by_utilization(const Topology& topo, const std::vector<RoutingScheme>& candidates,
                                         const TrafficMatrix& tm) {
  require(!candidates.empty(), "need at least one candidate");
  std::size_t best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = utilization_variance(topo, candidates[i], tm);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Routing study.

inline constexpr double kLossFloor = 1e-7;

struct StudyConfig {
  Topology topology;
  std::vector<double> tis;
  int tms_per_ti = 10;
  int candidates = 40;
  int perturbed_links = 21;
  double delta = 0.05;
  SimConfig sim;  // seed overridden per scenario
  OptimizationPolicy policy;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Ground-truth (simulated) outcome of one routing choice.
struct Outcome {
  std::size_t chosen = 0;  // candidate index; unused for "sp-average"
  double mean_delay = 0.0;
  double mean_loss = 0.0;
  double mean_jitter_ratio = 0.0;
  bool loss_ok = false;
};

struct ScenarioResult {
  double ti = 0.0;
  int tm_index = 0;
  std::map<std::string, Outcome> strategies;  // sp-average, utilization, routenet, optimal
  std::string error;
};

struct StudyReport {
  std::vector<ScenarioResult> scenarios;

  /// Mean over successful scenarios of a strategy's mean delay.
  [[nodiscard]] double mean_delay(const std::string& strategy) const {
    double s = 0;
    int n = 0;
    for (const auto& sc : scenarios)
      if (sc.error.empty() && sc.strategies.count(strategy)) {
        s += sc.strategies.at(strategy).mean_delay;
        ++n;
      }
    return n ? s / n : 0.0;
  }

  /// Fraction of successful scenarios whose outcome met the loss bound.
  [[nodiscard]] double loss_satisfaction(const std::string& strategy) const {
    int ok = 0, n = 0;
    for (const auto& sc : scenarios)
      if (sc.error.empty() && sc.strategies.count(strategy)) {
        ok += sc.strategies.at(strategy).loss_ok;
        ++n;
      }
    return n ? static_cast<double>(ok) / n : 0.0;
  }
};

/// For each (TI, TM): every candidate is simulated once with the scenario
/// seed. The optimal choice is the cascade on those simulated scores, the
/// model choice is the cascade on predicted scores, and the utilization
/// choice is the minimum-variance candidate; each chosen routing's outcome is
/// read from its simulation. "sp-average" averages the outcomes of all
/// candidates.
inline StudyReport run_routing_study(const StudyConfig& cfg, const KpiProvider* model) {
  require(!cfg.tis.empty(), "need at least one traffic intensity");
  require(cfg.tms_per_ti >= 1 && cfg.candidates >= 1, "tms_per_ti and candidates must be >= 1");
  cfg.policy.validate();
  const auto candidates =
      generate_routing_variants(cfg.topology, cfg.candidates, cfg.perturbed_links, cfg.delta,
                                SplitMix64::derive_seed(cfg.seed, 0x5354));
  StudyReport rep;
  for (std::size_t t = 0; t < cfg.tis.size(); ++t)
    for (int k = 0; k < cfg.tms_per_ti; ++k) {
      const std::size_t idx = t * static_cast<std::size_t>(cfg.tms_per_ti) + static_cast<std::size_t>(k);
      ScenarioResult sc;
      sc.ti = cfg.tis[t];
      sc.tm_index = k;
      try {
        const std::uint64_t sseed = SplitMix64::derive_seed(cfg.seed, idx);
        const auto tm = generate_traffic_matrix(cfg.topology, cfg.tis[t], sseed);
        SimConfig sim = cfg.sim;
        sim.seed = SplitMix64::derive_seed(sseed, 1);
        const auto truth = score_candidates(cfg.topology, candidates, tm, simulator_provider(sim), cfg.jobs);
        auto outcome = [&](std::size_t i) {
          const auto& s = truth.at(i);
          require(s.ok, "simulation of candidate " + std::to_string(i) + " failed: " + s.error, ErrorKind::kRuntime);
          return Outcome{i, s.mean_delay, std::max(s.mean_loss, kLossFloor), s.mean_jitter_ratio,
                         s.mean_loss < cfg.policy.loss_threshold};
        };
        Outcome avg;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          const auto o = outcome(i);
          avg.mean_delay += o.mean_delay;
          avg.mean_loss += o.mean_loss;
          avg.mean_jitter_ratio += o.mean_jitter_ratio;
        }
        const double n = static_cast<double>(candidates.size());
        avg.mean_delay /= n;
        avg.mean_loss /= n;
        avg.mean_jitter_ratio /= n;
        avg.loss_ok = avg.mean_loss < cfg.policy.loss_threshold;
        sc.strategies["sp-average"] = avg;
        sc.strategies["utilization"] = outcome(select_by_utilization(cfg.topology, candidates, tm));
        sc.strategies["optimal"] = outcome(cascade(truth, cfg.policy).chosen);
        if (model)
          sc.strategies["routenet"] =
              outcome(select_routing(cfg.topology, candidates, tm, *model, cfg.policy, cfg.jobs).decision.chosen);
      } catch (const std::exception& e) {
        sc.error = e.what();
      }
      rep.scenarios.push_back(std::move(sc));
    }
  return rep;
}

/// Long-format rows for boxplots: ti,tm,strategy,mean_delay,mean_loss,jitter_ratio,loss_ok.
inline std::string study_csv(const StudyReport& rep) {
  std::string out = "ti,tm,strategy,mean_delay,mean_loss,jitter_ratio,loss_ok\n";
  char buf[256];
  for (const auto& sc : rep.scenarios)
    for (const auto& [name, o] : sc.strategies) {
      std::snprintf(buf, sizeof buf, "%.17g,%d,%s,%.17g,%.17g,%.17g,%d\n", sc.ti, sc.tm_index, name.c_str(),
                    o.mean_delay, o.mean_loss, o.mean_jitter_ratio, o.loss_ok ? 1 : 0);
      out += buf;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Capacity planning.

/// Ladder 10 kbit -> 40 kbit -> 100 kbit; any other capacity moves to the next
/// larger distinct value among the ladder and the topology's capacities, and
/// the largest one doubles.
inline double upgraded_capacity(const Topology& topo, double c) {
  if (c == 10000.0) return 40000.0;
  if (c == 40000.0) return 100000.0;
  std::vector<double> levels = {10000.0, 40000.0, 100000.0};
  for (const Link& l : topo.links()) levels.push_back(l.capacity);
  std::sort(levels.begin(), levels.end());
  for (double v : levels)
    if (v > c) return v;
  return 2 * c;
}

/// Upgrades the link with the highest fluid utilization (lowest id on ties).
inline Topology upgrade_most_loaded(const Topology& topo, const RoutingScheme& routing, const TrafficMatrix& tm,
                                    int* upgraded_link = nullptr) {
  const auto u = link_utilization(topo, routing, tm);
  require(!u.empty(), "topology has no links");
  std::size_t best = 0;
  for (std::size_t l = 1; l < u.size(); ++l)
    if (u[l] > u[best]) best = l;
  if (upgraded_link) *upgraded_link = static_cast<int>(best);
  const int id = static_cast<int>(best);
  return topo.with_capacity(id, upgraded_capacity(topo, topo.link(id).capacity));
}

struct VariantConfig {
  int count = 20;
  int perturbed_links = 21;
  double delta = 0.05;
  std::uint64_t seed = 1;
};

struct PlanReport {
  double original_delay = 0.0;
  double original_jitter_ratio = 0.0;
  NodePair placement;
  std::size_t chosen_candidate = 0;
  double new_delay = 0.0;
  double new_jitter_ratio = 0.0;
  int upgraded_link = -1;
  double baseline_delay = 0.0;  // upgrade of the most loaded link
  double baseline_jitter_ratio = 0.0;
  double delay_reduction_vs_original = 0.0;
  double delay_reduction_vs_baseline = 0.0;
  std::size_t placements_evaluated = 0;
};

struct PlanResult {
  Topology topology;  // with the chosen link pair appended
  RoutingScheme routing;
  PlanReport report;
};

/// Candidate routings on an augmented topology: regenerated variants (the
/// unit-weight one first) followed by the original topology's variants, whose
/// link ids stay valid, so adding a link never removes an option.
inline std::vector<RoutingScheme> augmented_candidates(const Topology& augmented,
                                                       const std::vector<RoutingScheme>& original,
                                                       const VariantConfig& vc) {
  auto out = generate_routing_variants(augmented, vc.count, vc.perturbed_links, vc.delta, vc.seed);
  out.insert(out.end(), original.begin(), original.end());
  return out;
}

/// Evaluates every unordered non-adjacent node pair. With `use_cascade` each
/// placement's candidates go through the constraint cascade and the placement
/// with the lowest chosen delay wins; otherwise the pair (placement, routing)
/// with the lowest predicted mean delay wins outright.
inline PlanResult plan_link(const Topology& topo, const TrafficMatrix& tm, double capacity, const VariantConfig& vc,
                            const KpiProvider& provider, const OptimizationPolicy& policy = {},
                            bool use_cascade = false, int jobs = 1) {
  require(capacity > 0.0, "link capacity must be positive");
  std::vector<NodePair> placements;
  for (int u = 0; u < topo.node_count(); ++u)
    for (int v = u + 1; v < topo.node_count(); ++v)
      if (!topo.adjacent(u, v)) placements.push_back({u, v});
  require(!placements.empty(), "topology is fully connected: no placement for a new link");

  auto pick = [&](const std::vector<CandidateScore>& scores) {
    if (use_cascade) return cascade(scores, policy).chosen;
    std::size_t best = scores.size();
    for (const auto& s : scores)
      if (s.ok && (best == scores.size() || s.mean_delay < scores[best].mean_delay)) best = s.index;
    require(best < scores.size(), "no candidate could be evaluated", ErrorKind::kRuntime);
    return best;
  };

  const auto original = generate_routing_variants(topo, vc.count, vc.perturbed_links, vc.delta, vc.seed);
  const auto base_scores = score_candidates(topo, original, tm, provider, jobs);
  const std::size_t base_choice = pick(base_scores);

  PlanResult res;
  PlanReport& rep = res.report;
  rep.original_delay = base_scores[base_choice].mean_delay;
  rep.original_jitter_ratio = base_scores[base_choice].mean_jitter_ratio;

  double best_delay = std::numeric_limits<double>::infinity();
  for (const NodePair& p : placements) {
    const Link a{0, p.src, p.dst, capacity, kDefaultBuffer};
    const Link b{0, p.dst, p.src, capacity, kDefaultBuffer};
    Topology aug = topo.with_links({a, b});
    const auto cands = augmented_candidates(aug, original, vc);
    const auto scores = score_candidates(aug, cands, tm, provider, jobs);
    const std::size_t c = pick(scores);
    ++rep.placements_evaluated;
    if (scores[c].mean_delay < best_delay) {
      best_delay = scores[c].mean_delay;
      rep.placement = p;
      rep.chosen_candidate = c;
      rep.new_delay = scores[c].mean_delay;
      rep.new_jitter_ratio = scores[c].mean_jitter_ratio;
      res.topology = std::move(aug);
      res.routing = cands[c];
    }
  }

  const Topology upgraded = upgrade_most_loaded(topo, original[base_choice], tm, &rep.upgraded_link);
  const auto up = score_kpis(0, provider.evaluate(upgraded, original[base_choice], tm));
  rep.baseline_delay = up.mean_delay;
  rep.baseline_jitter_ratio = up.mean_jitter_ratio;
  if (rep.original_delay > 0) rep.delay_reduction_vs_original = (rep.original_delay - rep.new_delay) / rep.original_delay;
  if (rep.baseline_delay > 0) rep.delay_reduction_vs_baseline = (rep.baseline_delay - rep.new_delay) / rep.baseline_delay;
  return res;
}

/// One row in the layout of a placement table.
inline std::string plan_csv_header() {
  return "original_delay,original_jitter_ratio,placement,new_delay,new_jitter_ratio,upgraded_link,baseline_delay,"
         "baseline_jitter_ratio,delay_reduction_vs_original,delay_reduction_vs_baseline\n";
}

inline std::string plan_csv_row(const PlanReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d-%d,%.9g,%.9g,%d,%.9g,%.9g,%.6f,%.6f\n", r.original_delay,
                r.original_jitter_ratio, r.placement.src, r.placement.dst, r.new_delay, r.new_jitter_ratio,
                r.upgraded_link, r.baseline_delay, r.baseline_jitter_ratio, r.delay_reduction_vs_original,
                r.delay_reduction_vs_baseline);
  return buf;
}

}  // namespace routenet
