#pragma once

// Topology, routing and traffic-matrix types plus their generators.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "routenet/error.hpp"
#include "routenet/rng.hpp"

namespace routenet {

inline constexpr int kDefaultBuffer = 32;
inline constexpr double kMeanPacketBits = 1000.0;

struct NodePair {
  int src = 0;
  int dst = 0;
  auto operator<=>(const NodePair&) const = default;
};

inline std::string to_string(NodePair p) {
  return "(" + std::to_string(p.src) + "," + std::to_string(p.dst) + ")";
}

/// Directed link. Capacity is in bits per time unit; buffer counts packets in
/// the whole system, the one in service included.
struct Link {
  int id = 0;
  int src = 0;
  int dst = 0;
  double capacity = 10000.0;
  int buffer = kDefaultBuffer;
  bool operator==(const Link&) const = default;
};

class Topology {
 public:
  Topology() = default;

  Topology(std::string name, int node_count, std::vector<Link> links)
      : name_(std::move(name)), node_count_(node_count), links_(std::move(links)) {
    validate();
  }

  /// Builds the directed graph from undirected (u, v, capacity) triples, each
  /// contributing u->v then v->u.
  static Topology from_undirected(std::string name, int node_count,
                                  const std::vector<std::tuple<int, int, double>>& edges,
                                  int buffer = kDefaultBuffer) {
    std::vector<Link> links;
    links.reserve(edges.size() * 2);
    for (const auto& [u, v, cap] : edges) {
      links.push_back(Link{static_cast<int>(links.size()), u, v, cap, buffer});
      links.push_back(Link{static_cast<int>(links.size()), v, u, cap, buffer});
    }
    return Topology(std::move(name), node_count, std::move(links));
  }

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] int node_count() const noexcept { return node_count_; }
  [[nodiscard]] std::span<const Link> links() const noexcept { return links_; }
  [[nodiscard]] int link_count() const noexcept { return static_cast<int>(links_.size()); }
  [[nodiscard]] const Link& link(int id) const { return links_.at(static_cast<std::size_t>(id)); }

  [[nodiscard]] std::optional<int> find_link(int src, int dst) const {
    auto it = index_.find(NodePair{src, dst});
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] bool adjacent(int u, int v) const {
    return find_link(u, v).has_value() || find_link(v, u).has_value();
  }

  /// Outgoing link ids per node, ordered by destination node.
  [[nodiscard]] std::vector<std::vector<int>> out_links() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(node_count_));
    for (const auto& l : links_) out[static_cast<std::size_t>(l.src)].push_back(l.id);
    for (auto& v : out) {
      std::sort(v.begin(), v.end(), [&](int a, int b) { return links_[a].dst < links_[b].dst; });
    }
    return out;
  }

  /// Copy with extra links appended (ids continue densely).
  [[nodiscard]] Topology with_links(const std::vector<Link>& extra, std::string new_name = {}) const {
    std::vector<Link> all = links_;
    for (Link l : extra) {
      l.id = static_cast<int>(all.size());
      all.push_back(l);
    }
    return Topology(new_name.empty() ? name_ : std::move(new_name), node_count_, std::move(all));
  }

  [[nodiscard]] Topology with_capacity(int link_id, double capacity) const {
    std::vector<Link> all = links_;
    all.at(static_cast<std::size_t>(link_id)).capacity = capacity;
    return Topology(name_, node_count_, std::move(all));
  }

  bool operator==(const Topology& o) const {
    return name_ == o.name_ && node_count_ == o.node_count_ && links_ == o.links_;
  }

 private:
  void validate() {
    require(node_count_ >= 2, "topology needs at least 2 nodes", ErrorKind::kSchema);
    index_.clear();
    for (std::size_t i = 0; i < links_.size(); ++i) {
      const Link& l = links_[i];
      const std::string tag = "link " + std::to_string(i) + ": ";
      require(l.id == static_cast<int>(i), tag + "ids must be dense 0..n_l-1", ErrorKind::kSchema);
      require(l.src >= 0 && l.src < node_count_ && l.dst >= 0 && l.dst < node_count_,
              tag + "endpoint out of range", ErrorKind::kSchema);
      require(l.src != l.dst, tag + "self-loop", ErrorKind::kSchema);
      require(l.capacity > 0.0, tag + "capacity must be positive", ErrorKind::kSchema);
      require(l.buffer >= 1, tag + "buffer must be >= 1", ErrorKind::kSchema);
      auto [it, inserted] = index_.emplace(NodePair{l.src, l.dst}, l.id);
      require(inserted, tag + "duplicate directed link " + to_string({l.src, l.dst}), ErrorKind::kSchema);
    }
  }

  std::string name_;
  int node_count_ = 0;
  std::vector<Link> links_;
  std::map<NodePair, int> index_;
};

struct RoutingScheme {
  std::map<NodePair, std::vector<int>> paths;
  std::optional<std::vector<double>> weights;

  [[nodiscard]] const std::vector<int>* find(NodePair p) const {
    auto it = paths.find(p);
    return it == paths.end() ? nullptr : &it->second;
  }
  bool operator==(const RoutingScheme&) const = default;
};

/// Dense per-pair offered bandwidth in bits per time unit.
class TrafficMatrix {
 public:
  TrafficMatrix() = default;
  explicit TrafficMatrix(int node_count, double ti = 0.0)
      : node_count_(node_count), ti_(ti),
        demand_(static_cast<std::size_t>(node_count) * static_cast<std::size_t>(node_count), 0.0) {}

  [[nodiscard]] int node_count() const noexcept { return node_count_; }
  [[nodiscard]] double ti() const noexcept { return ti_; }
  void set_ti(double ti) noexcept { ti_ = ti; }

  [[nodiscard]] double demand(int src, int dst) const { return demand_.at(index(src, dst)); }
  void set_demand(int src, int dst, double bw) {
    require(bw >= 0.0, "demand must be non-negative");
    require(src != dst || bw == 0.0, "demand(i,i) must be zero");
    demand_.at(index(src, dst)) = bw;
  }

  /// Ordered pairs with strictly positive demand, lexicographic.
  [[nodiscard]] std::vector<NodePair> active_pairs() const {
    std::vector<NodePair> out;
    for (int s = 0; s < node_count_; ++s)
      for (int d = 0; d < node_count_; ++d)
        if (s != d && demand(s, d) > 0.0) out.push_back({s, d});
    return out;
  }

  [[nodiscard]] double total() const {
    double t = 0.0;
    for (double v : demand_) t += v;
    return t;
  }

  [[nodiscard]] TrafficMatrix scaled(double factor) const {
    TrafficMatrix out = *this;
    for (double& v : out.demand_) v *= factor;
    out.ti_ *= factor;
    return out;
  }

  bool operator==(const TrafficMatrix&) const = default;

 private:
  [[nodiscard]] std::size_t index(int src, int dst) const {
    require(src >= 0 && src < node_count_ && dst >= 0 && dst < node_count_,
            "node index out of range in traffic matrix");
    return static_cast<std::size_t>(src) * static_cast<std::size_t>(node_count_) +
           static_cast<std::size_t>(dst);
  }

  int node_count_ = 0;
  double ti_ = 0.0;
  std::vector<double> demand_;
};

/// demand(i,j) = U(0.1, 1) * ti / (N - 1) in units of `bits_per_unit` bits per
/// time unit. The default unit is 1 kbit, so ti is given in the same kbit
/// scale as the 10/40/100 kbit link capacities.
inline TrafficMatrix generate_traffic_matrix(const Topology& topo, double ti, std::uint64_t seed,
                                             double bits_per_unit = 1000.0) {
  require(ti > 0.0, "traffic intensity must be positive");
  require(bits_per_unit > 0.0, "bits_per_unit must be positive");
  const int n = topo.node_count();
  TrafficMatrix tm(n, ti);
  SplitMix64 rng(SplitMix64::derive_seed(seed, 0x544d));
  for (int s = 0; s < n; ++s)
    for (int d = 0; d < n; ++d)
      if (s != d) tm.set_demand(s, d, rng.uniform(0.1, 1.0) * ti / (n - 1) * bits_per_unit);
  return tm;
}

namespace detail {

// Shortest distance from every node to `dst` over reversed links.
inline std::vector<double> distances_to(const Topology& topo, std::span<const double> weights, int dst) {
  const auto n = static_cast<std::size_t>(topo.node_count());
  std::vector<std::vector<int>> in(n);
  for (const auto& l : topo.links()) in[static_cast<std::size_t>(l.dst)].push_back(l.id);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[static_cast<std::size_t>(dst)] = 0.0;
  pq.emplace(0.0, dst);
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(v)]) continue;
    for (int lid : in[static_cast<std::size_t>(v)]) {
      const Link& l = topo.link(lid);
      const double nd = d + weights[static_cast<std::size_t>(lid)];
      if (nd < dist[static_cast<std::size_t>(l.src)]) {
        dist[static_cast<std::size_t>(l.src)] = nd;
        pq.emplace(nd, l.src);
      }
    }
  }
  return dist;
}

inline bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace detail

/// Minimum-weight path for every ordered pair. Among equal-cost paths the
/// lexicographically smallest node sequence wins.
inline RoutingScheme shortest_path_routing(const Topology& topo, std::span<const double> weights) {
  require(static_cast<int>(weights.size()) == topo.link_count(), "one weight per link required");
  for (double w : weights) require(w > 0.0, "link weights must be positive");
  const int n = topo.node_count();
  const auto out = topo.out_links();
  RoutingScheme rs;
  rs.weights = std::vector<double>(weights.begin(), weights.end());
  for (int dst = 0; dst < n; ++dst) {
    const auto dist = detail::distances_to(topo, weights, dst);
    for (int src = 0; src < n; ++src) {
      if (src == dst) continue;
      require(std::isfinite(dist[static_cast<std::size_t>(src)]),
              "no path for pair " + to_string({src, dst}), ErrorKind::kSchema);
      std::vector<int> path;
      int u = src;
      while (u != dst) {
        const double du = dist[static_cast<std::size_t>(u)];
        int chosen = -1;
        // out-links are sorted by destination node, so the first tight link
        // gives the smallest next hop.
        for (int lid : out[static_cast<std::size_t>(u)]) {
          const Link& l = topo.link(lid);
          if (detail::nearly_equal(weights[static_cast<std::size_t>(lid)] + dist[static_cast<std::size_t>(l.dst)], du)) {
            chosen = lid;
            break;
          }
        }
        require(chosen >= 0, "internal: no tight edge", ErrorKind::kRuntime);
        path.push_back(chosen);
        u = topo.link(chosen).dst;
      }
      rs.paths.emplace(NodePair{src, dst}, std::move(path));
    }
  }
  return rs;
}

inline RoutingScheme shortest_path_routing(const Topology& topo) {
  std::vector<double> ones(static_cast<std::size_t>(topo.link_count()), 1.0);
  return shortest_path_routing(topo, ones);
}

/// Routing family: the unit-weight shortest paths first, then `count - 1`
/// schemes whose weights add `delta` to `perturbed_links` links drawn with
/// replacement (fresh draw per variant). Duplicates are kept.
inline std::vector<RoutingScheme> generate_routing_variants(const Topology& topo, int count,
                                                            int perturbed_links, double delta,
                                                            std::uint64_t seed) {
  require(count >= 1, "count must be >= 1");
  require(perturbed_links >= 0, "perturbed_links must be >= 0");
  std::vector<RoutingScheme> out;
  out.reserve(static_cast<std::size_t>(count));
  const auto nl = static_cast<std::size_t>(topo.link_count());
  for (int v = 0; v < count; ++v) {
    std::vector<double> w(nl, 1.0);
    if (v > 0) {
      SplitMix64 rng(SplitMix64::derive_seed(seed, static_cast<std::uint64_t>(v)));
      for (int k = 0; k < perturbed_links; ++k) w[rng.below(nl)] += delta;
    }
    out.push_back(shortest_path_routing(topo, w));
  }
  return out;
}

struct RoutingReport {
  bool ok = true;
  std::optional<NodePair> pair;
  std::string message;
};

/// Checks every RoutingScheme invariant; with a traffic matrix, also checks
/// that each pair with positive demand has a path.
inline RoutingReport validate_routing(const Topology& topo, const RoutingScheme& routing,
                                      const TrafficMatrix* tm = nullptr) {
  auto bad = [](NodePair p, std::string msg) { return RoutingReport{false, p, std::move(msg)}; };
  for (const auto& [pair, path] : routing.paths) {
    if (pair.src < 0 || pair.src >= topo.node_count() || pair.dst < 0 || pair.dst >= topo.node_count())
      return bad(pair, "pair " + to_string(pair) + " has node out of range");
    if (pair.src == pair.dst) return bad(pair, "pair " + to_string(pair) + " is a self pair");
    if (path.empty()) return bad(pair, "pair " + to_string(pair) + " has an empty path");
    std::vector<int> seen;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const int lid = path[i];
      if (lid < 0 || lid >= topo.link_count())
        return bad(pair, "pair " + to_string(pair) + " references unknown link " + std::to_string(lid));
      if (std::find(seen.begin(), seen.end(), lid) != seen.end())
        return bad(pair, "pair " + to_string(pair) + " repeats link " + std::to_string(lid));
      seen.push_back(lid);
      if (i > 0 && topo.link(path[i - 1]).dst != topo.link(lid).src)
        return bad(pair, "pair " + to_string(pair) + " has non-adjacent consecutive links " +
                             std::to_string(path[i - 1]) + "," + std::to_string(lid));
    }
    if (topo.link(path.front()).src != pair.src)
      return bad(pair, "pair " + to_string(pair) + " path does not start at its source");
    if (topo.link(path.back()).dst != pair.dst)
      return bad(pair, "pair " + to_string(pair) + " path does not end at its destination");
  }
  if (tm != nullptr) {
    if (tm->node_count() != topo.node_count())
      return RoutingReport{false, std::nullopt, "traffic matrix node count does not match topology"};
    for (const NodePair& p : tm->active_pairs())
      if (routing.find(p) == nullptr) return bad(p, "pair " + to_string(p) + " has demand but no path");
  }
  return {};
}

// ---------------------------------------------------------------------------
// Built-in topologies.

namespace topologies {

inline Topology toy5() {
  return Topology::from_undirected("toy5", 5,
                                   {{0, 1, 10000}, {0, 2, 40000}, {1, 2, 10000}, {1, 3, 40000},
                                    {2, 4, 10000}, {3, 4, 10000}});
}

inline Topology toy6() {
  return Topology::from_undirected("toy6", 6,
                                   {{0, 1, 10000}, {0, 2, 40000}, {1, 2, 10000}, {1, 3, 10000},
                                    {2, 4, 40000}, {3, 4, 10000}, {3, 5, 40000}, {4, 5, 10000}});
}

inline Topology toy7() {
  return Topology::from_undirected("toy7", 7,
                                   {{0, 1, 40000}, {0, 2, 10000}, {1, 3, 10000}, {2, 3, 40000},
                                    {2, 4, 10000}, {3, 5, 10000}, {4, 5, 40000}, {4, 6, 10000},
                                    {5, 6, 10000}, {1, 6, 10000}});
}

inline Topology toy8() {
  return Topology::from_undirected("toy8", 8,
                                   {{0, 1, 10000}, {0, 2, 40000}, {1, 2, 10000}, {1, 3, 40000},
                                    {2, 5, 10000}, {3, 4, 10000}, {3, 6, 10000}, {4, 5, 40000},
                                    {4, 7, 10000}, {5, 7, 10000}, {6, 7, 40000}, {0, 6, 10000}});
}

/// 14-node, 21-link NSFNET. Capacities alternate 10/40 kbit by edge index.
inline Topology nsfnet() {
  const std::vector<std::pair<int, int>> e = {
      {0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 7}, {2, 5}, {3, 4}, {3, 8}, {4, 5}, {4, 6}, {5, 12},
      {5, 13}, {6, 7}, {7, 10}, {8, 9}, {8, 11}, {9, 10}, {9, 12}, {10, 11}, {10, 13}, {11, 12}};
  std::vector<std::tuple<int, int, double>> edges;
  for (std::size_t i = 0; i < e.size(); ++i)
    edges.emplace_back(e[i].first, e[i].second, i % 3 == 0 ? 40000.0 : 10000.0);
  return Topology::from_undirected("nsfnet", 14, edges);
}

/// Ring plus `chords` random extra edges; capacities drawn from `capacities`.
inline Topology random_ring(int node_count, int chords, std::uint64_t seed,
                            std::vector<double> capacities = {10000.0, 40000.0}) {
  require(node_count >= 3, "random_ring needs at least 3 nodes");
  require(!capacities.empty(), "capacity list must not be empty");
  SplitMix64 rng(seed);
  std::vector<std::tuple<int, int, double>> edges;
  std::map<NodePair, bool> used;
  auto add = [&](int u, int v) {
    if (u > v) std::swap(u, v);
    if (u == v || used.count({u, v})) return false;
    used[{u, v}] = true;
    edges.emplace_back(u, v, capacities[rng.below(capacities.size())]);
    return true;
  };
  for (int i = 0; i < node_count; ++i) add(i, (i + 1) % node_count);
  const int max_edges = node_count * (node_count - 1) / 2;
  chords = std::min(chords, max_edges - node_count);
  int added = 0;
  while (added < chords) {
    if (add(static_cast<int>(rng.below(static_cast<std::uint64_t>(node_count))),
            static_cast<int>(rng.below(static_cast<std::uint64_t>(node_count)))))
      ++added;
  }
  return Topology::from_undirected("ring" + std::to_string(node_count) + "-" + std::to_string(seed),
                                   node_count, edges);
}

inline std::optional<Topology> by_name(const std::string& name) {
  if (name == "toy5") return toy5();
  if (name == "toy6") return toy6();
  if (name == "toy7") return toy7();
  if (name == "toy8") return toy8();
  if (name == "nsfnet") return nsfnet();
  return std::nullopt;
}

}  // namespace topologies

}  // namespace routenet
