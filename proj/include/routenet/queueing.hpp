#pragma once

// Lossy-network queueing baseline: every link is an independent M/M/1/b queue,
// per-path offered load is thinned by upstream blocking, and the blocking
// probabilities are found by damped fixed-point iteration.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "routenet/error.hpp"
#include "routenet/net_core.hpp"

namespace routenet {

/// Blocking probability of M/M/1/b at load rho. |rho - 1| < 1e-9 takes the
/// analytic limit 1/(b+1).
inline double mm1b_blocking(double rho, int b) {
  require(rho >= 0.0 && b >= 1, "mm1b_blocking needs rho >= 0, b >= 1");
  if (std::abs(rho - 1.0) < 1e-9) return 1.0 / (b + 1);
  if (rho == 0.0) return 0.0;
  if (rho > 1.0) {
    // Same expression divided through by rho^(b+1) to avoid overflow.
    const double r = 1.0 / rho;
    return (1.0 - r) / (1.0 - std::pow(r, b + 1));
  }
  return (1.0 - rho) * std::pow(rho, b) / (1.0 - std::pow(rho, b + 1));
}

/// Stationary occupancy distribution pi_0..pi_b of M/M/1/b.
inline std::vector<double> mm1b_distribution(double rho, int b) {
  require(rho >= 0.0 && b >= 1, "mm1b_distribution needs rho >= 0, b >= 1");
  std::vector<double> pi(static_cast<std::size_t>(b) + 1);
  if (std::abs(rho - 1.0) < 1e-9) {
    std::fill(pi.begin(), pi.end(), 1.0 / (b + 1));
    return pi;
  }
  if (rho == 0.0) {
    pi[0] = 1.0;
    return pi;
  }
  // pi_k proportional to rho^k, scaled by the largest term.
  const double log_rho = std::log(rho);
  const int kmax = rho > 1.0 ? b : 0;
  double total = 0.0;
  for (int k = 0; k <= b; ++k) {
    pi[static_cast<std::size_t>(k)] = std::exp((k - kmax) * log_rho);
    total += pi[static_cast<std::size_t>(k)];
  }
  for (double& p : pi) p /= total;
  return pi;
}

struct LinkQueueStats {
  double blocking = 0.0;
  double mean_delay = 0.0;
  double delay_variance = 0.0;
};

/// Sojourn statistics of an accepted packet in M/M/1/b. An arrival that finds
/// k packets waits for k+1 exponential services, so the sojourn is an
/// Erlang(k+1, mu) mixture weighted by pi_k / (1 - Pb).
inline LinkQueueStats link_mm1b_stats(double rho, double service_rate, int b) {
  require(service_rate > 0.0, "service_rate must be positive");
  const auto pi = mm1b_distribution(rho, b);
  LinkQueueStats out;
  out.blocking = mm1b_blocking(rho, b);
  double accepted = 0.0;
  for (int k = 0; k < b; ++k) accepted += pi[static_cast<std::size_t>(k)];
  double m1 = 0.0;
  double m2 = 0.0;
  for (int k = 0; k < b; ++k) {
    const double w = pi[static_cast<std::size_t>(k)] / accepted;
    m1 += w * (k + 1);
    m2 += w * (k + 1) * (k + 2);
  }
  out.mean_delay = m1 / service_rate;
  const double second = m2 / (service_rate * service_rate);
  out.delay_variance = std::max(0.0, second - out.mean_delay * out.mean_delay);
  return out;
}

struct QtLink {
  double carried_load = 0.0;  // bits per time unit offered to the link
  double utilization = 0.0;
  double blocking = 0.0;
  double mean_delay = 0.0;
  double delay_variance = 0.0;
};

struct QtPath {
  double mean_delay = 0.0;
  double delay_variance = 0.0;
  double loss_ratio = 0.0;
};

struct QtSolution {
  std::vector<QtLink> links;
  std::map<NodePair, QtPath> paths;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
};

struct FixedPointOptions {
  double tol = 1e-9;
  int max_iter = 1000;
  double damping = 0.5;
};

/// Path aggregation under link independence: means and variances add, losses
/// compose as 1 - prod(1 - Pb).
inline std::map<NodePair, QtPath> aggregate_paths(const std::vector<QtLink>& links,
                                                  const RoutingScheme& routing,
                                                  const std::vector<NodePair>& pairs) {
  std::map<NodePair, QtPath> out;
  for (const NodePair& p : pairs) {
    const auto* path = routing.find(p);
    require(path != nullptr, "pair " + to_string(p) + " has no path", ErrorKind::kSchema);
    QtPath qp;
    double survive = 1.0;
    for (int lid : *path) {
      const QtLink& l = links.at(static_cast<std::size_t>(lid));
      qp.mean_delay += l.mean_delay;
      qp.delay_variance += l.delay_variance;
      survive *= 1.0 - l.blocking;
    }
    qp.loss_ratio = 1.0 - survive;
    out.emplace(p, qp);
  }
  return out;
}

inline QtSolution solve_fixed_point(const Topology& topo, const RoutingScheme& routing,
                                    const TrafficMatrix& tm, const FixedPointOptions& opt = {}) {
  require(opt.tol > 0.0, "tol must be positive");
  require(opt.max_iter >= 1, "max_iter must be >= 1");
  require(opt.damping > 0.0 && opt.damping <= 1.0, "damping must be in (0,1]");
  require(tm.node_count() == topo.node_count(), "traffic matrix and topology node counts differ",
          ErrorKind::kSchema);
  const auto pairs = tm.active_pairs();
  std::vector<const std::vector<int>*> paths;
  for (const NodePair& p : pairs) {
    const auto* path = routing.find(p);
    require(path != nullptr, "pair " + to_string(p) + " has demand but no path", ErrorKind::kSchema);
    paths.push_back(path);
  }
  const auto nl = static_cast<std::size_t>(topo.link_count());
  std::vector<double> pb(nl, 0.0);
  std::vector<double> load(nl, 0.0);
  QtSolution sol;
  for (int it = 1; it <= opt.max_iter; ++it) {
    std::fill(load.begin(), load.end(), 0.0);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      double lambda = tm.demand(pairs[k].src, pairs[k].dst);
      for (int lid : *paths[k]) {
        load[static_cast<std::size_t>(lid)] += lambda;
        lambda *= 1.0 - pb[static_cast<std::size_t>(lid)];
      }
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < nl; ++i) {
      const Link& l = topo.link(static_cast<int>(i));
      const double fresh = mm1b_blocking(load[i] / l.capacity, l.buffer);
      const double next = (1.0 - opt.damping) * pb[i] + opt.damping * fresh;
      residual = std::max(residual, std::abs(next - pb[i]));
      pb[i] = next;
    }
    sol.iterations = it;
    sol.residual = residual;
    if (residual < opt.tol) {
      sol.converged = true;
      break;
    }
  }
  // Final loads consistent with the reported blocking probabilities.
  std::fill(load.begin(), load.end(), 0.0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    double lambda = tm.demand(pairs[k].src, pairs[k].dst);
    for (int lid : *paths[k]) {
      load[static_cast<std::size_t>(lid)] += lambda;
      lambda *= 1.0 - pb[static_cast<std::size_t>(lid)];
    }
  }
  sol.links.resize(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    const Link& l = topo.link(static_cast<int>(i));
    QtLink& q = sol.links[i];
    q.carried_load = load[i];
    q.utilization = load[i] / l.capacity;
    const auto st = link_mm1b_stats(q.utilization, l.capacity / kMeanPacketBits, l.buffer);
    q.blocking = mm1b_blocking(q.utilization, l.buffer);
    q.mean_delay = st.mean_delay;
    q.delay_variance = st.delay_variance;
  }
  sol.paths = aggregate_paths(sol.links, routing, pairs);
  return sol;
}

}  // namespace routenet
