#pragma once

// Discrete-event packet-level simulator: Poisson sources, FIFO drop-tail links,
// zero propagation delay.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <queue>
#include <string_view>
#include <vector>

#include "routenet/error.hpp"
#include "routenet/net_core.hpp"
#include "routenet/rng.hpp"

namespace routenet {

inline constexpr std::string_view kSimulatorVersion = "routenet-des/1";

enum class PacketSizeModel {
  kBimodal,      // 300 or 1700 bits with equal probability
  kExponential,  // exponential with mean 1000 bits; queueing-theory test mode
};

struct SimConfig {
  double duration = 16000.0;
  double warmup_fraction = 0.10;
  PacketSizeModel packet_sizes = PacketSizeModel::kBimodal;
  bool buffer_includes_in_service = true;
  std::uint64_t seed = 1;

  void validate() const {
    require(duration > 0.0, "duration must be positive");
    require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction must be in [0,1)");
  }
};

struct PairStats {
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  double sum_delay = 0.0;
  double sum_delay_sq = 0.0;
  double sum_log_delay = 0.0;
  bool operator==(const PairStats&) const = default;
};

struct LinkCounters {
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  std::uint64_t drops = 0;
  std::uint64_t in_system_at_end = 0;
};

struct SimResult {
  std::map<NodePair, PairStats> pairs;
  std::vector<LinkCounters> links;
};

struct DelaySummary {
  double mean_delay = 0.0;
  double delay_variance = 0.0;
  double mean_log_delay = 0.0;
  double loss_ratio = 0.0;
  bool no_packets = false;
};

/// Biased variance (divide by n). Zero with `no_packets` set when n = 0.
inline DelaySummary summarize(const PairStats& s) {
  DelaySummary out;
  const double total = static_cast<double>(s.delivered + s.dropped);
  out.loss_ratio = total > 0 ? static_cast<double>(s.dropped) / total : 0.0;
  if (s.delivered == 0) {
    out.no_packets = true;
    return out;
  }
  const double n = static_cast<double>(s.delivered);
  out.mean_delay = s.sum_delay / n;
  out.delay_variance = std::max(0.0, s.sum_delay_sq / n - out.mean_delay * out.mean_delay);
  out.mean_log_delay = s.sum_log_delay / n;
  return out;
}

namespace detail {

struct SimPacket {
  std::uint32_t flow = 0;
  std::uint32_t hop = 0;
  double bits = 0.0;
  double emitted = 0.0;
};

struct SimEvent {
  double time;
  std::uint64_t seq;
  std::int32_t flow;  // >= 0: next emission of that flow
  std::int32_t link;  // >= 0: service completion on that link

  bool operator>(const SimEvent& o) const {
    return time > o.time || (time == o.time && seq > o.seq);
  }
};

}  // namespace detail

/// Runs one scenario. Statistics cover packets emitted at or after the
/// warm-up instant; packets still in flight at `duration` are not counted.
inline SimResult simulate(const Topology& topo, const RoutingScheme& routing, const TrafficMatrix& tm,
                          const SimConfig& cfg) {
  cfg.validate();
  require(tm.node_count() == topo.node_count(), "traffic matrix and topology node counts differ",
          ErrorKind::kSchema);
  const auto pairs = tm.active_pairs();
  std::vector<const std::vector<int>*> paths;
  std::vector<double> rate;
  paths.reserve(pairs.size());
  for (const NodePair& p : pairs) {
    const auto* path = routing.find(p);
    require(path != nullptr, "pair " + to_string(p) + " has demand but no path", ErrorKind::kSchema);
    require(!path->empty(), "pair " + to_string(p) + " has an empty path", ErrorKind::kSchema);
    for (int lid : *path)
      require(lid >= 0 && lid < topo.link_count(), "pair " + to_string(p) + " uses unknown link",
              ErrorKind::kSchema);
    paths.push_back(path);
    rate.push_back(tm.demand(p.src, p.dst) / kMeanPacketBits);
  }

  SimResult result;
  const auto nl = static_cast<std::size_t>(topo.link_count());
  result.links.assign(nl, {});
  std::vector<PairStats> stats(pairs.size());
  std::vector<std::deque<std::uint32_t>> queue(nl);
  std::vector<std::uint64_t> system_cap(nl);
  for (std::size_t i = 0; i < nl; ++i)
    system_cap[i] = static_cast<std::uint64_t>(topo.link(static_cast<int>(i)).buffer) +
                    (cfg.buffer_includes_in_service ? 0 : 1);

  std::vector<detail::SimPacket> pool;
  std::vector<std::uint32_t> free_slots;
  std::vector<SplitMix64> flow_rng;
  flow_rng.reserve(pairs.size());
  for (const NodePair& p : pairs)
    flow_rng.emplace_back(SplitMix64::derive_seed(
        cfg.seed, static_cast<std::uint64_t>(p.src) * 1000003ULL + static_cast<std::uint64_t>(p.dst)));

  std::priority_queue<detail::SimEvent, std::vector<detail::SimEvent>, std::greater<>> events;
  std::uint64_t seq = 0;
  for (std::size_t f = 0; f < pairs.size(); ++f)
    events.push({flow_rng[f].exponential(rate[f]), seq++, static_cast<std::int32_t>(f), -1});

  const double warmup = cfg.duration * cfg.warmup_fraction;
  const bool bimodal = cfg.packet_sizes == PacketSizeModel::kBimodal;

  auto start_service = [&](std::size_t link, double now) {
    const auto& pkt = pool[queue[link].front()];
    events.push({now + pkt.bits / topo.link(static_cast<int>(link)).capacity, seq++, -1,
                 static_cast<std::int32_t>(link)});
  };

  // Hands packet `id` to link `link` at time `now`.
  auto offer = [&](std::uint32_t id, std::size_t link, double now) {
    auto& lc = result.links[link];
    ++lc.arrivals;
    if (queue[link].size() >= system_cap[link]) {
      ++lc.drops;
      const auto& pkt = pool[id];
      if (pkt.emitted >= warmup) ++stats[pkt.flow].dropped;
      free_slots.push_back(id);
      return;
    }
    queue[link].push_back(id);
    if (queue[link].size() == 1) start_service(link, now);
  };

  while (!events.empty()) {
    const detail::SimEvent ev = events.top();
    if (ev.time > cfg.duration) break;
    events.pop();
    if (ev.flow >= 0) {
      const auto f = static_cast<std::size_t>(ev.flow);
      auto& rng = flow_rng[f];
      const double bits = bimodal ? (rng.bernoulli(0.5) ? 300.0 : 1700.0) : rng.exponential(1.0 / kMeanPacketBits);
      std::uint32_t id;
      if (free_slots.empty()) {
        id = static_cast<std::uint32_t>(pool.size());
        pool.push_back({});
      } else {
        id = free_slots.back();
        free_slots.pop_back();
      }
      pool[id] = detail::SimPacket{static_cast<std::uint32_t>(f), 0, bits, ev.time};
      events.push({ev.time + rng.exponential(rate[f]), seq++, ev.flow, -1});
      offer(id, static_cast<std::size_t>((*paths[f])[0]), ev.time);
    } else {
      const auto link = static_cast<std::size_t>(ev.link);
      const std::uint32_t id = queue[link].front();
      queue[link].pop_front();
      ++result.links[link].departures;
      if (!queue[link].empty()) start_service(link, ev.time);
      auto& pkt = pool[id];
      const auto& path = *paths[pkt.flow];
      if (++pkt.hop < path.size()) {
        offer(id, static_cast<std::size_t>(path[pkt.hop]), ev.time);
      } else {
        if (pkt.emitted >= warmup) {
          const double d = ev.time - pkt.emitted;
          auto& s = stats[pkt.flow];
          ++s.delivered;
          s.sum_delay += d;
          s.sum_delay_sq += d * d;
          s.sum_log_delay += std::log(d);
        }
        free_slots.push_back(id);
      }
    }
  }

  for (std::size_t i = 0; i < nl; ++i) result.links[i].in_system_at_end = queue[i].size();
  for (std::size_t f = 0; f < pairs.size(); ++f) result.pairs.emplace(pairs[f], stats[f]);
  return result;
}

}  // namespace routenet
