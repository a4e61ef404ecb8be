#pragma once

// Ground-truth samples: one simulated scenario per record, stored one JSON
// object per line in gzip shards of at most 1000 records.
//
// Sample line fields:
//   id               integer, position in the generated dataset
//   topology         {"name","node_count","links":[{"id","src","dst","capacity","buffer"}]}
//   routing          {"paths":[{"src","dst","links"}], "weights"?:[...]}   (pairs with demand only)
//   traffic_matrix   {"node_count","ti","demand":[{"src","dst","bandwidth"}]}
//   targets          [{"src","dst","delivered","dropped","mean_delay","delay_variance","mean_log_delay"}]
//   meta             {"seed","duration","warmup_fraction","simulator","rng","topology_index",
//                     "scheme_index","tm_index"}
//
// A file may start with a {"record":"meta",...} provenance line; readers skip it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <zlib.h>

#include "routenet/error.hpp"
#include "routenet/io.hpp"
#include "routenet/model.hpp"
#include "routenet/net_core.hpp"
#include "routenet/parallel.hpp"
#include "routenet/simulator.hpp"

namespace routenet {

inline constexpr std::size_t kShardRecords = 1000;

struct SampleMeta {
  std::uint64_t seed = 0;
  double duration = 0.0;
  double warmup_fraction = 0.0;
  std::string simulator = std::string(kSimulatorVersion);
  std::string rng = std::string(SplitMix64::kName);
  int topology_index = 0;
  int scheme_index = 0;
  int tm_index = 0;
  bool operator==(const SampleMeta&) const = default;
};

/// Per-pair ground truth as stored: counts plus the summaries of the
/// delivered packets' delays.
struct PairTarget {
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  double mean_delay = 0.0;
  double delay_variance = 0.0;  // biased
  double mean_log_delay = 0.0;

  [[nodiscard]] double loss_ratio() const {
    const auto total = delivered + dropped;
    return total == 0 ? 0.0 : static_cast<double>(dropped) / static_cast<double>(total);
  }
  bool operator==(const PairTarget&) const = default;
};

inline PairTarget to_target(const PairStats& st) {
  const auto d = summarize(st);
  return {st.delivered, st.dropped, d.mean_delay, d.delay_variance, d.mean_log_delay};
}

struct SampleRecord {
  std::uint64_t id = 0;
  Topology topology;
  RoutingScheme routing;
  TrafficMatrix traffic;
  std::map<NodePair, PairTarget> targets;
  SampleMeta meta;

  /// Model input, one path per pair with demand in lexicographic order.
  [[nodiscard]] ScenarioGraph graph() const { return build_graph(topology, routing, traffic); }

  /// Targets aligned with graph().
  [[nodiscard]] std::vector<PathTargets> path_targets() const {
    std::vector<PathTargets> out;
    for (const NodePair& p : traffic.active_pairs()) {
      const auto it = targets.find(p);
      require(it != targets.end(), "sample " + std::to_string(id) + " has no target for pair " + to_string(p),
              ErrorKind::kSchema);
      const PairTarget& t = it->second;
      out.push_back({static_cast<double>(t.delivered), t.mean_delay, t.delay_variance, t.mean_log_delay,
                     static_cast<double>(t.dropped)});
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Serialization.

inline Json sample_to_json(const SampleRecord& s) {
  Json targets = Json::array();
  for (const auto& [p, t] : s.targets)
    targets.push_back({{"src", p.src},
                       {"dst", p.dst},
                       {"delivered", t.delivered},
                       {"dropped", t.dropped},
                       {"mean_delay", t.mean_delay},
                       {"delay_variance", t.delay_variance},
                       {"mean_log_delay", t.mean_log_delay}});
  // Only paths for pairs with demand are part of the sample.
  RoutingScheme used;
  used.weights = s.routing.weights;
  for (const NodePair& p : s.traffic.active_pairs())
    if (const auto* path = s.routing.find(p)) used.paths[p] = *path;
  return {{"id", s.id},
          {"topology", topology_to_json(s.topology)},
          {"routing", routing_to_json(used)},
          {"traffic_matrix", traffic_to_json(s.traffic)},
          {"targets", targets},
          {"meta",
           {{"seed", s.meta.seed},
            {"duration", s.meta.duration},
            {"warmup_fraction", s.meta.warmup_fraction},
            {"simulator", s.meta.simulator},
            {"rng", s.meta.rng},
            {"topology_index", s.meta.topology_index},
            {"scheme_index", s.meta.scheme_index},
            {"tm_index", s.meta.tm_index}}}};
}

inline SampleRecord sample_from_json(const Json& j) {
  SampleRecord s;
  s.id = j.at("id").get<std::uint64_t>();
  s.topology = topology_from_json(j.at("topology"));
  s.routing = routing_from_json(j.at("routing"));
  s.traffic = traffic_from_json(j.at("traffic_matrix"));
  for (const auto& t : j.at("targets")) {
    PairTarget pt;
    pt.delivered = t.at("delivered").get<std::uint64_t>();
    pt.dropped = t.at("dropped").get<std::uint64_t>();
    pt.mean_delay = t.at("mean_delay").get<double>();
    pt.delay_variance = t.at("delay_variance").get<double>();
    pt.mean_log_delay = t.at("mean_log_delay").get<double>();
    require(pt.delay_variance >= 0.0, "negative delay_variance in sample " + std::to_string(s.id),
            ErrorKind::kSchema);
    require(pt.mean_delay >= 0.0, "negative mean_delay in sample " + std::to_string(s.id), ErrorKind::kSchema);
    s.targets[{t.at("src").get<int>(), t.at("dst").get<int>()}] = pt;
  }
  const auto& m = j.at("meta");
  s.meta.seed = m.at("seed").get<std::uint64_t>();
  s.meta.duration = m.at("duration").get<double>();
  s.meta.warmup_fraction = m.at("warmup_fraction").get<double>();
  s.meta.simulator = m.at("simulator").get<std::string>();
  s.meta.rng = m.at("rng").get<std::string>();
  s.meta.topology_index = m.at("topology_index").get<int>();
  s.meta.scheme_index = m.at("scheme_index").get<int>();
  s.meta.tm_index = m.at("tm_index").get<int>();
  for (const NodePair& p : s.traffic.active_pairs())
    require(s.targets.count(p) == 1, "sample " + std::to_string(s.id) + " lacks target for " + to_string(p),
            ErrorKind::kSchema);
  require(s.targets.size() == s.traffic.active_pairs().size(),
          "sample " + std::to_string(s.id) + " has targets for pairs without demand", ErrorKind::kSchema);
  return s;
}

inline std::string sample_line(const SampleRecord& s) { return sample_to_json(s).dump(); }

namespace detail {

inline void gzip_member(const std::string& payload, std::string& out) {
  z_stream zs{};
  require(deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK, "deflateInit2 failed",
          ErrorKind::kIo);
  gz_header header{};
  header.time = 0;
  header.os = 255;  // unknown: keeps shards byte-identical across platforms
  deflateSetHeader(&zs, &header);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(payload.data()));
  zs.avail_in = static_cast<uInt>(payload.size());
  std::array<char, 1 << 16> buf{};
  int rc = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = deflate(&zs, Z_FINISH);
    require(rc != Z_STREAM_ERROR, "deflate failed", ErrorKind::kIo);
    out.append(buf.data(), buf.size() - zs.avail_out);
  } while (rc != Z_STREAM_END);
  deflateEnd(&zs);
}

inline std::string gunzip_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  require(f != nullptr, "cannot read " + path, ErrorKind::kIo);
  std::string out;
  std::array<char, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int err = 0;
      const std::string msg = gzerror(f, &err);
      gzclose(f);
      fail(ErrorKind::kIo, path + ": " + msg);
    }
    if (n == 0) break;
    out.append(buf.data(), static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

/// Writes records to `path`; a ".gz" suffix selects gzip with one member per
/// shard of kShardRecords records, anything else plain text.
inline void save_samples(const std::string& path, const std::vector<SampleRecord>& samples,
                         const FileMeta* meta = nullptr) {
  std::string out;
  const std::string head = meta ? meta_record(*meta).dump() + "\n" : std::string();
  if (detail::ends_with(path, ".gz")) {
    if (samples.empty() && meta) detail::gzip_member(head, out);
    for (std::size_t start = 0; start < samples.size(); start += kShardRecords) {
      std::string shard = start == 0 ? head : std::string();
      const std::size_t end = std::min(samples.size(), start + kShardRecords);
      for (std::size_t i = start; i < end; ++i) shard += sample_line(samples[i]) + "\n";
      detail::gzip_member(shard, out);
    }
  } else {
    out = head;
    for (const auto& s : samples) out += sample_line(s) + "\n";
  }
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write " + path, ErrorKind::kIo);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(os.good(), "write failed: " + path, ErrorKind::kIo);
}

inline std::vector<SampleRecord> load_samples(const std::string& path) {
  std::string text;
  if (detail::ends_with(path, ".gz")) {
    text = detail::gunzip_all(path);
  } else {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot read " + path, ErrorKind::kIo);
    text.assign(std::istreambuf_iterator<char>(is), {});
  }
  std::vector<SampleRecord> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++lineno;
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      auto j = Json::parse(line);
      if (j.contains("record") && j["record"] == "meta") continue;
      out.push_back(sample_from_json(j));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kSchema, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kIo) throw;
      fail(ErrorKind::kSchema, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// SHA-256 over the canonical serialized lines, hex encoded.
inline std::string fingerprint(const std::vector<SampleRecord>& samples) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, "EVP_MD_CTX_new failed", ErrorKind::kRuntime);
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& s : samples) {
    const std::string line = sample_line(s) + "\n";
    EVP_DigestUpdate(ctx, line.data(), line.size());
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

// ---------------------------------------------------------------------------
// Generation.

struct DatasetSpec {
  std::vector<Topology> topologies;
  double ti_min = 8.0;  // kbit per time unit, see generate_traffic_matrix
  double ti_max = 16.0;
  int schemes_per_topo = 20;
  int tms_per_scheme = 40;
  int perturbed_links = 21;
  double delta = 0.05;
  SimConfig sim;  // seed is overridden per scenario
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct GenerationReport {
  std::vector<SampleRecord> samples;
  std::vector<std::string> failures;  // "scenario <i>: <reason>"
};

/// Scenario i = (topology t, scheme s, tm k) in that nesting order. The TI of
/// each scenario is uniform in [ti_min, ti_max] and, like the TM and the
/// simulation, seeded from derive_seed(seed, i), so the output is identical
/// for any number of jobs.
inline GenerationReport generate_dataset(const DatasetSpec& spec) {
  require(!spec.topologies.empty(), "at least one topology is required");
  require(spec.ti_min > 0.0 && spec.ti_max >= spec.ti_min, "need 0 < ti_min <= ti_max");
  require(spec.schemes_per_topo >= 1 && spec.tms_per_scheme >= 1, "schemes and tms per scheme must be >= 1");
  spec.sim.validate();

  std::vector<std::vector<RoutingScheme>> schemes;
  for (std::size_t t = 0; t < spec.topologies.size(); ++t)
    schemes.push_back(generate_routing_variants(spec.topologies[t], spec.schemes_per_topo, spec.perturbed_links,
                                                spec.delta, SplitMix64::derive_seed(spec.seed, 0x524f55 + t)));

  const std::size_t per_topo = static_cast<std::size_t>(spec.schemes_per_topo) *
                               static_cast<std::size_t>(spec.tms_per_scheme);
  const std::size_t total = per_topo * spec.topologies.size();
  std::vector<std::optional<SampleRecord>> slots(total);
  std::vector<std::string> errors(total);
  std::mutex log_mu;
  std::size_t done = 0;

  parallel_for(total, spec.jobs, [&](std::size_t i) {
    const auto t = i / per_topo;
    const auto s = (i % per_topo) / static_cast<std::size_t>(spec.tms_per_scheme);
    const auto k = i % static_cast<std::size_t>(spec.tms_per_scheme);
    const std::uint64_t scenario_seed = SplitMix64::derive_seed(spec.seed, i);
    try {
      SplitMix64 rng(scenario_seed);
      const double ti = rng.uniform(spec.ti_min, spec.ti_max);
      const Topology& topo = spec.topologies[t];
      SampleRecord rec;
      rec.id = i;
      rec.topology = topo;
      rec.routing = schemes[t][s];
      rec.traffic = generate_traffic_matrix(topo, ti, rng());
      SimConfig cfg = spec.sim;
      cfg.seed = rng();
      const auto res = simulate(topo, rec.routing, rec.traffic, cfg);
      for (const auto& [p, st] : res.pairs) rec.targets[p] = to_target(st);
      rec.meta = {scenario_seed, cfg.duration, cfg.warmup_fraction, std::string(kSimulatorVersion),
                  std::string(SplitMix64::kName), static_cast<int>(t), static_cast<int>(s), static_cast<int>(k)};
      slots[i] = std::move(rec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
    std::lock_guard lock(log_mu);
    ++done;
    if (!errors[i].empty()) spdlog::warn("scenario {} failed: {}", i, errors[i]);
    if (done % 200 == 0 || done == total) spdlog::info("generated {}/{} scenarios", done, total);
  });

  GenerationReport rep;
  for (std::size_t i = 0; i < total; ++i) {
    if (slots[i]) rep.samples.push_back(std::move(*slots[i]));
    else rep.failures.push_back("scenario " + std::to_string(i) + ": " + errors[i]);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Splitting and batching.

enum class SplitMode { kRandom, kHoldOutTopology, kHoldOutRouting };

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "random") return SplitMode::kRandom;
  if (s == "hold-out-topology") return SplitMode::kHoldOutTopology;
  if (s == "hold-out-routing") return SplitMode::kHoldOutRouting;
  fail(ErrorKind::kInvalidArgument, "unknown split mode '" + s + "'");
}

struct Split {
  std::vector<std::size_t> train;  // indices into the dataset, ascending
  std::vector<std::size_t> test;
};

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

/// random: |test| = round(f n). hold-out-topology: test is every sample of
/// the named topologies, f is ignored. hold-out-routing: whole (topology,
/// scheme) groups move to test, in seeded order, until |test| >= round(f n).
inline Split split_dataset(const std::vector<SampleRecord>& data, double test_fraction, SplitMode mode,
                           std::uint64_t seed, const std::vector<std::string>& holdout_topologies = {}) {
  require(!data.empty(), "cannot split an empty dataset");
  require(test_fraction >= 0.0 && test_fraction <= 1.0, "test_fraction must be in [0,1]");
  const std::size_t n = data.size();
  const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<bool> is_test(n, false);
  switch (mode) {
    case SplitMode::kRandom: {
      const auto idx = shuffled(n, seed);
      for (std::size_t i = 0; i < want; ++i) is_test[idx[i]] = true;
      break;
    }
    case SplitMode::kHoldOutTopology: {
      require(!holdout_topologies.empty(), "hold-out-topology needs at least one topology name");
      const std::set<std::string> names(holdout_topologies.begin(), holdout_topologies.end());
      for (std::size_t i = 0; i < n; ++i) is_test[i] = names.count(data[i].topology.name()) > 0;
      break;
    }
    case SplitMode::kHoldOutRouting: {
      std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < n; ++i)
        groups[{data[i].topology.name(), data[i].meta.scheme_index}].push_back(i);
      std::vector<const std::vector<std::size_t>*> order;
      for (const auto& [k, v] : groups) order.push_back(&v);
      const auto perm = shuffled(order.size(), seed);
      std::size_t taken = 0;
      for (std::size_t g : perm) {
        if (taken >= want) break;
        for (std::size_t i : *order[g]) is_test[i] = true;
        taken += order[g]->size();
      }
      break;
    }
  }
  Split out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.test : out.train).push_back(i);
  require(!out.train.empty(), "split leaves the training side empty");
  require(!out.test.empty(), "split leaves the test side empty");
  return out;
}

template <typename T>
std::vector<T> select(const std::vector<T>& data, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

/// Minibatch as one disconnected graph.
struct Batch {
  ScenarioGraph graph;
  std::vector<PathTargets> targets;
  std::vector<std::size_t> samples;       // dataset indices
  std::vector<std::size_t> link_offsets;  // first link id of each sample
  std::vector<std::size_t> path_offsets;  // first path row of each sample
};

/// Precomputed per-sample graphs and targets.
struct PreparedSample {
  ScenarioGraph graph;
  std::vector<PathTargets> targets;
};

inline std::vector<PreparedSample> prepare(const std::vector<SampleRecord>& data) {
  std::vector<PreparedSample> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back({s.graph(), s.path_targets()});
  return out;
}

inline Batch make_batch(const std::vector<PreparedSample>& data, const std::vector<std::size_t>& idx) {
  require(!idx.empty(), "empty batch");
  Batch b;
  std::vector<const ScenarioGraph*> parts;
  std::size_t links = 0;
  std::size_t paths = 0;
  for (std::size_t i : idx) {
    const auto& s = data.at(i);
    parts.push_back(&s.graph);
    b.targets.insert(b.targets.end(), s.targets.begin(), s.targets.end());
    b.samples.push_back(i);
    b.link_offsets.push_back(links);
    b.path_offsets.push_back(paths);
    links += s.graph.link_count();
    paths += s.graph.path_count();
  }
  b.graph = merge_graphs(parts);
  return b;
}

/// Endless stream of index batches: each epoch is a fresh seeded
/// permutation cut into batches of `batch_size`, the last one possibly
/// shorter.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), seed_(seed) {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(n >= 1, "cannot batch an empty dataset");
  }

  std::vector<std::size_t> next() {
    if (pos_ >= n_ || order_.empty()) {
      order_ = shuffled(n_, SplitMix64::derive_seed(seed_, epoch_++));
      pos_ = 0;
    }
    const std::size_t end = std::min(n_, pos_ + batch_size_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

  [[nodiscard]] std::uint64_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// One epoch of batches (used by tests and evaluation).
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  BatchStream bs(n, batch_size, seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t covered = 0; covered < n;) {
    out.push_back(bs.next());
    covered += out.back().size();
  }
  return out;
}

/// z-score statistics of path demands and link capacities over a dataset.
inline FeatureScaling compute_scaling(const std::vector<SampleRecord>& data) {
  double ds = 0, ds2 = 0, cs = 0, cs2 = 0;
  std::size_t dn = 0, cn = 0;
  for (const auto& s : data) {
    for (const NodePair& p : s.traffic.active_pairs()) {
      const double v = s.traffic.demand(p.src, p.dst);
      ds += v;
      ds2 += v * v;
      ++dn;
    }
    for (const Link& l : s.topology.links()) {
      cs += l.capacity;
      cs2 += l.capacity * l.capacity;
      ++cn;
    }
  }
  FeatureScaling f;
  if (dn > 0) {
    f.demand_mean = ds / static_cast<double>(dn);
    const double var = ds2 / static_cast<double>(dn) - f.demand_mean * f.demand_mean;
    f.demand_std = var > 1e-12 * f.demand_mean * f.demand_mean ? std::sqrt(var) : 1.0;
  }
  if (cn > 0) {
    f.capacity_mean = cs / static_cast<double>(cn);
    const double var = cs2 / static_cast<double>(cn) - f.capacity_mean * f.capacity_mean;
    f.capacity_std = var > 1e-12 * f.capacity_mean * f.capacity_mean ? std::sqrt(var) : 1.0;
  }
  return f;
}

}  // namespace routenet
