#pragma once

// Helpers shared by the subcommands: provenance, seeds, file output and the
// error-to-exit-code mapping.

#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "routenet/io.hpp"
#include "routenet/optimizer.hpp"
#include "routenet/training.hpp"

namespace routenet::cli {

struct Globals {
  std::vector<std::string> argv;
  int jobs = 0;  // 0: subcommand default
};

inline Globals& globals() {
  static Globals g;
  return g;
}

/// Parallelism for generation-like work (all cores unless --jobs is given).
inline int gen_jobs() { return globals().jobs > 0 ? globals().jobs : default_jobs(); }

/// Parallelism for training (1 unless --jobs is given).
inline int train_jobs() { return globals().jobs > 0 ? globals().jobs : 1; }

/// Returns the user's seed, or draws one and logs it so the run can be repeated.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, const char* what = "seed") {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  spdlog::info("no --{} given; using {}", what, s);
  return s;
}

inline FileMeta make_meta(std::map<std::string, std::uint64_t> seeds = {}) {
  return FileMeta{globals().argv, std::move(seeds)};
}

inline void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write " + path, ErrorKind::kIo);
  os << text;
  require(os.good(), "write failed: " + path, ErrorKind::kIo);
}

/// JSON document with a leading provenance object.
inline void write_json(const std::string& path, Json body, const FileMeta& meta) {
  Json doc = {{"meta", meta_record(meta)}};
  for (auto& [k, v] : body.items()) doc[k] = std::move(v);
  write_text(path, doc.dump(1) + "\n");
}

/// A topology argument is either a built-in name or a .topo file.
inline Topology topology_arg(const std::string& s) {
  if (auto t = topologies::by_name(s)) return *t;
  return load_topology(s);
}

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kRuntime: return "runtime";
    case ErrorKind::kNumerical: return "numerical";
  }
  return "runtime";
}

/// One line on stderr: {"error":<kind>,"code":<exit code>,"message":...}.
inline int report_error(ErrorKind kind, const std::string& message) {
  const Json j = {{"error", kind_name(kind)}, {"code", static_cast<int>(kind)}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
  return static_cast<int>(kind);
}

inline SimConfig sim_config(double duration, double warmup, const std::string& sizes, bool exclude_service,
                            std::uint64_t seed) {
  SimConfig c;
  c.duration = duration;
  c.warmup_fraction = warmup;
  if (sizes == "bimodal") c.packet_sizes = PacketSizeModel::kBimodal;
  else if (sizes == "exponential") c.packet_sizes = PacketSizeModel::kExponential;
  else fail(ErrorKind::kInvalidArgument, "unknown packet size model '" + sizes + "'");
  c.buffer_includes_in_service = !exclude_service;
  c.seed = seed;
  c.validate();
  return c;
}

inline Json sim_result_to_json(const SimResult& r) {
  Json pairs = Json::array();
  for (const auto& [p, st] : r.pairs) {
    const auto d = summarize(st);
    pairs.push_back({{"src", p.src},
                     {"dst", p.dst},
                     {"delivered", st.delivered},
                     {"dropped", st.dropped},
                     {"mean_delay", d.mean_delay},
                     {"delay_variance", d.delay_variance},
                     {"mean_log_delay", d.mean_log_delay},
                     {"loss_ratio", d.loss_ratio}});
  }
  Json links = Json::array();
  for (std::size_t i = 0; i < r.links.size(); ++i) {
    const auto& l = r.links[i];
    links.push_back({{"id", i},
                     {"arrivals", l.arrivals},
                     {"departures", l.departures},
                     {"drops", l.drops},
                     {"in_system_at_end", l.in_system_at_end}});
  }
  return {{"pairs", pairs}, {"links", links}};
}

inline Json kpis_to_json(const PairKpis& k) {
  Json out = Json::array();
  for (const auto& [p, v] : k)
    out.push_back({{"src", p.src}, {"dst", p.dst}, {"delay", v.delay}, {"jitter", v.jitter},
                   {"loss_ratio", v.loss_ratio}});
  return out;
}

}  // namespace routenet::cli
