#pragma once

// Line-oriented structured text for topologies, routings and traffic
// matrices. Every line is one JSON object whose "record" field names its
// kind; an optional leading "meta" record carries tool version, argv and
// seeds.
//
//   .topo     {"record":"topology","name":...,"node_count":N}
//             {"record":"link","id":i,"src":u,"dst":v,"capacity":c,"buffer":b}   (one per link)
//   .routing  {"record":"routing","node_count":N[,"weights":[...]]}
//             {"record":"path","src":u,"dst":v,"links":[...]}                     (one per pair)
//   .tm       {"record":"traffic_matrix","node_count":N,"ti":TI}
//             {"record":"demand","src":u,"dst":v,"bandwidth":A}                  (non-zero entries)

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "routenet/error.hpp"
#include "routenet/net_core.hpp"

namespace routenet {

inline constexpr const char* kToolName = "routenet";
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

/// Provenance stamped into every file the tools write.
struct FileMeta {
  std::vector<std::string> argv;
  std::map<std::string, std::uint64_t> seeds;
};

inline Json meta_record(const FileMeta& m) {
  return {{"record", "meta"},
          {"tool", std::string(kToolName) + "/" + kToolVersion},
          {"argv", m.argv},
          {"seeds", m.seeds}};
}

// ---------------------------------------------------------------------------
// JSON forms shared by the record files and the dataset samples.

inline Json topology_to_json(const Topology& t) {
  Json links = Json::array();
  for (const Link& l : t.links())
    links.push_back({{"id", l.id}, {"src", l.src}, {"dst", l.dst}, {"capacity", l.capacity}, {"buffer", l.buffer}});
  return {{"name", t.name()}, {"node_count", t.node_count()}, {"links", links}};
}

inline Link link_from_json(const Json& j) {
  return Link{j.at("id").get<int>(), j.at("src").get<int>(), j.at("dst").get<int>(), j.at("capacity").get<double>(),
              j.at("buffer").get<int>()};
}

inline Topology topology_from_json(const Json& j) {
  std::vector<Link> links;
  for (const auto& l : j.at("links")) links.push_back(link_from_json(l));
  return Topology(j.at("name").get<std::string>(), j.at("node_count").get<int>(), std::move(links));
}

inline Json routing_to_json(const RoutingScheme& r) {
  Json paths = Json::array();
  for (const auto& [p, links] : r.paths) paths.push_back({{"src", p.src}, {"dst", p.dst}, {"links", links}});
  Json j = {{"paths", paths}};
  if (r.weights) j["weights"] = *r.weights;
  return j;
}

inline RoutingScheme routing_from_json(const Json& j) {
  RoutingScheme r;
  for (const auto& p : j.at("paths"))
    r.paths[{p.at("src").get<int>(), p.at("dst").get<int>()}] = p.at("links").get<std::vector<int>>();
  if (j.contains("weights")) r.weights = j.at("weights").get<std::vector<double>>();
  return r;
}

inline Json traffic_to_json(const TrafficMatrix& tm) {
  Json demand = Json::array();
  for (const NodePair& p : tm.active_pairs())
    demand.push_back({{"src", p.src}, {"dst", p.dst}, {"bandwidth", tm.demand(p.src, p.dst)}});
  return {{"node_count", tm.node_count()}, {"ti", tm.ti()}, {"demand", demand}};
}

inline TrafficMatrix traffic_from_json(const Json& j) {
  TrafficMatrix tm(j.at("node_count").get<int>(), j.at("ti").get<double>());
  for (const auto& d : j.at("demand"))
    tm.set_demand(d.at("src").get<int>(), d.at("dst").get<int>(), d.at("bandwidth").get<double>());
  return tm;
}

// ---------------------------------------------------------------------------
// Record files.

namespace detail {

inline std::vector<Json> read_records(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot read " + path, ErrorKind::kIo);
  std::vector<Json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kSchema, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    require(out.back().is_object() && out.back().contains("record"),
            path + ":" + std::to_string(lineno) + ": line is not a record object", ErrorKind::kSchema);
  }
  return out;
}

inline void write_records(const std::string& path, const std::vector<Json>& records) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write " + path, ErrorKind::kIo);
  for (const auto& r : records) os << r.dump() << '\n';
  require(os.good(), "write failed: " + path, ErrorKind::kIo);
}

template <typename F>
auto schema_guard(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, path + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    fail(ErrorKind::kSchema, path + ": " + e.what());
  }
}

}  // namespace detail

inline void save_topology(const std::string& path, const Topology& t, const FileMeta* meta = nullptr) {
  std::vector<Json> recs;
  if (meta) recs.push_back(meta_record(*meta));
  recs.push_back({{"record", "topology"}, {"name", t.name()}, {"node_count", t.node_count()}});
  for (const Link& l : t.links())
    recs.push_back({{"record", "link"}, {"id", l.id}, {"src", l.src}, {"dst", l.dst}, {"capacity", l.capacity},
                    {"buffer", l.buffer}});
  detail::write_records(path, recs);
}

inline Topology load_topology(const std::string& path) {
  const auto recs = detail::read_records(path);
  return detail::schema_guard(path, [&] {
    std::string name;
    int n = -1;
    std::vector<Link> links;
    for (const auto& r : recs) {
      const auto kind = r.at("record").get<std::string>();
      if (kind == "meta") continue;
      if (kind == "topology") {
        name = r.at("name").get<std::string>();
        n = r.at("node_count").get<int>();
      } else if (kind == "link") {
        links.push_back(link_from_json(r));
      } else {
        fail(ErrorKind::kSchema, "unexpected record '" + kind + "' in topology file");
      }
    }
    require(n >= 0, "missing topology record", ErrorKind::kSchema);
    return Topology(name, n, std::move(links));
  });
}

inline void save_routing(const std::string& path, const RoutingScheme& r, int node_count,
                         const FileMeta* meta = nullptr) {
  std::vector<Json> recs;
  if (meta) recs.push_back(meta_record(*meta));
  Json head = {{"record", "routing"}, {"node_count", node_count}};
  if (r.weights) head["weights"] = *r.weights;
  recs.push_back(head);
  for (const auto& [p, links] : r.paths)
    recs.push_back({{"record", "path"}, {"src", p.src}, {"dst", p.dst}, {"links", links}});
  detail::write_records(path, recs);
}

inline RoutingScheme load_routing(const std::string& path) {
  const auto recs = detail::read_records(path);
  return detail::schema_guard(path, [&] {
    RoutingScheme r;
    bool header = false;
    for (const auto& rec : recs) {
      const auto kind = rec.at("record").get<std::string>();
      if (kind == "meta") continue;
      if (kind == "routing") {
        header = true;
        if (rec.contains("weights")) r.weights = rec.at("weights").get<std::vector<double>>();
      } else if (kind == "path") {
        const NodePair p{rec.at("src").get<int>(), rec.at("dst").get<int>()};
        require(!r.paths.count(p), "duplicate path for pair " + to_string(p), ErrorKind::kSchema);
        r.paths[p] = rec.at("links").get<std::vector<int>>();
      } else {
        fail(ErrorKind::kSchema, "unexpected record '" + kind + "' in routing file");
      }
    }
    require(header, "missing routing record", ErrorKind::kSchema);
    return r;
  });
}

inline void save_traffic(const std::string& path, const TrafficMatrix& tm, const FileMeta* meta = nullptr) {
  std::vector<Json> recs;
  if (meta) recs.push_back(meta_record(*meta));
  recs.push_back({{"record", "traffic_matrix"}, {"node_count", tm.node_count()}, {"ti", tm.ti()}});
  for (const NodePair& p : tm.active_pairs())
    recs.push_back({{"record", "demand"}, {"src", p.src}, {"dst", p.dst}, {"bandwidth", tm.demand(p.src, p.dst)}});
  detail::write_records(path, recs);
}

inline TrafficMatrix load_traffic(const std::string& path) {
  const auto recs = detail::read_records(path);
  return detail::schema_guard(path, [&] {
    std::optional<TrafficMatrix> tm;
    for (const auto& r : recs) {
      const auto kind = r.at("record").get<std::string>();
      if (kind == "meta") continue;
      if (kind == "traffic_matrix") {
        tm.emplace(r.at("node_count").get<int>(), r.at("ti").get<double>());
      } else if (kind == "demand") {
        require(tm.has_value(), "demand record before traffic_matrix record", ErrorKind::kSchema);
        tm->set_demand(r.at("src").get<int>(), r.at("dst").get<int>(), r.at("bandwidth").get<double>());
      } else {
        fail(ErrorKind::kSchema, "unexpected record '" + kind + "' in traffic file");
      }
    }
    require(tm.has_value(), "missing traffic_matrix record", ErrorKind::kSchema);
    return *tm;
  });
}

}  // namespace routenet
