#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "routenet/dataset.hpp"

using namespace routenet;

namespace {

DatasetSpec tiny_spec(std::uint64_t seed = 1, int jobs = 1) {
  DatasetSpec s;
  s.topologies = {topologies::toy5(), topologies::toy6()};
  s.schemes_per_topo = 3;
  s.tms_per_scheme = 2;
  s.perturbed_links = 6;
  s.delta = 0.5;
  s.sim.duration = 400;
  s.seed = seed;
  s.jobs = jobs;
  return s;
}

const std::vector<SampleRecord>& tiny() {
  static const auto data = generate_dataset(tiny_spec()).samples;
  return data;
}

std::string temp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Generate, ShapeAndCoverage) {
  const auto& d = tiny();
  ASSERT_EQ(d.size(), 12u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d[i].id, i);
    EXPECT_EQ(d[i].targets.size(), d[i].traffic.active_pairs().size());
    EXPECT_TRUE(validate_routing(d[i].topology, d[i].routing, &d[i].traffic).ok);
  }
  EXPECT_EQ(d[0].topology.name(), "toy5");
  EXPECT_EQ(d[11].topology.name(), "toy6");
  EXPECT_EQ(d[7].meta.scheme_index, 0);
  EXPECT_EQ(d[7].meta.tm_index, 1);
}

TEST(Generate, SingleScenario) {
  DatasetSpec s = tiny_spec();
  s.topologies = {topologies::toy5()};
  s.schemes_per_topo = 1;
  s.tms_per_scheme = 1;
  EXPECT_EQ(generate_dataset(s).samples.size(), 1u);
}

TEST(Generate, IndependentOfJobCount) {
  const auto a = generate_dataset(tiny_spec(1, 1)).samples;
  const auto b = generate_dataset(tiny_spec(1, 3)).samples;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_NE(fingerprint(a), fingerprint(generate_dataset(tiny_spec(2, 1)).samples));
}

TEST(Serialize, RoundTripIsByteIdentical) {
  for (const auto& s : tiny()) {
    const auto line = sample_line(s);
    EXPECT_EQ(sample_line(sample_from_json(Json::parse(line))), line);
  }
}

TEST(Serialize, MissingTargetIsSchemaError) {
  auto j = sample_to_json(tiny()[0]);
  j["targets"].erase(0);
  try {
    sample_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchema);
  }
}

TEST(Shards, GzipRoundTripAndDeterminism) {
  const auto p1 = temp("routenet_ds_a.samples.gz");
  const auto p2 = temp("routenet_ds_b.samples.gz");
  save_samples(p1, tiny());
  save_samples(p2, tiny());
  EXPECT_EQ(slurp(p1), slurp(p2));
  const auto back = load_samples(p1);
  ASSERT_EQ(back.size(), tiny().size());
  EXPECT_EQ(fingerprint(back), fingerprint(tiny()));
  const auto plain = temp("routenet_ds.samples");
  save_samples(plain, tiny());
  EXPECT_EQ(fingerprint(load_samples(plain)), fingerprint(tiny()));
  for (const auto& p : {p1, p2, plain}) std::filesystem::remove(p);
}

TEST(Shards, MultipleMembersConcatenate) {
  std::vector<SampleRecord> many;
  for (std::size_t i = 0; i < kShardRecords + 5; ++i) {
    many.push_back(tiny()[i % tiny().size()]);
    many.back().id = i;
  }
  const auto path = temp("routenet_ds_many.samples.gz");
  save_samples(path, many);
  const auto back = load_samples(path);
  ASSERT_EQ(back.size(), many.size());
  EXPECT_EQ(back.back().id, many.size() - 1);
  std::filesystem::remove(path);
}

TEST(Shards, ProvenanceLineIsSkippedOnLoad) {
  const FileMeta meta{{"routenet", "gen-dataset", "--seed", "1"}, {{"seed", 1}}};
  for (const char* name : {"routenet_ds_meta.samples.gz", "routenet_ds_meta.samples"}) {
    const auto path = temp(name);
    save_samples(path, tiny(), &meta);
    EXPECT_EQ(fingerprint(load_samples(path)), fingerprint(tiny())) << name;
    save_samples(path, {}, &meta);
    EXPECT_TRUE(load_samples(path).empty()) << name;
    std::filesystem::remove(path);
  }
}

TEST(Shards, CorruptLineIsSchemaError) {
  const auto path = temp("routenet_ds_bad.samples");
  std::ofstream(path) << "{\"id\": 1}\n";
  try {
    load_samples(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchema);
  }
  std::filesystem::remove(path);
  try {
    load_samples(temp("routenet_missing.samples.gz"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Split, RandomSizeAndDeterminism) {
  const auto& d = tiny();
  const auto a = split_dataset(d, 0.3, SplitMode::kRandom, 4);
  EXPECT_EQ(a.test.size(), 4u);  // round(0.3 * 12)
  EXPECT_EQ(a.train.size() + a.test.size(), d.size());
  const auto b = split_dataset(d, 0.3, SplitMode::kRandom, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, HoldOutTopologyExcludesItFromTraining) {
  const auto s = split_dataset(tiny(), 0.5, SplitMode::kHoldOutTopology, 1, {"toy6"});
  for (auto i : s.train) EXPECT_NE(tiny()[i].topology.name(), "toy6");
  for (auto i : s.test) EXPECT_EQ(tiny()[i].topology.name(), "toy6");
  EXPECT_EQ(s.test.size(), 6u);
}

TEST(Split, HoldOutRoutingKeepsSchemesTogether) {
  const auto s = split_dataset(tiny(), 0.3, SplitMode::kHoldOutRouting, 2);
  std::set<std::pair<std::string, int>> train_groups, test_groups;
  for (auto i : s.train) train_groups.insert({tiny()[i].topology.name(), tiny()[i].meta.scheme_index});
  for (auto i : s.test) test_groups.insert({tiny()[i].topology.name(), tiny()[i].meta.scheme_index});
  for (const auto& g : test_groups) EXPECT_FALSE(train_groups.count(g));
  EXPECT_GE(s.test.size(), 4u);
}

TEST(Split, EmptySideRejected) {
  EXPECT_THROW(split_dataset(tiny(), 0.0, SplitMode::kRandom, 1), Error);
  EXPECT_THROW(split_dataset(tiny(), 1.0, SplitMode::kRandom, 1), Error);
  EXPECT_THROW(split_dataset(tiny(), 0.5, SplitMode::kHoldOutTopology, 1, {"nsfnet"}), Error);
  EXPECT_THROW(split_dataset({}, 0.5, SplitMode::kRandom, 1), Error);
  EXPECT_THROW(parse_split_mode("stratified"), Error);
}

TEST(Batch, UnionOffsets) {
  PreparedSample a, b;
  a.graph.link_capacity.assign(5, 10000);
  a.graph.paths = {{0, 4}};
  a.graph.path_demand = {1};
  a.graph.pairs = {{0, 1}};
  a.targets.resize(1);
  b.graph.link_capacity.assign(7, 40000);
  b.graph.paths = {{6}, {1, 2}};
  b.graph.path_demand = {1, 2};
  b.graph.pairs = {{0, 1}, {1, 0}};
  b.targets.resize(2);
  const auto batch = make_batch({a, b}, {0, 1});
  EXPECT_EQ(batch.graph.link_count(), 12u);
  EXPECT_EQ(batch.link_offsets, (std::vector<std::size_t>{0, 5}));
  EXPECT_EQ(batch.path_offsets, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(batch.graph.paths[1], (std::vector<int>{11}));
  EXPECT_EQ(batch.graph.paths[2], (std::vector<int>{6, 7}));
  EXPECT_EQ(batch.targets.size(), 3u);
}

TEST(Batch, TwoSampleLossIsSumOfParts) {
  ModelConfig cfg;
  cfg.hidden_dim = 6;
  cfg.readout_hidden = 6;
  cfg.iterations = 3;
  const auto prepared = prepare(tiny());
  const auto mp = init_model(cfg, compute_scaling(tiny()), 5);
  auto loss = [&](const std::vector<std::size_t>& idx) {
    const auto b = make_batch(prepared, idx);
    ad::Tape tape;
    std::map<std::string, ad::Var> vars;
    for (const auto& [n, p] : mp.params) vars.emplace(n, tape.constant(p.value));
    return tape.value(head_loss(tape, forward(tape, vars, mp, b.graph, false, 0), cfg.head, b.targets))[0];
  };
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 7}, {3, 11}, {5, 6}}) {
    const double joint = loss({i, j});
    EXPECT_NEAR(joint, loss({i}) + loss({j}), 1e-9 * std::abs(joint));
  }
}

TEST(Batch, StreamReshufflesAndKeepsShortBatch) {
  const auto e = make_batches(10, 4, 3);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[2].size(), 2u);
  std::set<std::size_t> seen;
  for (const auto& b : e) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 10u);
  BatchStream s(10, 10, 3);
  const auto first = s.next();
  const auto second = s.next();
  EXPECT_NE(first, second);
  EXPECT_EQ(std::set<std::size_t>(second.begin(), second.end()).size(), 10u);
  EXPECT_EQ(make_batches(5, 1, 0).size(), 5u);
  EXPECT_THROW(BatchStream(3, 0, 1), Error);
}

TEST(Scaling, MatchesDirectMoments) {
  const auto f = compute_scaling(tiny());
  double s = 0, n = 0;
  for (const auto& r : tiny())
    for (const auto& p : r.traffic.active_pairs()) {
      s += r.traffic.demand(p.src, p.dst);
      ++n;
    }
  EXPECT_NEAR(f.demand_mean, s / n, 1e-9 * f.demand_mean);
  EXPECT_GT(f.demand_std, 0.0);
  EXPECT_GT(f.capacity_std, 0.0);
}

TEST(Fingerprint, SensitiveToContent) {
  auto d = tiny();
  const auto a = fingerprint(d);
  EXPECT_EQ(a.size(), 64u);
  d[3].targets.begin()->second.dropped += 1;
  EXPECT_NE(fingerprint(d), a);
}
