#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "routenet/io.hpp"

#ifndef ROUTENET_CLI_PATH
#define ROUTENET_CLI_PATH "routenet"
#endif

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "routenet_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Exit status of the CLI run inside the scratch directory; stderr goes to err.txt.
int run(const std::string& args) {
  const std::string cmd = "cd '" + scratch().string() + "' && '" ROUTENET_CLI_PATH "' " + args + " > out.txt 2> err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const std::string& name) {
  std::ifstream is(scratch() / name, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Cli, ExitCodesByErrorKind) {
  EXPECT_EQ(run("gen-topo --kind toy5 --out t.topo"), 0);
  EXPECT_EQ(run("gen-tm --topo t.topo --ti 8 --seed 1 --out t.tm"), 0);
  EXPECT_EQ(run("gen-routings --topo t.topo --count 2 --seed 1 --prefix r"), 0);

  EXPECT_EQ(run("gen-tm --topo t.topo --ti 8 --no-such-flag"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("gen-tm --topo t.topo --ti -1 --seed 1 --out x.tm"), 2);
  EXPECT_EQ(run("simulate --topo missing.topo --routing r-000.routing --tm t.tm --seed 1"), 3);
  std::ofstream(scratch() / "bad.tm") << "{\"record\":\"demand\"}\n";
  EXPECT_EQ(run("simulate --topo t.topo --routing r-000.routing --tm bad.tm --seed 1"), 4);

  // One JSON line naming the error kind.
  const auto err = read("err.txt");
  ASSERT_FALSE(err.empty());
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
  const auto j = routenet::Json::parse(err);
  EXPECT_EQ(j.at("error"), "schema");
  EXPECT_EQ(j.at("code"), 4);
}

TEST(Cli, SimulateTwiceIsByteIdenticalAndCarriesProvenance) {
  ASSERT_EQ(run("gen-topo --kind toy5 --out t.topo"), 0);
  ASSERT_EQ(run("gen-tm --topo t.topo --ti 12 --seed 3 --out t.tm"), 0);
  ASSERT_EQ(run("gen-routings --topo t.topo --count 2 --seed 1 --prefix r"), 0);
  ASSERT_EQ(run("simulate --topo t.topo --routing r-001.routing --tm t.tm --seed 7 --duration 500"), 0);
  const auto first = read("out.txt");
  ASSERT_EQ(run("simulate --topo t.topo --routing r-001.routing --tm t.tm --seed 7 --duration 500"), 0);
  EXPECT_EQ(read("out.txt"), first);
  const auto j = routenet::Json::parse(first);
  EXPECT_EQ(j.at("meta").at("seeds").at("seed"), 7);
  EXPECT_EQ(j.at("meta").at("argv").size(), 12u);
  EXPECT_EQ(j.at("meta").at("tool"), std::string(routenet::kToolName) + "/" + routenet::kToolVersion);
}

TEST(Cli, MissingSeedIsDrawnAndRecorded) {
  ASSERT_EQ(run("gen-tm --topo toy5 --ti 9 --out auto.tm"), 0);
  const auto first_line = read("auto.tm").substr(0, read("auto.tm").find('\n'));
  const auto meta = routenet::Json::parse(first_line);
  EXPECT_EQ(meta.at("record"), "meta");
  EXPECT_TRUE(meta.at("seeds").contains("seed"));
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  std::ofstream(scratch() / "run.conf") << "[gen-tm]\nti=20\nseed=9\n";
  ASSERT_EQ(run("--config run.conf gen-tm --topo toy5 --ti 30 --out c.tm"), 0);
  const auto tm = routenet::load_traffic((scratch() / "c.tm").string());
  EXPECT_EQ(tm.ti(), 30.0);
  const auto meta = routenet::Json::parse(read("c.tm").substr(0, read("c.tm").find('\n')));
  EXPECT_EQ(meta.at("seeds").at("seed"), 9);
}

TEST(Cli, HelpDocumentsUnits) {
  ASSERT_EQ(run("gen-tm --help"), 0);
  EXPECT_NE(read("out.txt").find("kbit per time unit"), std::string::npos);
  ASSERT_EQ(run("simulate --help"), 0);
  EXPECT_NE(read("out.txt").find("bits per time unit"), std::string::npos);
  EXPECT_NE(read("out.txt").find("packets"), std::string::npos);
}

TEST(Cli, PaperPresetPrintsHyperparameters) {
  ASSERT_EQ(run("gen-dataset --topologies toy5 --schemes 1 --tms 2 --duration 200 --seed 1 --out d.jsonl"), 0);
  ASSERT_EQ(run("train --train d.jsonl --preset paper --steps 1 --seed 1 --out p.ckpt"), 0);
  const auto out = read("out.txt");
  EXPECT_NE(out.find("l2 weight decay"), std::string::npos);
  EXPECT_NE(out.find("iterations (T)"), std::string::npos);
  EXPECT_NE(out.find("steps             1"), std::string::npos);
}
