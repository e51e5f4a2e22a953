#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcepl/config.hpp"
#include "mcepl/experiment.hpp"

using namespace mcepl;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mcepl_cfg_" + name);
  std::filesystem::remove_all(p);
  return p;
}

const char* kSmallRun = R"(
n = 4
classes = 4
c = 2
per_class = 10
channels = 1
image_size = 8
conv1 = 4
conv2 = 8
hidden = 16
batch_size = 8
eval_interval = 2
lr_mask = 0.05
)";

}  // namespace

TEST(ParseConfig, Examples) {
  const auto c = parse_config("n = 20\np = 0.5\n");
  EXPECT_EQ(c.n, 20u);
  EXPECT_DOUBLE_EQ(c.topology.p, 0.5);
  EXPECT_DOUBLE_EQ(parse_config("lambda = 0.001").lambda, 0.001);
  const auto d = parse_config("# comment\nalgorithm = mcepl, ind_mask  # trailing\nsweep_topologies = ring,0.3\n");
  EXPECT_EQ(d.algorithms, (std::vector<Algorithm>{Algorithm::mcepl, Algorithm::ind_mask}));
  EXPECT_EQ(d.sweep_topologies.size(), 2u);
  EXPECT_TRUE(d.sweep_topologies[0].ring);
}

TEST(ParseConfig, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("n = 20\nretention = 0.4,0.4,0.3\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("seed = 1\nbogus = 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("n = twenty\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("n = 4\nn = 5\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(message("algorithm = sgd\n").empty());
}

TEST(ParseConfig, CanonicalTextRoundTrips) {
  auto c = parse_config(kSmallRun);
  c.retention = {0.1, 0.25, 0.3, 0.4};
  c.algorithms = {Algorithm::par_weipru, Algorithm::dsgd};
  c.topology = {true, 0.5};
  EXPECT_EQ(parse_config(to_config_text(c)), c);
  EXPECT_EQ(parse_config(to_config_text(RunConfig{})), RunConfig{});
}

TEST(RunExperiment, RoundZeroWritesOnlyInitialRows) {
  auto cfg = parse_config(std::string(kSmallRun) + "rounds = 0\n");
  cfg.out = scratch("round0").string();
  std::ostringstream err;
  ASSERT_EQ(run_experiment(cfg, err), kExitOk) << err.str();
  std::istringstream csv(slurp(std::filesystem::path(cfg.out) / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "round,agent,accuracy,loss,payload_bits,header_bits");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(line.substr(0, 2), "0,");
    ++rows;
  }
  EXPECT_EQ(rows, 5u);
  const auto manifest = slurp(std::filesystem::path(cfg.out) / "manifest.txt");
  EXPECT_NE(manifest.find("retention = "), std::string::npos);
  std::filesystem::remove_all(cfg.out);
}

TEST(RunExperiment, RerunIsByteIdentical) {
  auto cfg = parse_config(std::string(kSmallRun) + "rounds = 3\nalgorithm = mcepl,avr_weipru\n");
  cfg.out = scratch("rerun_a").string();
  std::ostringstream err;
  ASSERT_EQ(run_experiment(cfg, err), kExitOk) << err.str();
  const auto a = std::filesystem::path(cfg.out);
  // The manifest alone reproduces the run.
  auto again = parse_config(slurp(a / "manifest.txt"));
  again.out = scratch("rerun_b").string();
  ASSERT_EQ(run_experiment(again, err), kExitOk) << err.str();
  const auto b = std::filesystem::path(again.out);
  for (const char* f : {"metrics_mcepl.csv", "metrics_avr_weipru.csv", "sparsity_mcepl.csv", "graph.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(RunExperiment, SweepWritesOneFilePerTopology) {
  auto cfg = parse_config(std::string(kSmallRun) + "rounds = 1\nexperiment = sweep\n");
  cfg.out = scratch("sweep").string();
  std::ostringstream err;
  ASSERT_EQ(run_experiment(cfg, err), kExitOk) << err.str();
  for (const char* f : {"metrics_ring.csv", "metrics_p0.3.csv", "metrics_p0.5.csv", "metrics_p0.7.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(cfg.out) / f)) << f;
  }
  std::filesystem::remove_all(cfg.out);
}

TEST(RunExperiment, MissingCifarDirectoryIsConfigError) {
  EXPECT_THROW(parse_config("dataset = cifar10\ncifar_path = /nonexistent/cifar\n"), ConfigError);
}
