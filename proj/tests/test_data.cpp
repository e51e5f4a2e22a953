#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mcepl/data.hpp"

using namespace mcepl;

TEST(Synth, SplitSizes) {
  const auto ds = synth_generate(4, {1, 4, 4}, 100, 0.3, 0);
  EXPECT_EQ(ds.train.size(), 320u);
  EXPECT_EQ(ds.test.size(), 80u);
  EXPECT_EQ(ds.train.features.shape(), (Shape{320, 1, 4, 4}));
  for (double x : ds.train.features) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Synth, ZeroNoiseGivesPrototypes) {
  const auto ds = synth_generate(3, {2, 3, 3}, 10, 0.0, 4);
  const std::size_t per = 18;
  std::map<int, std::vector<double>> proto;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    std::vector<double> s(ds.train.features.data() + i * per, ds.train.features.data() + (i + 1) * per);
    auto [it, fresh] = proto.emplace(ds.train.labels[i], s);
    if (!fresh) {
      EXPECT_EQ(it->second, s);
    }
  }
  EXPECT_EQ(proto.size(), 3u);
}

TEST(Labels, CoverageAndSizes) {
  const auto sets = assign_labels(20, 10, 4, 5);
  EXPECT_EQ(sets, assign_labels(20, 10, 4, 5));
  std::set<int> covered;
  for (const auto& s : sets) {
    EXPECT_EQ(s.size(), 4u);
    covered.insert(s.begin(), s.end());
  }
  EXPECT_EQ(covered.size(), 10u);
  for (const auto& s : assign_labels(3, 5, 5, 1)) EXPECT_EQ(s, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(assign_labels(1, 5, 3, 0), ArgumentError);
}

namespace {

Dataset labelled(std::vector<int> labels, std::size_t classes) {
  const std::size_t n = labels.size();
  Tensor f({n, 1, 1, 1});
  for (std::size_t i = 0; i < n; ++i) f[i] = static_cast<double>(i);
  return {std::move(f), std::move(labels), classes};
}

}  // namespace

TEST(Partition, EvenSplitAndSharedTestSets) {
  const auto train = labelled(std::vector<int>(10, 0), 1);
  const auto test = labelled(std::vector<int>(4, 0), 1);
  const auto plan = partition(train, test, {{0}, {0}, {0}}, 2);
  EXPECT_EQ(plan.train[0].size(), 4u);
  EXPECT_EQ(plan.train[1].size(), 3u);
  EXPECT_EQ(plan.train[2].size(), 3u);
  std::set<std::size_t> all;
  for (const auto& s : plan.train) all.insert(s.begin(), s.end());
  EXPECT_EQ(all.size(), 10u);
  for (const auto& t : plan.test) EXPECT_EQ(t.size(), 4u);

  const auto one = partition(train, test, {{0}}, 2);
  EXPECT_EQ(one.train[0].size(), 10u);
  EXPECT_EQ(plan.train, partition(train, test, {{0}, {0}, {0}}, 2).train);
}

TEST(Partition, UnheldLabelIsArgumentError) {
  const auto train = labelled({0, 1, 1}, 2);
  EXPECT_THROW(partition(train, train, {{0}}, 0), ArgumentError);
}

namespace {

void write_records(const std::filesystem::path& p, std::size_t records, unsigned char label = 3,
                   std::size_t extra = 0) {
  std::ofstream os(p, std::ios::binary);
  for (std::size_t r = 0; r < records; ++r) {
    os.put(static_cast<char>(label));
    for (std::size_t k = 0; k < kCifarPixels; ++k) os.put(static_cast<char>(k % 256));
  }
  for (std::size_t k = 0; k < extra; ++k) os.put(0);
}

}  // namespace

class CifarFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("mcepl_cifar_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
    for (int b = 1; b <= 5; ++b) write_records(dir_ / ("data_batch_" + std::to_string(b) + ".bin"), 2);
    write_records(dir_ / "test_batch.bin", 3);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CifarFiles, LoadsRecords) {
  const auto ds = load_cifar10(dir_);
  EXPECT_EQ(ds.train.size(), 10u);
  EXPECT_EQ(ds.test.size(), 3u);
  EXPECT_EQ(ds.train.features.shape(), (Shape{10, 3, 32, 32}));
  EXPECT_DOUBLE_EQ(ds.train.features[255], 1.0);
  EXPECT_EQ(ds.test.labels[0], 3);
}

TEST_F(CifarFiles, TruncatedRecordNamesFileAndOffset) {
  write_records(dir_ / "data_batch_2.bin", 1, 3, 100);
  try {
    load_cifar10(dir_);
    FAIL() << "expected an input error";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("data_batch_2.bin"), std::string::npos);
    EXPECT_NE(msg.find("3073"), std::string::npos);
  }
}

TEST_F(CifarFiles, BadLabelRejected) {
  write_records(dir_ / "test_batch.bin", 1, 255);
  EXPECT_THROW(load_cifar10(dir_), InputError);
}

TEST_F(CifarFiles, MissingFileRejected) {
  std::filesystem::remove(dir_ / "data_batch_4.bin");
  EXPECT_THROW(load_cifar10(dir_), InputError);
}
