#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "evc/cifar.hpp"
#include "evc/error.hpp"
#include "evc/train.hpp"

namespace evc {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("evc_cifar_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CifarRecord record(std::uint8_t coarse, std::uint8_t fine, std::uint8_t fill) {
  CifarRecord r{coarse, fine, std::vector<std::uint8_t>(kCifarPixels, fill)};
  r.pixels.front() = 0;
  r.pixels.back() = 255;
  return r;
}

TEST(Cifar, TwoRecordFixtureRoundTrips) {
  const auto path = scratch_dir("roundtrip") / "train.bin";
  write_cifar100_records(path, {record(3, 17, 10), record(9, 42, 20)});
  EXPECT_EQ(fs::file_size(path), 2 * kCifarRecordBytes);
  const auto back = read_cifar100_records(path, 2);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].coarse, 3);
  EXPECT_EQ(back[0].fine, 17);
  EXPECT_EQ(back[1].fine, 42);
  EXPECT_EQ(back[1].pixels.front(), 0);
  EXPECT_EQ(back[1].pixels.back(), 255);
  EXPECT_EQ(back[1].pixels[1], 20);

  const auto batches = load_cifar100(path);
  ASSERT_EQ(batches.size(), 1u);
  EXPECT_EQ(batches[0].labels, (std::vector<int>{17, 42}));
  EXPECT_EQ(batches[0].images.shape(), (std::vector<std::size_t>{2, 3, 32, 32}));
  EXPECT_DOUBLE_EQ(batches[0].images[0], 0.0);
  EXPECT_DOUBLE_EQ(batches[0].images[2 * kCifarPixels - 1], 1.0);
  EXPECT_DOUBLE_EQ(batches[0].images[1], 10.0 / 255.0);
}

TEST(Cifar, EmptyFilterGivesEmptyDataset) {
  const auto path = scratch_dir("empty") / "train.bin";
  write_cifar100_records(path, {record(0, 1, 5)});
  CifarLoadOptions opt;
  opt.class_filter = std::set<int>{};
  EXPECT_TRUE(load_cifar100(path, opt).empty());
}

TEST(Cifar, FilterRelabelsContiguouslyAndCapsPerClass) {
  const auto path = scratch_dir("filter") / "train.bin";
  write_cifar100_records(path, {record(0, 50, 1), record(0, 7, 2), record(0, 50, 3), record(0, 9, 4),
                                record(0, 50, 5)});
  CifarLoadOptions opt;
  opt.class_filter = std::set<int>{7, 50};
  opt.per_class_limit = 2;
  opt.batch_size = 2;
  const auto batches = load_cifar100(path, opt);
  const auto all = concat_batches(batches);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(all.labels, (std::vector<int>{1, 0, 1}));
  EXPECT_DOUBLE_EQ(all.images[2 * kCifarPixels + 1], 3.0 / 255.0);
}

TEST(Cifar, ShuffleIsSeedDeterministic) {
  const auto path = scratch_dir("shuffle") / "train.bin";
  std::vector<CifarRecord> recs;
  for (int i = 0; i < 20; ++i) recs.push_back(record(0, static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(i)));
  write_cifar100_records(path, recs);
  CifarLoadOptions opt;
  opt.shuffle_seed = 5;
  const auto a = concat_batches(load_cifar100(path, opt));
  const auto b = concat_batches(load_cifar100(path, opt));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.labels, concat_batches(load_cifar100(path)).labels);
}

TEST(Cifar, TruncationReportsByteOffset) {
  const auto path = scratch_dir("truncated") / "train.bin";
  write_cifar100_records(path, {record(0, 1, 5), record(0, 2, 6)});
  fs::resize_file(path, 2 * kCifarRecordBytes - 100);
  try {
    read_cifar100_records(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset " + std::to_string(2 * kCifarRecordBytes - 100)),
              std::string::npos)
        << e.what();
  }
}

TEST(Cifar, RecordCountMismatchIsAFormatError) {
  const auto path = scratch_dir("count") / "train.bin";
  write_cifar100_records(path, {record(0, 1, 5), record(0, 2, 6)});
  try {
    read_cifar100_records(path, 50000);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_cifar100_records(path.parent_path() / "absent.bin"), MissingDataError);
}

TEST(Cifar, OutOfRangeFineLabelIsAFormatError) {
  const auto path = scratch_dir("label") / "train.bin";
  write_cifar100_records(path, {record(0, 100, 5)});
  EXPECT_THROW(read_cifar100_records(path), FormatError);
}

// Two synthetic "classes" that differ in a colour channel, written in the
// binary layout and trained end to end through the conv + HLA model.
TEST(Cifar, SyntheticFixtureTrainsThroughTheDemoPipeline) {
  const auto dir = scratch_dir("demo");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> noise(0, 60);
  auto make = [&](int count) {
    std::vector<CifarRecord> out;
    for (int i = 0; i < count; ++i) {
      const std::uint8_t fine = i % 2 == 0 ? 4 : 30;
      CifarRecord r{0, fine, std::vector<std::uint8_t>(kCifarPixels)};
      for (std::size_t p = 0; p < kCifarPixels; ++p) {
        const bool red = p < kCifarSide * kCifarSide;
        r.pixels[p] = static_cast<std::uint8_t>(noise(rng) + ((fine == 4) == red ? 150 : 40));
      }
      out.push_back(std::move(r));
    }
    return out;
  };
  write_cifar100_records(dir / "train.bin", make(40));
  write_cifar100_records(dir / "test.bin", make(20));

  std::istringstream text(
      "dataset = cifar100\n"
      "data_dir = data\n"
      "classes = 4,30\n"
      "train_per_class = 20\n"
      "test_per_class = 10\n"
      "conv_channels = 4\n"
      "hla_reduction = 2\n"
      "pool = 8\n"
      "epochs = 3\n"
      "batch_size = 8\n"
      "learning_rate = 0.05\n"
      "seed = 3\n");
  auto cfg = parse_demo_config(text);
  fs::rename(dir / "train.bin", dir / "train.tmp");
  EXPECT_THROW(run_train_demo(cfg, dir.parent_path() / "missing"), MissingDataError);
  fs::create_directories(dir / "data");
  fs::rename(dir / "train.tmp", dir / "data" / "train.bin");
  fs::rename(dir / "test.bin", dir / "data" / "test.bin");

  const auto log = run_train_demo(cfg, dir);
  ASSERT_EQ(log.size(), 4u);
  EXPECT_GE(log.back().test_acc, 0.9);
  EXPECT_LT(log.back().train_loss, log.front().train_loss);
}

}  // namespace
}  // namespace evc
