#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "fedre/data.hpp"

namespace fedre::data {
namespace {

std::vector<Sample> sorted_union(const std::vector<Dataset>& parts) {
  std::vector<Sample> all;
  for (const auto& p : parts) all.insert(all.end(), p.samples.begin(), p.samples.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<Sample> sorted(std::vector<Sample> v) {
  std::sort(v.begin(), v.end());
  return v;
}

TEST(MakeBlobs, ToySizes) {
  const auto ds = make_blobs(2, 150, 2, 1.0, 0);
  EXPECT_EQ(ds.size(), 300u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{150, 150}));
  EXPECT_NO_THROW(ds.validate());
}

TEST(MakeBlobs, ZeroSpreadCollapsesToMeans) {
  const auto ds = make_blobs(4, 10, 3, 0.0, 1);
  for (const auto& s : ds.samples) {
    const auto& first = ds.samples[s.label * 10].x;
    EXPECT_EQ(s.x, first);
  }
}

TEST(MakeBlobs, MeansSitOnCircleOfThreeSpreads) {
  const double spread = 0.5;
  const auto ds = make_blobs(3, 4000, 2, spread, 7);
  for (std::size_t c = 0; c < 3; ++c) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < 4000; ++i) {
      mx += ds.samples[c * 4000 + i].x[0] / 4000.0;
      my += ds.samples[c * 4000 + i].x[1] / 4000.0;
    }
    EXPECT_NEAR(std::hypot(mx, my), 3.0 * spread, 0.05);
  }
}

TEST(MakeBlobs, SameSeedSameData) {
  EXPECT_EQ(make_blobs(3, 20, 2, 1.0, 42).samples, make_blobs(3, 20, 2, 1.0, 42).samples);
  EXPECT_NE(make_blobs(3, 20, 2, 1.0, 42).samples, make_blobs(3, 20, 2, 1.0, 43).samples);
}

TEST(MakeBlobs, RejectsDegenerateSizes) {
  EXPECT_THROW(make_blobs(0, 10, 2, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(make_blobs(2, 0, 2, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(make_blobs(2, 10, 2, -1.0, 0), std::invalid_argument);
}

TEST(Partition, EveryModeIsAMultisetPartition) {
  const auto ds = make_blobs(10, 40, 3, 1.0, 5);
  const auto expected = sorted(ds.samples);
  const std::vector<PartitionSpec> specs{
      {Pra{0.1}, 10, 1}, {Pra{10.0}, 7, 2}, {Pat{2}, 10, 3}, {Pat{5}, 4, 4}, {Pra{0.5}, 1, 5}};
  for (const auto& spec : specs) {
    const auto parts = partition(ds, spec);
    ASSERT_EQ(parts.size(), spec.num_clients);
    EXPECT_EQ(sorted_union(parts), expected);
  }
  // Long-tail drops samples first; the client union equals the tailed set.
  const auto tailed = apply_longtail(ds, 10.0, derive_seed(9, 0x7a11));
  EXPECT_EQ(sorted_union(partition(ds, {LongTail{10.0, 0.3}, 6, 9})), sorted(tailed.samples));
}

TEST(Partition, RandomSpecsPreserveMultiset) {
  Rng rng(100);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 2 + rng() % 6;
    const auto ds = make_blobs(C, 5 + rng() % 30, 2, 1.0, rng());
    const std::size_t K = 1 + rng() % 12;
    const double alpha = std::pow(10.0, -2.0 + 4.0 * uniform01(rng));
    EXPECT_EQ(sorted_union(partition(ds, {Pra{alpha}, K, rng()})), sorted(ds.samples)) << "trial " << trial;
  }
}

TEST(Partition, PatGivesExactCategoryCounts) {
  const auto ds = make_blobs(10, 50, 2, 1.0, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t per : {2u, 5u, 10u}) {
      const auto parts = partition(ds, {Pat{per}, 10, seed});
      for (const auto& p : parts) EXPECT_EQ(p.num_present_classes(), per);
    }
  }
}

TEST(Partition, PatRejectsInfeasibleArithmetic) {
  const auto ds = make_blobs(10, 5, 2, 1.0, 0);
  EXPECT_THROW(partition(ds, {Pat{3}, 3, 0}), std::invalid_argument);   // 9 shards over 10 categories
  EXPECT_THROW(partition(ds, {Pat{11}, 10, 0}), std::invalid_argument);  // more than C
  EXPECT_THROW(partition(ds, {Pat{0}, 10, 0}), std::invalid_argument);
  EXPECT_THROW(partition(make_blobs(2, 3, 2, 1.0, 0), {Pat{2}, 4, 0}), std::invalid_argument);
  try {
    partition(ds, {Pat{3}, 3, 0});
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("cannot be split evenly"), std::string::npos);
  }
}

TEST(Partition, PraLargeAlphaTracksGlobalHistogram) {
  const auto ds = make_blobs(4, 2000, 2, 1.0, 3);
  const auto parts = partition(ds, {Pra{1e6}, 5, 11});
  for (const auto& p : parts) {
    const auto counts = p.class_counts();
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(static_cast<double>(counts[c]) / static_cast<double>(p.size()), 0.25, 0.05 * 0.25);
  }
}

TEST(Partition, SmallAlphaConcentratesLabels) {
  const auto ds = make_blobs(10, 60, 2, 1.0, 0);
  auto mean_entropy = [&](double alpha) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      for (const auto& p : partition(ds, {Pra{alpha}, 10, seed})) {
        total += label_entropy(p);
        ++n;
      }
    return total / static_cast<double>(n);
  };
  EXPECT_LT(mean_entropy(0.1), mean_entropy(10.0));
}

TEST(Partition, RejectsBadInputs) {
  const auto ds = make_blobs(2, 5, 2, 1.0, 0);
  EXPECT_THROW(partition(ds.empty_like(), {}), std::invalid_argument);
  EXPECT_THROW(partition(ds, {Pra{0.0}, 2, 0}), std::invalid_argument);
  EXPECT_THROW(partition(ds, {Pra{1.0}, 0, 0}), std::invalid_argument);
}

TEST(LargestRemainder, PreservesTotal) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> shares(1 + rng() % 10);
    for (double& s : shares) s = uniform01(rng);
    const std::size_t total = rng() % 500;
    const auto parts = detail::largest_remainder(total, shares);
    EXPECT_EQ(std::accumulate(parts.begin(), parts.end(), std::size_t{0}), total);
  }
}

TEST(ApplyLongtail, UnitFactorIsIdentity) {
  const auto ds = make_blobs(5, 20, 2, 1.0, 0);
  EXPECT_EQ(apply_longtail(ds, 1.0, 3).samples, ds.samples);
}

TEST(ApplyLongtail, TwoClassEndpoints) {
  const auto out = apply_longtail(make_blobs(2, 100, 2, 1.0, 0), 100.0, 1);
  EXPECT_EQ(out.class_counts(), (std::vector<std::size_t>{100, 1}));
}

TEST(ApplyLongtail, SizesFollowExponentialDecay) {
  for (double factor : {10.0, 50.0, 100.0}) {
    const auto out = apply_longtail(make_blobs(10, 500, 2, 1.0, 0), factor, 2);
    const auto counts = out.class_counts();
    for (std::size_t c = 0; c < 10; ++c) {
      // n_c = n_max · IF^(−c/9), recomputed in closed form
      const double expect = 500.0 * std::exp(-std::log(factor) * static_cast<double>(c) / 9.0);
      EXPECT_LE(std::abs(static_cast<double>(counts[c]) - expect), 0.5 + 1e-9) << "IF=" << factor << " c=" << c;
    }
    if (factor == 50.0) EXPECT_NEAR(static_cast<double>(counts[0]) / static_cast<double>(counts[9]), 50.0, 5.0);
  }
}

TEST(ApplyLongtail, KeptSamplesComeFromInput) {
  const auto ds = make_blobs(4, 30, 2, 1.0, 0);
  const auto out = apply_longtail(ds, 8.0, 5);
  const auto pool = sorted(ds.samples);
  for (const auto& s : out.samples) EXPECT_TRUE(std::binary_search(pool.begin(), pool.end(), s));
  EXPECT_THROW(apply_longtail(ds, 0.5, 0), std::invalid_argument);
}

TEST(TrainTestSplit, StratifiedThreeToOne) {
  const auto ds = make_blobs(3, 40, 2, 1.0, 0);
  const auto tt = train_test_split(ds, 0.75, 9);
  EXPECT_EQ(tt.train.class_counts(), (std::vector<std::size_t>{30, 30, 30}));
  EXPECT_EQ(tt.test.class_counts(), (std::vector<std::size_t>{10, 10, 10}));
  EXPECT_EQ(sorted_union({tt.train, tt.test}), sorted(ds.samples));
  EXPECT_THROW(train_test_split(ds, 0.0, 0), std::invalid_argument);
}

TEST(LabelEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(label_entropy(make_blobs(1, 5, 1, 1.0, 0)), 0.0);
  EXPECT_NEAR(label_entropy(make_blobs(4, 5, 1, 1.0, 0)), std::log(4.0), 1e-15);
}

TEST(Csv, RoundTripIsExact) {
  const auto ds = make_blobs(3, 7, 4, 1.3, 12);
  const auto path = (std::filesystem::temp_directory_path() / "fedre_data_roundtrip.csv").string();
  write_csv(ds, path);
  const auto back = read_csv(path, 3);
  EXPECT_EQ(back.dim, 4u);
  EXPECT_EQ(back.samples, ds.samples);
  EXPECT_EQ(read_csv(path).num_classes, 3u);
  std::filesystem::remove(path);
}

TEST(Csv, RejectsMalformedFiles) {
  const auto path = (std::filesystem::temp_directory_path() / "fedre_data_bad.csv").string();
  {
    std::ofstream(path) << "a,b,label\n1,2,0\n";
  }
  EXPECT_THROW(read_csv(path), std::runtime_error);
  {
    std::ofstream(path) << "x0,x1,label\n1,2,0\n1,0\n";
  }
  EXPECT_THROW(read_csv(path), std::runtime_error);
  {
    std::ofstream(path) << "x0,label\n1,5\n";
  }
  EXPECT_THROW(read_csv(path, 2), std::invalid_argument);
  std::filesystem::remove(path);
  EXPECT_THROW(read_csv(path), std::runtime_error);
}

TEST(Dataset, ValidateRejectsBadSamples) {
  Dataset ds{2, 2, {{{1.0, 2.0}, 3}}};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.samples = {{{1.0}, 0}};
  EXPECT_THROW(ds.validate(), ShapeError);
  ds.samples = {{{1.0, NAN}, 0}};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace fedre::data
