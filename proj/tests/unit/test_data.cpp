#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pct/data.hpp"
#include "pct/error.hpp"
#include "test_util.hpp"

using namespace pct;
namespace fs = std::filesystem;

TEST(SyntheticPair, SizesAndCounts) {
  Rng rng(0);
  const auto [source, target] = make_synthetic_pair(rng);
  EXPECT_EQ(source.size(), 300u);
  EXPECT_EQ(target.size(), 300u);
  EXPECT_EQ(source.num_classes(), 2u);
  EXPECT_EQ(source.dim(), 2u);
  EXPECT_EQ(source.class_counts(), (std::vector<std::size_t>{250, 50}));
  ASSERT_TRUE(target.hidden_labels());
  std::size_t zeros = std::count(target.hidden_labels()->begin(), target.hidden_labels()->end(), 0u);
  EXPECT_EQ(zeros, 50u);
}

TEST(SyntheticPair, DeterministicPerSeed) {
  Rng a(3), b(3), c(4);
  const auto pa = make_synthetic_pair(a), pb = make_synthetic_pair(b), pc = make_synthetic_pair(c);
  EXPECT_EQ(pa.first.features(), pb.first.features());
  EXPECT_EQ(pa.second.features(), pb.second.features());
  EXPECT_NE(pa.first.features(), pc.first.features());
}

TEST(SyntheticPair, ClassMeansMatchGenerator) {
  // Component means at 1e5 samples each, via the same sampler the pair uses.
  Rng rng(11);
  const Matrix cov = synthetic_covariance();
  const double means[4][2] = {{7, 5.5}, {4, 3.5}, {7.5, 3.5}, {4.4, 5}};
  for (const auto& mu : means) {
    const Matrix x = gaussian_sample(rng, mu, cov, 100000);
    for (int c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, c);
      EXPECT_NEAR(s / x.rows(), mu[c], 0.1);
    }
  }
  // And the pair's own per-class means at n = 250 sit near the same centres.
  Rng prng(12);
  const auto [source, target] = make_synthetic_pair(prng);
  double s0[2] = {0, 0};
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source.labels()[i] == 0)
      for (int c = 0; c < 2; ++c) s0[c] += source.features()(i, c) / 250.0;
  EXPECT_NEAR(s0[0], 7.0, 0.15);
  EXPECT_NEAR(s0[1], 5.5, 0.15);
}

TEST(Subsample, ThirtyPercentOfFirstHalf) {
  Rng rng(0);
  const auto [source, target] = make_synthetic_pair(rng);
  Rng srng(1);
  const LabeledDataset sub = subsample_classes(source, 0.3, srng);
  EXPECT_EQ(sub.class_counts(), (std::vector<std::size_t>{75, 50}));
}

TEST(Subsample, FullFractionKeepsMultiset) {
  Rng rng(0);
  const auto [source, target] = make_synthetic_pair(rng);
  Rng srng(1);
  const LabeledDataset sub = subsample_classes(source, 1.0, srng);
  auto rows = [](const LabeledDataset& d) {
    std::multiset<std::tuple<double, double, std::size_t>> s;
    for (std::size_t i = 0; i < d.size(); ++i)
      s.insert({d.features()(i, 0), d.features()(i, 1), d.labels()[i]});
    return s;
  };
  EXPECT_EQ(rows(sub), rows(source));
}

TEST(Subsample, ReducesOnlyFirstHalfOfManyClasses) {
  Rng rng(2);
  const std::size_t k = 31;
  Matrix x(k * 10, 1);
  Labels y(k * 10);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = i % k;
    x(i, 0) = double(i);
  }
  const LabeledDataset sub = subsample_classes(LabeledDataset(x, y, k), 0.3, rng);
  const auto counts = sub.class_counts();
  for (std::size_t c = 0; c < k; ++c) EXPECT_EQ(counts[c], c < 15 ? 3u : 10u) << "class " << c;
  // Feature values are untouched.
  for (std::size_t i = 0; i < sub.size(); ++i)
    EXPECT_EQ(std::size_t(sub.features()(i, 0)) % k, sub.labels()[i]);
}

TEST(Subsample, EmptyClassIsInvalidState) {
  Matrix x(3, 1);
  const LabeledDataset ds(x, Labels{1, 1, 1}, 2);
  Rng rng(0);
  EXPECT_THROW(subsample_classes(ds, 0.5, rng), InvalidState);
}

TEST(Embeddings, LabeledCsvParses) {
  test::TempDir dir;
  const fs::path p = dir.path / "emb.csv";
  test::write_file(p, "a,b,label\n1.5,2,cat\n-3,4e-1,dog\n0,0,cat\n");
  const auto data = load_embeddings(p, EmbeddingSchema{{}, "label"}, true);
  const auto& ds = std::get<LabeledDataset>(data);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.labels(), (Labels{0, 1, 0}));
  EXPECT_EQ(ds.label_names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_DOUBLE_EQ(ds.features()(1, 1), 0.4);
  EXPECT_TRUE(fs::exists(label_sidecar_path(p)));
}

TEST(Embeddings, SidecarKeepsMappingAcrossFiles) {
  test::TempDir dir;
  const fs::path a = dir.path / "a.csv";
  test::write_file(a, "x,label\n1,10\n2,2\n");
  load_embeddings(a, EmbeddingSchema{{}, "label"}, true);
  // Numeric labels sort numerically: 2 -> 0, 10 -> 1.
  const auto data = load_embeddings(a, EmbeddingSchema{{}, "label"});
  const auto& ds = std::get<LabeledDataset>(data);
  EXPECT_EQ(ds.labels(), (Labels{1, 0}));
}

TEST(Embeddings, NoLabelColumnGivesUnlabeled) {
  test::TempDir dir;
  const fs::path p = dir.path / "t.csv";
  test::write_file(p, "f0,f1\n1,2\n3,4\n");
  const auto data = load_embeddings(p, EmbeddingSchema{});
  ASSERT_TRUE(std::holds_alternative<UnlabeledDataset>(data));
  EXPECT_EQ(std::get<UnlabeledDataset>(data).size(), 2u);
}

TEST(Embeddings, SelectedColumns) {
  test::TempDir dir;
  const fs::path p = dir.path / "t.csv";
  test::write_file(p, "id,f0,\"f 1\"\n7,1,2\n8,3,4\n");
  const auto data = load_embeddings(p, EmbeddingSchema{{"f 1", "f0"}, std::nullopt});
  const auto& ds = std::get<UnlabeledDataset>(data);
  EXPECT_EQ(ds.features(), (Matrix{{2, 1}, {4, 3}}));
}

TEST(Embeddings, MalformedRowReportsLine) {
  test::TempDir dir;
  const fs::path p = dir.path / "bad.csv";
  test::write_file(p, "f0,f1\n1,2\n3,abc\n");
  try {
    load_embeddings(p, EmbeddingSchema{});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Embeddings, InconsistentWidthIsSchemaError) {
  test::TempDir dir;
  const fs::path p = dir.path / "bad.csv";
  test::write_file(p, "f0,f1\n1,2\n3\n");
  EXPECT_THROW(load_embeddings(p, EmbeddingSchema{}), SchemaError);
  EXPECT_THROW(load_embeddings(p, EmbeddingSchema{{"nope"}, std::nullopt}), SchemaError);
}

TEST(Embeddings, SaveLoadRoundTripIsExact) {
  test::TempDir dir;
  Rng rng(5);
  Matrix x(20, 3);
  for (auto& v : x.data()) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  Labels y(20);
  for (auto& v : y) v = rng.uniform_index(3);
  const fs::path p = dir.path / "rt.csv";
  save_embeddings(p, x, &y);
  const auto data = load_embeddings(p, EmbeddingSchema{{}, "label"});
  const auto& ds = std::get<LabeledDataset>(data);
  EXPECT_EQ(ds.features(), x);
  EXPECT_EQ(ds.labels(), y);
}

TEST(LabelColumn, RoundTrip) {
  test::TempDir dir;
  const Labels y{0, 2, 1, 1};
  save_label_column(dir.path / "y.csv", y);
  EXPECT_EQ(load_label_column(dir.path / "y.csv"), y);
}

TEST(BatchSampler, EpochPartition) {
  BatchSampler s(4, 2, 1);
  std::set<std::size_t> seen;
  for (int b = 0; b < 2; ++b)
    for (auto i : s.next_batch()) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen, (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(BatchSampler, RemainderBatch) {
  BatchSampler s(5, 2, 1);
  EXPECT_EQ(s.next_batch().size(), 2u);
  EXPECT_EQ(s.next_batch().size(), 2u);
  EXPECT_EQ(s.next_batch().size(), 1u);
  EXPECT_EQ(s.next_batch().size(), 2u);
}

TEST(BatchSampler, EveryEpochIsAPermutation) {
  BatchSampler s(37, 8, 3);
  for (int epoch = 0; epoch < 5; ++epoch) {
    std::vector<std::size_t> all;
    for (int b = 0; b < 5; ++b) {
      const auto batch = s.next_batch();
      ASSERT_FALSE(batch.empty());
      all.insert(all.end(), batch.begin(), batch.end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 37; ++i) EXPECT_EQ(all[i], i);
  }
}

TEST(BatchSampler, DeterministicPerSeed) {
  BatchSampler a(50, 7, 9), b(50, 7, 9);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(a.next_batch(), b.next_batch());
}

TEST(Accuracy, Basic) {
  EXPECT_DOUBLE_EQ(accuracy(Labels{0, 1, 1, 0}, Labels{0, 1, 0, 0}), 0.75);
}
