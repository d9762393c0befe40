#include <gtest/gtest.h>

#include <cmath>

#include "gigassl/datagen.hpp"
#include "temp_dir.hpp"

using namespace gigassl;

namespace {

GenConfig compact(std::size_t slides, std::uint64_t seed) {
  GenConfig g;
  g.n_slides = slides;
  g.n_tiles = 20;
  g.n_augs = 4;
  g.feat_dim = 8;
  g.content_dims = 4;
  g.grid_extent = 5 * kTileStride;
  g.seed = seed;
  return g;
}

std::vector<EmbeddingBank> in_memory(const GenConfig& g, std::vector<int>* labels = nullptr) {
  const auto shared = datagen_detail::shared_state(g);
  std::vector<EmbeddingBank> banks;
  for (std::size_t s = 0; s < g.n_slides; ++s) {
    int label = 0;
    banks.push_back(generate_slide(g, s, shared, &label));
    if (labels) labels->push_back(label);
  }
  return banks;
}

}  // namespace

TEST(Datagen, SameSeedGivesByteIdenticalCorpus) {
  TempDir a, b;
  const auto g = compact(6, 5);
  generate_corpus(g, a.path(), 1);
  generate_corpus(g, b.path(), 3);
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename();
    ASSERT_TRUE(std::filesystem::exists(b.path() / name)) << name;
    EXPECT_EQ(io::read_file(entry.path()), io::read_file(b.path() / name)) << name;
  }
  EXPECT_TRUE(std::filesystem::exists(a / "labels.csv"));
  EXPECT_TRUE(std::filesystem::exists(a / "corpus.json"));
  EXPECT_EQ(list_banks(a.path()).size(), 6u);
}

TEST(Datagen, BanksAreValidAndLabelsBalanced) {
  TempDir dir;
  auto g = compact(7, 1);
  g.n_classes = 3;
  generate_corpus(g, dir.path());
  const auto labels = read_labels(dir / "labels.csv");
  ASSERT_EQ(labels.size(), 7u);
  std::vector<int> count(3, 0);
  for (const auto& [id, label] : labels) ++count[label];
  EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1);
  for (const auto& p : list_banks(dir.path())) {
    const auto bank = load_bank(p);
    EXPECT_EQ(bank.n_augs, g.n_augs);
    EXPECT_EQ(bank.n_tiles, g.n_tiles);
    EXPECT_EQ(bank.provenance.at("label").get<int>(), labels.at(bank.slide_id));
  }
}

TEST(Datagen, SliceZeroHoldsBaseFeaturesAndSlicesRotateStyleOnly) {
  auto g = compact(2, 9);
  g.nuisance_strength = 1.0;
  g.aug_noise = 0.0;
  const auto banks = in_memory(g);
  const auto shared = datagen_detail::shared_state(g);
  for (double a : shared.angles[0]) EXPECT_EQ(a, 0.0);
  for (const auto& b : banks) {
    // The same grid cell in slice 0 and slice k: content equal, style planes
    // rotated (norm kept).
    for (std::size_t k = 1; k < b.n_augs; ++k)
      for (std::size_t t = 0; t < b.n_tiles; ++t)
        for (std::size_t u = 0; u < b.n_tiles; ++u) {
          if (b.coord(k, t) != b.coord(0, u)) continue;
          const auto fk = b.feature(k, t), f0 = b.feature(0, u);
          for (std::size_t d = 0; d < g.content_dims; ++d) EXPECT_NEAR(fk[d], f0[d], 1e-6);
          for (std::size_t d = g.content_dims; d < g.feat_dim; d += 2)
            EXPECT_NEAR(std::hypot(fk[d], fk[d + 1]), std::hypot(f0[d], f0[d + 1]), 1e-5);
        }
  }
}

TEST(Datagen, CheckerboardAndBlockArrangementsShareCounts) {
  std::vector<int> c0(2, 0), c1(2, 0);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i < 5; ++i) {
      ++c0[datagen_detail::arrangement(0, i, j, 5, 2)];
      ++c1[datagen_detail::arrangement(1, i, j, 5, 2)];
    }
  EXPECT_EQ(c0, c1);
  EXPECT_NE(datagen_detail::arrangement(0, 0, 0, 5, 2), datagen_detail::arrangement(0, 1, 0, 5, 2));
  EXPECT_EQ(datagen_detail::arrangement(1, 0, 0, 5, 2), datagen_detail::arrangement(1, 1, 0, 5, 2));
}

TEST(MarginalEquality, SpatialOnlyCorpusPasses) {
  std::vector<int> labels;
  const auto banks = in_memory(compact(100, 17), &labels);
  EXPECT_LT(verify_marginal_equality(banks, labels), 3.0);
}

TEST(MarginalEquality, FrequencyShiftIsDetected) {
  auto g = compact(100, 17);
  g.class_frequency_shift = 0.3;
  std::vector<int> labels;
  const auto banks = in_memory(g, &labels);
  EXPECT_GT(verify_marginal_equality(banks, labels), 10.0);
}

TEST(MarginalEquality, SingleClassIsZero) {
  auto g = compact(6, 2);
  g.n_classes = 1;
  std::vector<int> labels;
  const auto banks = in_memory(g, &labels);
  EXPECT_EQ(verify_marginal_equality(banks, labels), 0.0);
}

TEST(MarginalEquality, FromDirectory) {
  TempDir dir;
  generate_corpus(compact(20, 4), dir.path());
  EXPECT_LT(verify_marginal_equality(dir.path()), 3.0);
}

TEST(GenConfig, Validation) {
  auto g = compact(4, 0);
  g.n_tiles = 26;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = compact(3, 0);
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = compact(4, 0);
  g.feat_dim = 1;
  g.content_dims = 1;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = compact(4, 0);
  g.content_dims = 7;
  g.nuisance_strength = 0.5;
  EXPECT_THROW(g.validate(), InvalidArgument);
  EXPECT_NO_THROW(GenConfig{}.validate());
}
