#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gigassl/sparsemap.hpp"

using namespace gigassl;

namespace {

TileRecord<double> tile(std::int64_t x, std::int64_t y, std::vector<double> f) { return {x, y, std::move(f)}; }

SparseMap<double> random_map(Rng& rng, std::size_t n, std::size_t feat_dim, std::int64_t extent) {
  std::uniform_int_distribution<std::int64_t> coord(0, extent - 1);
  std::normal_distribution<double> val;
  std::vector<TileRecord<double>> tiles;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> f(feat_dim);
    for (auto& v : f) v = val(rng);
    tiles.push_back(tile(coord(rng) * 224, coord(rng) * 224, f));
  }
  return build_sparse_map(tiles);
}

}  // namespace

TEST(BuildSparseMap, FloorDivisionPlacesTiles) {
  std::vector<TileRecord<double>> tiles{tile(0, 0, {1, 2}), tile(224, 0, {3, 4}), tile(0, 448, {5, 6})};
  auto map = build_sparse_map(tiles, 224);
  ASSERT_EQ(map.size(), 3u);
  std::vector<Site> expected{{0, 0}, {0, 2}, {1, 0}};
  EXPECT_EQ(map.sites, expected);
  EXPECT_EQ(map.features, (std::vector<double>{1, 2, 5, 6, 3, 4}));
}

TEST(BuildSparseMap, CollidingTilesAreAveraged) {
  std::vector<TileRecord<double>> tiles{tile(10, 10, {1.0, -2.0, 4.0}), tile(100, 100, {3.0, 6.0, 0.5})};
  auto map = build_sparse_map(tiles, 224);
  ASSERT_EQ(map.size(), 1u);
  EXPECT_EQ(map.sites[0], (Site{0, 0}));
  EXPECT_DOUBLE_EQ(map.features[0], 2.0);
  EXPECT_DOUBLE_EQ(map.features[1], 2.0);
  EXPECT_DOUBLE_EQ(map.features[2], 2.25);
}

TEST(BuildSparseMap, OriginIsNormalized) {
  std::vector<TileRecord<double>> tiles{tile(2240, 1120, {1}), tile(2464, 1568, {2})};
  auto map = build_sparse_map(tiles, 224);
  EXPECT_EQ(map.sites, (std::vector<Site>{{0, 0}, {1, 2}}));
}

TEST(BuildSparseMap, Errors) {
  std::vector<TileRecord<double>> none;
  EXPECT_THROW(build_sparse_map(none, 224), EmptyBag);
  std::vector<TileRecord<double>> ragged{tile(0, 0, {1, 2}), tile(224, 0, {1})};
  EXPECT_THROW(build_sparse_map(ragged, 224), DimensionMismatch);
  std::vector<TileRecord<double>> negative{tile(-1, 0, {1})};
  EXPECT_THROW(build_sparse_map(negative, 224), InvalidArgument);
}

TEST(BuildSparseMap, PermutationInvariantBitExact) {
  Rng rng(11);
  std::normal_distribution<double> val;
  std::uniform_int_distribution<std::int64_t> coord(0, 900);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TileRecord<double>> tiles;
    for (int t = 0; t < 30; ++t) tiles.push_back(tile(coord(rng), coord(rng), {val(rng), val(rng), val(rng)}));
    auto reference = build_sparse_map(tiles, 224);
    std::shuffle(tiles.begin(), tiles.end(), rng);
    EXPECT_EQ(build_sparse_map(tiles, 224), reference);
  }
}

TEST(AugmentSparseMap, IdentityParamsAreIdentity) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto map = random_map(rng, 12, 4, 6);
    EXPECT_EQ(augment_sparse_map(map, SlideAugParams::identity()), map);
  }
}

TEST(AugmentSparseMap, FlipXReflectsAboutBoundingBox) {
  SparseMap<double> map{{{0, 0}, {3, 1}}, {1.0, 2.0}, 1};
  SlideAugParams p;
  p.flip_x = true;
  auto out = augment_sparse_map(map, p);
  // (0,0) -> (3,0) and (3,1) -> (0,1); sorted output puts (0,1) first.
  EXPECT_EQ(out.sites, (std::vector<Site>{{0, 1}, {3, 0}}));
  EXPECT_EQ(out.features, (std::vector<double>{2.0, 1.0}));
}

TEST(AugmentSparseMap, HalfScaleMergesNeighbours) {
  SparseMap<double> map{{{0, 0}, {1, 0}, {2, 0}}, {1.0, 10.0, 3.0, 30.0, 7.0, 70.0}, 2};
  SlideAugParams p;
  p.scale_x = 0.5;
  auto out = augment_sparse_map(map, p);
  ASSERT_EQ(out.sites, (std::vector<Site>{{0, 0}, {1, 0}}));
  EXPECT_DOUBLE_EQ(out.features[0], 2.0);
  EXPECT_DOUBLE_EQ(out.features[1], 20.0);
  EXPECT_DOUBLE_EQ(out.features[2], 7.0);
  EXPECT_DOUBLE_EQ(out.features[3], 70.0);
}

TEST(AugmentSparseMap, DoubleFlipAndFullRotationAreIdentities) {
  Rng rng(5);
  SlideAugParams flip;
  flip.flip_x = true;
  SlideAugParams flip_y;
  flip_y.flip_y = true;
  SlideAugParams quarter;
  quarter.rot_quarters = 1;
  for (int trial = 0; trial < 20; ++trial) {
    auto map = random_map(rng, 10, 3, 8);
    EXPECT_EQ(augment_sparse_map(augment_sparse_map(map, flip), flip), map);
    EXPECT_EQ(augment_sparse_map(augment_sparse_map(map, flip_y), flip_y), map);
    auto rotated = map;
    for (int k = 0; k < 4; ++k) rotated = augment_sparse_map(rotated, quarter);
    EXPECT_EQ(rotated, map);
  }
}

TEST(AugmentSparseMap, QuarterTurnRotatesCounterClockwise) {
  SparseMap<double> map{{{0, 0}, {2, 0}}, {1.0, 2.0}, 1};
  SlideAugParams p;
  p.rot_quarters = 1;
  auto out = augment_sparse_map(map, p);
  EXPECT_EQ(out.sites, (std::vector<Site>{{0, 0}, {0, 2}}));
  EXPECT_EQ(out.features, (std::vector<double>{1.0, 2.0}));
}

TEST(AugmentSparseMap, MergeConservesMassAndNormalizesOrigin) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto map = random_map(rng, 15, 3, 7);
    auto params = sample_slide_aug(rng);
    auto merged = augment_sparse_map_counted(map, params);
    std::vector<double> in_mass(3, 0.0), out_mass(3, 0.0);
    for (std::size_t s = 0; s < map.size(); ++s)
      for (std::size_t c = 0; c < 3; ++c) in_mass[c] += map.feature(s)[c];
    std::size_t total = 0;
    for (std::size_t s = 0; s < merged.map.size(); ++s) {
      total += merged.counts[s];
      for (std::size_t c = 0; c < 3; ++c) out_mass[c] += merged.map.feature(s)[c] * merged.counts[s];
    }
    EXPECT_EQ(total, map.size());
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_LE(std::abs(in_mass[c] - out_mass[c]), 1e-12 * std::max(1.0, std::abs(in_mass[c])));

    std::int64_t min_i = merged.map.sites[0].i, min_j = merged.map.sites[0].j;
    for (const Site& s : merged.map.sites) {
      min_i = std::min(min_i, s.i);
      min_j = std::min(min_j, s.j);
    }
    EXPECT_EQ(min_i, 0);
    EXPECT_EQ(min_j, 0);
    EXPECT_NO_THROW(validate(merged.map));
  }
}

TEST(SampleSlideAug, DeterministicAndInRange) {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(sample_slide_aug(a), sample_slide_aug(b));

  Rng rng(7);
  double sum = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    auto p = sample_slide_aug(rng);
    EXPECT_GE(p.scale_x, 0.5);
    EXPECT_LE(p.scale_x, 2.0);
    EXPECT_GE(p.scale_y, 0.5);
    EXPECT_LE(p.scale_y, 2.0);
    EXPECT_GE(p.rot_quarters, 0);
    EXPECT_LE(p.rot_quarters, 3);
    sum += p.scale_x;
  }
  const double mean = sum / n;
  EXPECT_GE(mean, 1.2);
  EXPECT_LE(mean, 1.3);
}
