#include <gtest/gtest.h>

#include <cmath>

#include "gigassl/datagen.hpp"
#include "gigassl/inference.hpp"
#include "gigassl/ssl/trainer.hpp"
#include "temp_dir.hpp"

using namespace gigassl;

namespace {

GenConfig small_corpus() {
  GenConfig g;
  g.n_slides = 8;
  g.n_tiles = 20;
  g.n_augs = 6;
  g.feat_dim = 8;
  g.content_dims = 4;
  g.grid_extent = 5 * kTileStride;
  g.seed = 21;
  return g;
}

class InferenceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    generate_corpus(small_corpus(), *dir_ / "banks");
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.block_channels = {8};
    cfg.out_dim = 8;
    cfg.proj_dim = 8;
    cfg.epochs = 5;
    cfg.seed = 2;
    PretrainPaths paths;
    paths.bank_dir = *dir_ / "banks";
    paths.checkpoint = *dir_ / "model.gsck";
    pretrain(cfg, paths);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static std::unique_ptr<GigaSslModel<double>> model() { return load_model<double>(*dir_ / "model.gsck"); }
  static EmbeddingBank bank(std::size_t i) { return load_bank(*dir_ / "banks" / (slide_name(i) + ".gsb")); }
  static const std::filesystem::path& root() { return dir_->path(); }

  static TempDir* dir_;
};

TempDir* InferenceTest::dir_ = nullptr;

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_F(InferenceTest, ExactlyTTilesMakesEveryViewIdentical) {
  auto m = model();
  EmbeddingBank b = bank(0);
  EmbeddingBank five("five", 2, 5, b.feat_dim);
  for (std::uint32_t k = 0; k < 2; ++k)
    for (std::uint32_t t = 0; t < 5; ++t) {
      five.coord(k, t) = b.coord(0, t);
      std::copy(b.feature(0, t).begin(), b.feature(0, t).end(), five.feature(k, t).begin());
    }
  Rng r1(1), r2(2);
  const auto one = embed_slide(five, *m, 5, 1, r1);
  const auto many = embed_slide(five, *m, 5, 17, r2);
  for (std::size_t c = 0; c < one.vector.size(); ++c) EXPECT_NEAR(one.vector[c], many.vector[c], 1e-12);
}

TEST_F(InferenceTest, UnitNormAndTranslationInvariance) {
  auto m = model();
  for (std::size_t s = 0; s < 4; ++s) {
    EmbeddingBank b = bank(s);
    EmbeddingBank shifted = b;
    for (auto& c : shifted.coords) {
      c[0] += 2240;
      c[1] += 2240;
    }
    Rng r1(s), r2(s);
    const auto e = embed_slide(b, *m, 5, 50, r1);
    const auto f = embed_slide(shifted, *m, 5, 50, r2);
    EXPECT_NEAR(norm(e.vector), 1.0, 1e-6);
    for (std::size_t c = 0; c < e.vector.size(); ++c) EXPECT_NEAR(e.vector[c], f.vector[c], 1e-9);
  }
}

TEST_F(InferenceTest, TilePermutationIsBitExact) {
  auto m = model();
  EmbeddingBank b = bank(3);
  EmbeddingBank p = b;
  Rng shuffle(9);
  const auto perm = sample_without_replacement(b.n_tiles, b.n_tiles, shuffle);
  for (std::uint32_t t = 0; t < b.n_tiles; ++t) {
    p.coord(0, t) = b.coord(0, perm[t]);
    std::copy(b.feature(0, perm[t]).begin(), b.feature(0, perm[t]).end(), p.feature(0, t).begin());
  }
  Rng r1(5), r2(5);
  EXPECT_EQ(embed_slide(b, *m, 5, 30, r1).vector, embed_slide(p, *m, 5, 30, r2).vector);
  EXPECT_EQ(average_mil_embed(b), average_mil_embed(p));
}

TEST_F(InferenceTest, LargeEnsemblesAgree) {
  auto m = model();
  for (std::size_t s = 0; s < 4; ++s) {
    const auto b = bank(s);
    Rng r1(100 + s), r2(200 + s);
    const auto big = embed_slide(b, *m, 5, 200, r1).vector;
    const auto mid = embed_slide(b, *m, 5, 50, r2).vector;
    EXPECT_GE(cosine(big, mid), 0.99) << "slide " << s;
  }
}

TEST_F(InferenceTest, SeedVarianceShrinksWithMoreViews) {
  auto m = model();
  std::vector<double> spread;
  for (std::size_t R : {1, 5, 10, 50}) {
    double total = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      const auto b = bank(s);
      std::vector<std::vector<double>> runs;
      for (std::uint64_t seed = 0; seed < 16; ++seed) {
        Rng rng = derive_rng(seed, {s, R});
        runs.push_back(embed_slide(b, *m, 5, R, rng).vector);
      }
      std::vector<double> mean(runs[0].size(), 0.0);
      for (const auto& r : runs)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += r[c] / static_cast<double>(runs.size());
      for (const auto& r : runs)
        for (std::size_t c = 0; c < mean.size(); ++c) total += (r[c] - mean[c]) * (r[c] - mean[c]);
    }
    spread.push_back(total);
  }
  for (std::size_t i = 1; i < spread.size(); ++i) EXPECT_LT(spread[i], spread[i - 1]) << "step " << i;
}

TEST_F(InferenceTest, Errors) {
  auto m = model();
  const auto b = bank(0);
  Rng rng(0);
  EXPECT_THROW(embed_slide(b, *m, b.n_tiles + 1, 5, rng), InsufficientTiles);
  EXPECT_THROW(embed_slide(b, *m, 5, 0, rng), InvalidArgument);
  EXPECT_THROW(l2_normalized({0.0, 0.0}, "z"), DegenerateEmbedding);
}

TEST_F(InferenceTest, DatasetSortedDeterministicAndThreadIndependent) {
  EmbedOptions opts;
  opts.views = 10;
  opts.seed = 4;
  const ModelFactory factory = [] { return model(); };
  const auto a = embed_dataset(root() / "banks", factory, opts);
  opts.threads = 3;
  const auto b = embed_dataset(root() / "banks", factory, opts);
  ASSERT_TRUE(a.failures.empty());
  ASSERT_EQ(a.set.size(), small_corpus().n_slides);
  EXPECT_TRUE(std::is_sorted(a.set.ids.begin(), a.set.ids.end()));
  EXPECT_EQ(a.set, b.set);

  TempDir out;
  save_embeddings(a.set, out / "a.gse");
  save_embeddings(b.set, out / "b.gse");
  EXPECT_EQ(io::read_file(out / "a.gse"), io::read_file(out / "b.gse"));
  EXPECT_EQ(load_embeddings(out / "a.gse"), a.set);
  const auto csv = embeddings_csv(a.set);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "slide_id,v0,v1,v2,v3,v4,v5,v6,v7");
}

TEST_F(InferenceTest, CorruptBankIsSkippedAndReported) {
  TempDir dir;
  for (std::size_t s = 0; s < 3; ++s) save_bank(bank(s), dir / (slide_name(s) + ".gsb"));
  auto bytes = io::read_file(dir / (slide_name(1) + ".gsb"));
  bytes.resize(bytes.size() / 2);
  io::write_text(dir / (slide_name(1) + ".gsb"), bytes);
  EmbedOptions opts;
  opts.views = 5;
  const auto r = embed_dataset(dir.path(), [] { return model(); }, opts);
  EXPECT_EQ(r.set.size(), 2u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].slide, slide_name(1));
  EXPECT_NE(r.failures[0].message.find("CorruptBank"), std::string::npos);
}

TEST(AverageMil, SmallCases) {
  EmbeddingBank one("one", 1, 1, 3);
  one.feature(0, 0)[0] = 1.5f;
  one.feature(0, 0)[2] = -2.0f;
  EXPECT_EQ(average_mil_embed(one), (std::vector<double>{1.5, 0.0, -2.0}));

  EmbeddingBank two("two", 2, 2, 2);
  two.coord(0, 1) = {256, 0};
  two.feature(0, 0)[0] = 1.0f;
  two.feature(0, 0)[1] = 2.0f;
  two.feature(0, 1)[0] = 3.0f;
  two.feature(0, 1)[1] = -4.0f;
  two.feature(1, 0)[0] = 100.0f;  // other slices are ignored
  EXPECT_EQ(average_mil_embed(two), (std::vector<double>{2.0, -1.0}));
}

TEST(EmbeddingFile, BadMagicAndTruncation) {
  TempDir dir;
  io::write_text(dir / "x.gse", "GSLB\1\0\0\0");
  EXPECT_THROW(load_embeddings(dir / "x.gse"), FormatError);
  EmbeddingSet set{{"a", "b"}, 2, {1, 2, 3, 4}};
  save_embeddings(set, dir / "y.gse");
  auto bytes = io::read_file(dir / "y.gse");
  bytes.pop_back();
  io::write_text(dir / "y.gse", bytes);
  EXPECT_THROW(load_embeddings(dir / "y.gse"), FormatError);
}
