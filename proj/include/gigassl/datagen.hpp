#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/labels.hpp"
#include "gigassl/parallel.hpp"
#include "gigassl/random.hpp"
#include "gigassl/ssl/bank.hpp"

namespace gigassl {

inline constexpr std::int32_t kTileStride = 256;

/// Synthetic corpus parameters.
///
/// Every slide is a square grid of tissue tiles (grid_extent / 256 per side).
/// Feature dims [0, content_dims) carry prototype vectors; the remaining
/// "style" dims carry the per-slide nuisance and are rotated plane by plane by
/// the tile augmentations.
struct GenConfig {
  std::size_t n_slides = 200;
  std::size_t n_classes = 2;
  std::size_t n_tiles = 256;
  std::size_t n_augs = 50;
  std::size_t feat_dim = 16;
  std::size_t content_dims = 8;
  std::int64_t grid_extent = 20 * kTileStride;
  std::size_t n_prototypes = 2;
  double nuisance_strength = 0.0;  // sigma_slide
  double aug_noise = 0.05;         // sigma_aug
  double tile_noise = 0.15;
  double aug_angle = 0.6 * std::numbers::pi;
  // Test hook: probability that a tile of class c is forced to prototype
  // c mod P. Anything above zero breaks equality of class marginals.
  double class_frequency_shift = 0.0;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return static_cast<std::size_t>(grid_extent / kTileStride); }
  std::size_t grid_cells() const { return grid_side() * grid_side(); }

  void validate() const {
    if (n_classes < 1) throw InvalidArgument("n_classes must be >= 1");
    if (n_slides < 2 * n_classes) throw InvalidArgument("need at least 2 slides per class");
    if (feat_dim < 2) throw InvalidArgument("feat_dim must be >= 2");
    if (content_dims < 1 || content_dims > feat_dim) throw InvalidArgument("content_dims must lie in [1, feat_dim]");
    if (n_augs < 1) throw InvalidArgument("n_augs must be >= 1");
    if (n_tiles < 1) throw InvalidArgument("n_tiles must be >= 1");
    if (grid_extent < kTileStride) throw InvalidArgument("grid_extent must cover at least one 256-pixel tile");
    if (n_tiles > grid_cells())
      throw InvalidArgument("n_tiles (" + std::to_string(n_tiles) + ") exceeds the " + std::to_string(grid_cells()) +
                            " tiles of a " + std::to_string(grid_extent) + " px grid");
    if (n_prototypes < 2) throw InvalidArgument("n_prototypes must be >= 2");
    if (!(nuisance_strength >= 0) || !(aug_noise >= 0) || !(tile_noise >= 0))
      throw InvalidArgument("noise levels must be >= 0");
    if (nuisance_strength > 0 && feat_dim - content_dims < 2)
      throw InvalidArgument("a nuisance needs at least 2 style dims (feat_dim - content_dims)");
    if (!(class_frequency_shift >= 0 && class_frequency_shift <= 1))
      throw InvalidArgument("class_frequency_shift must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"n_slides", c.n_slides},
                     {"n_classes", c.n_classes},
                     {"n_tiles", c.n_tiles},
                     {"n_augs", c.n_augs},
                     {"feat_dim", c.feat_dim},
                     {"content_dims", c.content_dims},
                     {"grid_extent", c.grid_extent},
                     {"n_prototypes", c.n_prototypes},
                     {"nuisance_strength", c.nuisance_strength},
                     {"aug_noise", c.aug_noise},
                     {"tile_noise", c.tile_noise},
                     {"aug_angle", c.aug_angle},
                     {"class_frequency_shift", c.class_frequency_shift},
                     {"seed", c.seed}};
}

inline std::string slide_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slide_%05zu", index);
  return buf;
}

namespace datagen_detail {

inline constexpr std::uint64_t kPrototypeTag = 0xd01;
inline constexpr std::uint64_t kAugTag = 0xd02;
inline constexpr std::uint64_t kSlideTag = 0xd03;

// Prototype index of grid cell (i, j) under the arrangement of class c.
//   c % 4 == 0: interleaved (diagonal stripes; a checkerboard when P = 2)
//   c % 4 == 1: segregated contiguous blocks in row-major order
//   c % 4 == 2: vertical stripes
//   c % 4 == 3: horizontal stripes
inline std::size_t arrangement(std::size_t c, std::size_t i, std::size_t j, std::size_t side, std::size_t p) {
  switch (c % 4) {
    case 0: return (i + j) % p;
    case 1: return (j * side + i) * p / (side * side);
    case 2: return i % p;
    default: return j % p;
  }
}

struct Shared {
  std::vector<std::vector<double>> prototypes;  // [P][content_dims]
  std::vector<std::vector<double>> angles;      // [K][style planes], angles[0] all zero
};

inline Shared shared_state(const GenConfig& cfg) {
  Shared s;
  Rng rng = derive_rng(cfg.seed, {kPrototypeTag});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t p = 0; p < cfg.n_prototypes; ++p) {
    std::vector<double> v(cfg.content_dims);
    double sq = 0;
    for (auto& x : v) {
      x = normal(rng);
      sq += x * x;
    }
    for (auto& x : v) x /= std::sqrt(sq);
    s.prototypes.push_back(std::move(v));
  }
  const std::size_t planes = (cfg.feat_dim - cfg.content_dims) / 2;
  s.angles.assign(cfg.n_augs, std::vector<double>(planes, 0.0));
  for (std::size_t k = 1; k < cfg.n_augs; ++k) {
    Rng ak = derive_rng(cfg.seed, {kAugTag, k});
    std::uniform_real_distribution<double> angle(-cfg.aug_angle, cfg.aug_angle);
    for (auto& a : s.angles[k]) a = angle(ak);
  }
  return s;
}

}  // namespace datagen_detail

/// Builds the bank of one slide. Pure function of (cfg, index).
inline EmbeddingBank generate_slide(const GenConfig& cfg, std::size_t index, const datagen_detail::Shared& shared,
                                    int* label_out = nullptr) {
  using namespace datagen_detail;
  const std::size_t label = index % cfg.n_classes;
  const std::size_t side = cfg.grid_side();
  const std::size_t cells = cfg.grid_cells();
  const std::size_t F = cfg.feat_dim;
  const std::size_t P = cfg.n_prototypes;
  Rng rng = derive_rng(cfg.seed, {kSlideTag, index});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Prototype relabelling makes every class use each prototype equally often
  // on average, whatever its arrangement.
  const auto perm = sample_without_replacement(P, P, rng);
  std::uniform_int_distribution<std::int32_t> offset(0, 64 * kTileStride);
  const std::int32_t x0 = offset(rng), y0 = offset(rng);

  // Every style plane gets the same share of the nuisance norm and a random
  // direction, so only directions (which augmentations rotate) tell slides
  // apart.
  std::vector<double> nuisance(F, 0.0);
  const std::size_t planes = (F - cfg.content_dims) / 2;
  if (cfg.nuisance_strength > 0) {
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    const double r = cfg.nuisance_strength / std::sqrt(static_cast<double>(planes));
    for (std::size_t p = 0; p < planes; ++p) {
      const double a = phase(rng);
      nuisance[cfg.content_dims + 2 * p] = r * std::cos(a);
      nuisance[cfg.content_dims + 2 * p + 1] = r * std::sin(a);
    }
  }

  std::vector<std::vector<double>> base(cells, std::vector<double>(F));
  for (std::size_t j = 0; j < side; ++j)
    for (std::size_t i = 0; i < side; ++i) {
      std::size_t proto = perm[arrangement(label, i, j, side, P)];
      if (cfg.class_frequency_shift > 0 && unit(rng) < cfg.class_frequency_shift) proto = label % P;
      auto& v = base[j * side + i];
      for (std::size_t f = 0; f < F; ++f) {
        const double content = f < cfg.content_dims ? shared.prototypes[proto][f] : 0.0;
        v[f] = content + nuisance[f] + cfg.tile_noise * normal(rng);
      }
    }

  EmbeddingBank bank(slide_name(index), static_cast<std::uint32_t>(cfg.n_augs),
                     static_cast<std::uint32_t>(cfg.n_tiles), static_cast<std::uint32_t>(F));
  std::vector<double> tmp(F);
  for (std::size_t k = 0; k < cfg.n_augs; ++k) {
    const auto chosen = sample_without_replacement(cells, cfg.n_tiles, rng);
    for (std::size_t t = 0; t < cfg.n_tiles; ++t) {
      const std::size_t cell = chosen[t];
      bank.coord(k, t) = {x0 + static_cast<std::int32_t>(cell % side) * kTileStride,
                          y0 + static_cast<std::int32_t>(cell / side) * kTileStride};
      auto out = bank.feature(k, t);
      const auto& b = base[cell];
      if (k == 0) {
        for (std::size_t f = 0; f < F; ++f) out[f] = static_cast<float>(b[f]);
        continue;
      }
      tmp = b;
      for (std::size_t p = 0; p < shared.angles[k].size(); ++p) {
        const std::size_t u = cfg.content_dims + 2 * p, w = u + 1;
        const double c = std::cos(shared.angles[k][p]), s = std::sin(shared.angles[k][p]);
        tmp[u] = c * b[u] - s * b[w];
        tmp[w] = s * b[u] + c * b[w];
      }
      for (std::size_t f = 0; f < F; ++f) out[f] = static_cast<float>(tmp[f] + cfg.aug_noise * normal(rng));
    }
  }
  bank.provenance = {{"generator", "gigassl-datagen"}, {"slide_index", index}, {"label", label},
                     {"seed", cfg.seed}};
  if (label_out) *label_out = static_cast<int>(label);
  return bank;
}

struct CorpusSummary {
  std::vector<std::string> slide_ids;
  std::vector<int> labels;
};

/// Writes <id>.gsb (+ sidecar) per slide, labels.csv and corpus.json.
inline CorpusSummary generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir,
                                     std::size_t threads = 1) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Io("cannot create '" + out_dir.string() + "': " + ec.message());
  const auto shared = datagen_detail::shared_state(cfg);
  CorpusSummary summary;
  summary.slide_ids.resize(cfg.n_slides);
  summary.labels.resize(cfg.n_slides);
  parallel_for(cfg.n_slides, threads, [&](std::size_t s) {
    int label = 0;
    EmbeddingBank bank = generate_slide(cfg, s, shared, &label);
    save_bank(bank, out_dir / (bank.slide_id + std::string(kBankExtension)));
    summary.slide_ids[s] = bank.slide_id;
    summary.labels[s] = label;
  });
  std::vector<std::pair<std::string, int>> rows;
  for (std::size_t s = 0; s < cfg.n_slides; ++s) rows.emplace_back(summary.slide_ids[s], summary.labels[s]);
  write_labels(out_dir / "labels.csv", rows);
  nlohmann::json corpus = {{"generator", "gigassl-datagen"}, {"config", cfg}, {"slides", cfg.n_slides}};
  io::write_text(out_dir / "corpus.json", corpus.dump(2) + "\n");
  return summary;
}

/// Two-sample statistic on slide-level mean tile vectors of slice 0:
///   ||mu_a - mu_b|| / sqrt( sum_f s_a,f^2 / n_a + s_b,f^2 / n_b )
/// maximised over class pairs. Zero for a single class.
inline double verify_marginal_equality(const std::vector<EmbeddingBank>& banks, const std::vector<int>& labels) {
  if (banks.size() != labels.size()) throw DimensionMismatch("one label per bank expected");
  std::map<int, std::vector<std::vector<double>>> by_class;
  for (std::size_t s = 0; s < banks.size(); ++s) {
    const auto& b = banks[s];
    std::vector<double> mean(b.feat_dim, 0.0);
    for (std::size_t t = 0; t < b.n_tiles; ++t) {
      const auto f = b.feature(0, t);
      for (std::size_t d = 0; d < b.feat_dim; ++d) mean[d] += f[d];
    }
    for (auto& m : mean) m /= static_cast<double>(b.n_tiles);
    if (!by_class[labels[s]].empty() && by_class[labels[s]].front().size() != mean.size())
      throw DimensionMismatch("banks disagree on feature dimension");
    by_class[labels[s]].push_back(std::move(mean));
  }
  struct Moments {
    std::vector<double> mean, var;
    double n;
  };
  std::vector<Moments> stats;
  for (const auto& [_, rows] : by_class) {
    const std::size_t D = rows.front().size();
    Moments m{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0), static_cast<double>(rows.size())};
    for (const auto& r : rows)
      for (std::size_t d = 0; d < D; ++d) m.mean[d] += r[d] / m.n;
    for (const auto& r : rows)
      for (std::size_t d = 0; d < D; ++d) m.var[d] += (r[d] - m.mean[d]) * (r[d] - m.mean[d]);
    for (auto& v : m.var) v /= std::max(1.0, m.n - 1);
    stats.push_back(std::move(m));
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < stats.size(); ++a)
    for (std::size_t b = a + 1; b < stats.size(); ++b) {
      if (stats[a].mean.size() != stats[b].mean.size()) throw DimensionMismatch("banks disagree on feature dimension");
      double dist = 0, se = 0;
      for (std::size_t d = 0; d < stats[a].mean.size(); ++d) {
        const double diff = stats[a].mean[d] - stats[b].mean[d];
        dist += diff * diff;
        se += stats[a].var[d] / stats[a].n + stats[b].var[d] / stats[b].n;
      }
      if (se > 0) worst = std::max(worst, std::sqrt(dist) / std::sqrt(se));
      else if (dist > 0) worst = std::numeric_limits<double>::infinity();
    }
  return worst;
}

inline double verify_marginal_equality(const std::filesystem::path& corpus_dir) {
  const auto labels = read_labels(corpus_dir / "labels.csv");
  std::vector<EmbeddingBank> banks;
  std::vector<int> y;
  for (const auto& p : list_banks(corpus_dir)) {
    banks.push_back(load_bank(p));
    auto it = labels.find(banks.back().slide_id);
    if (it == labels.end()) throw FormatError(banks.back().slide_id + ": no label in labels.csv");
    y.push_back(it->second);
  }
  return verify_marginal_equality(banks, y);
}

}  // namespace gigassl
