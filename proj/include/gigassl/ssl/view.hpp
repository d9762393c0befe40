#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gigassl/random.hpp"
#include "gigassl/sparsemap.hpp"
#include "gigassl/ssl/bank.hpp"

namespace gigassl {

struct ViewOptions {
  std::size_t tiles = 5;  // T
  bool shared_aug = true;
  bool slide_aug = true;
  std::int64_t downsample = kDefaultDownsample;
};

/// Everything needed to rebuild a view from its bank.
struct ViewSpec {
  std::string slide_id;
  bool shared = true;
  std::size_t aug_index = 0;               // meaningful when shared
  std::vector<std::size_t> tile_augs;      // per tile, always filled
  std::vector<std::size_t> tile_indices;   // size T, distinct
  std::optional<SlideAugParams> slide_aug;
};

template <typename T>
SparseMap<T> materialize_view(const EmbeddingBank& bank, const ViewSpec& spec, std::int64_t downsample) {
  std::vector<TileRecord<T>> tiles;
  tiles.reserve(spec.tile_indices.size());
  for (std::size_t n = 0; n < spec.tile_indices.size(); ++n) {
    const std::size_t k = spec.tile_augs[n];
    const std::size_t t = spec.tile_indices[n];
    const auto f = bank.feature(k, t);
    tiles.push_back({bank.coord(k, t)[0], bank.coord(k, t)[1], std::vector<T>(f.begin(), f.end())});
  }
  SparseMap<T> map = build_sparse_map<T>(tiles, downsample);
  if (spec.slide_aug) map = augment_sparse_map(map, *spec.slide_aug);
  return map;
}

/// Training view: augmentation slices are drawn from 1..K-1 (slice 0 is kept
/// for inference). Shared mode uses one slice for all T tiles; otherwise every
/// tile draws its own slice.
template <typename T>
std::pair<SparseMap<T>, ViewSpec> sample_view(const EmbeddingBank& bank, const ViewOptions& opts, Rng& rng) {
  if (opts.tiles < 1) throw InvalidArgument("views need at least one tile");
  if (opts.tiles > bank.n_tiles)
    throw InsufficientTiles(bank.slide_id + ": " + std::to_string(opts.tiles) + " tiles requested, bank has " +
                            std::to_string(bank.n_tiles) + " per augmentation");
  if (bank.n_augs < 2) throw InvalidArgument(bank.slide_id + ": training views need at least one augmented slice");
  std::uniform_int_distribution<std::size_t> aug(1, bank.n_augs - 1);
  ViewSpec spec;
  spec.slide_id = bank.slide_id;
  spec.shared = opts.shared_aug;
  if (opts.shared_aug) spec.aug_index = aug(rng);
  spec.tile_indices = sample_without_replacement(bank.n_tiles, opts.tiles, rng);
  spec.tile_augs.resize(opts.tiles, spec.aug_index);
  if (!opts.shared_aug)
    for (auto& k : spec.tile_augs) k = aug(rng);
  if (opts.slide_aug) spec.slide_aug = sample_slide_aug(rng);
  return {materialize_view<T>(bank, spec, opts.downsample), spec};
}

// Tile order of slice 0 sorted by (y, x, features). Inference samples through
// this order so that reordering tiles inside a bank changes nothing.
inline std::vector<std::size_t> canonical_identity_order(const EmbeddingBank& bank) {
  std::vector<std::size_t> order(bank.n_tiles);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = bank.coord(0, a), cb = bank.coord(0, b);
    if (ca[1] != cb[1]) return ca[1] < cb[1];
    if (ca[0] != cb[0]) return ca[0] < cb[0];
    const auto fa = bank.feature(0, a), fb = bank.feature(0, b);
    return std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(), fb.end());
  });
  return order;
}

/// Inference view: T tiles from slice 0, no slide-level augmentation.
template <typename T>
SparseMap<T> sample_identity_view(const EmbeddingBank& bank, const std::vector<std::size_t>& canonical,
                                  std::size_t tiles, Rng& rng, std::int64_t downsample = kDefaultDownsample) {
  if (tiles < 1) throw InvalidArgument("views need at least one tile");
  if (tiles > bank.n_tiles)
    throw InsufficientTiles(bank.slide_id + ": " + std::to_string(tiles) + " tiles requested, slice 0 has " +
                            std::to_string(bank.n_tiles));
  ViewSpec spec;
  spec.slide_id = bank.slide_id;
  spec.tile_indices = sample_without_replacement(bank.n_tiles, tiles, rng);
  for (auto& t : spec.tile_indices) t = canonical[t];
  spec.tile_augs.assign(tiles, 0);
  return materialize_view<T>(bank, spec, downsample);
}

}  // namespace gigassl
