#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/random.hpp"

namespace gigassl {

/// Default lattice downsampling factor from slide pixels to sparse-map sites.
inline constexpr std::int64_t kDefaultDownsample = 224;

struct Site {
  std::int64_t i = 0;  // lattice column
  std::int64_t j = 0;  // lattice row

  friend auto operator<=>(const Site&, const Site&) = default;
};

template <typename T>
struct TileRecord {
  std::int64_t x = 0;  // top-left pixel, slide space
  std::int64_t y = 0;
  std::vector<T> feature;
};

/// Active lattice sites, each holding one feature vector. Features are stored
/// row-major, one row of feat_dim values per site.
template <typename T>
struct SparseMap {
  std::vector<Site> sites;
  std::vector<T> features;
  std::size_t feat_dim = 0;

  std::size_t size() const noexcept { return sites.size(); }
  std::span<const T> feature(std::size_t s) const { return {features.data() + s * feat_dim, feat_dim}; }
  std::span<T> feature(std::size_t s) { return {features.data() + s * feat_dim, feat_dim}; }

  friend bool operator==(const SparseMap&, const SparseMap&) = default;
};

template <typename T>
void validate(const SparseMap<T>& map) {
  if (map.sites.empty()) throw EmptyBag("sparse map has no active sites");
  if (map.feat_dim == 0) throw DimensionMismatch("sparse map feature dimension is zero");
  if (map.features.size() != map.sites.size() * map.feat_dim)
    throw DimensionMismatch("sparse map features do not align with sites");
  std::vector<Site> sorted = map.sites;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("sparse map has duplicate sites");
}

struct SlideAugParams {
  bool flip_x = false;
  bool flip_y = false;
  int rot_quarters = 0;
  double scale_x = 1.0;
  double scale_y = 1.0;

  static SlideAugParams identity() { return {}; }

  void validate() const {
    if (rot_quarters < 0 || rot_quarters > 3) throw InvalidArgument("rot_quarters must be in {0,1,2,3}");
    if (!(scale_x >= 0.5 && scale_x <= 2.0) || !(scale_y >= 0.5 && scale_y <= 2.0))
      throw InvalidArgument("slide scale factors must lie in [0.5, 2]");
  }

  friend bool operator==(const SlideAugParams&, const SlideAugParams&) = default;
};

template <typename T>
struct MergeResult {
  SparseMap<T> map;
  std::vector<std::size_t> counts;  // input sites merged into each output site
};

// Merges duplicate sites by arithmetic mean and shifts the minimum of each
// axis to 0. Output sites are sorted. Rows that share a site are summed in
// lexicographic order of their feature values, so the result does not depend
// on input order at all, bit for bit.
template <typename T>
MergeResult<T> merge_duplicate_sites(const std::vector<Site>& sites, std::span<const T> features,
                                     std::size_t feat_dim) {
  if (sites.empty()) throw EmptyBag("no sites to merge");
  const std::size_t n = sites.size();
  auto row = [&](std::size_t r) { return features.subspan(r * feat_dim, feat_dim); };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sites[a] != sites[b]) return sites[a] < sites[b];
    auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });

  Site lo{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max()};
  for (const Site& s : sites) {
    lo.i = std::min(lo.i, s.i);
    lo.j = std::min(lo.j, s.j);
  }

  MergeResult<T> out;
  out.map.feat_dim = feat_dim;
  for (std::size_t a = 0; a < n;) {
    auto first = row(order[a]);
    std::vector<T> acc(first.begin(), first.end());
    std::size_t b = a + 1;
    while (b < n && sites[order[b]] == sites[order[a]]) {
      auto r = row(order[b]);
      for (std::size_t c = 0; c < feat_dim; ++c) acc[c] += r[c];
      ++b;
    }
    const std::size_t count = b - a;
    if (count > 1)
      for (auto& v : acc) v /= static_cast<T>(count);
    const Site s = sites[order[a]];
    out.map.sites.push_back({s.i - lo.i, s.j - lo.j});
    out.map.features.insert(out.map.features.end(), acc.begin(), acc.end());
    out.counts.push_back(count);
    a = b;
  }
  return out;
}

/// Places each tile at (floor(x/d), floor(y/d)); tiles sharing a site are
/// averaged; the result is origin-normalized.
template <typename T>
SparseMap<T> build_sparse_map(std::span<const TileRecord<T>> tiles, std::int64_t downsample = kDefaultDownsample) {
  if (tiles.empty()) throw EmptyBag("cannot build a sparse map from zero tiles");
  if (downsample < 1) throw InvalidArgument("downsample factor must be >= 1");
  const std::size_t feat_dim = tiles.front().feature.size();
  if (feat_dim == 0) throw DimensionMismatch("tile features are empty");
  std::vector<Site> sites;
  std::vector<T> features;
  sites.reserve(tiles.size());
  features.reserve(tiles.size() * feat_dim);
  for (const auto& tile : tiles) {
    if (tile.feature.size() != feat_dim)
      throw DimensionMismatch("tile feature has " + std::to_string(tile.feature.size()) + " values, expected " +
                              std::to_string(feat_dim));
    if (tile.x < 0 || tile.y < 0) throw InvalidArgument("tile coordinates must be non-negative");
    sites.push_back({tile.x / downsample, tile.y / downsample});
    features.insert(features.end(), tile.feature.begin(), tile.feature.end());
  }
  return merge_duplicate_sites<T>(sites, features, feat_dim).map;
}

template <typename T>
SparseMap<T> build_sparse_map(const std::vector<TileRecord<T>>& tiles, std::int64_t downsample = kDefaultDownsample) {
  return build_sparse_map(std::span<const TileRecord<T>>(tiles), downsample);
}

// Scale, rotate by quarter turns, flip about the bounding box, then merge and
// origin-normalize. Returns per-output-site merge counts alongside the map.
template <typename T>
MergeResult<T> augment_sparse_map_counted(const SparseMap<T>& map, const SlideAugParams& params) {
  validate(map);
  params.validate();
  std::vector<Site> sites;
  sites.reserve(map.size());
  for (const Site& s : map.sites) {
    Site t{static_cast<std::int64_t>(std::floor(static_cast<double>(s.i) * params.scale_x)),
           static_cast<std::int64_t>(std::floor(static_cast<double>(s.j) * params.scale_y))};
    for (int q = 0; q < params.rot_quarters; ++q) t = Site{-t.j, t.i};
    sites.push_back(t);
  }
  if (params.flip_x || params.flip_y) {
    auto [imin, imax] = std::minmax_element(sites.begin(), sites.end(),
                                            [](const Site& a, const Site& b) { return a.i < b.i; });
    auto [jmin, jmax] = std::minmax_element(sites.begin(), sites.end(),
                                            [](const Site& a, const Site& b) { return a.j < b.j; });
    const std::int64_t isum = imin->i + imax->i;
    const std::int64_t jsum = jmin->j + jmax->j;
    for (Site& s : sites) {
      if (params.flip_x) s.i = isum - s.i;
      if (params.flip_y) s.j = jsum - s.j;
    }
  }
  return merge_duplicate_sites<T>(sites, map.features, map.feat_dim);
}

template <typename T>
SparseMap<T> augment_sparse_map(const SparseMap<T>& map, const SlideAugParams& params) {
  return augment_sparse_map_counted(map, params).map;
}

/// Flips are fair coins, rotation is uniform over quarter turns and each axis
/// scale is uniform on [0.5, 2].
inline SlideAugParams sample_slide_aug(Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> quarter(0, 3);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  SlideAugParams p;
  p.flip_x = coin(rng);
  p.flip_y = coin(rng);
  p.rot_quarters = quarter(rng);
  p.scale_x = scale(rng);
  p.scale_y = scale(rng);
  return p;
}

template <typename T>
SparseMap<T> translate(const SparseMap<T>& map, std::int64_t di, std::int64_t dj) {
  SparseMap<T> out = map;
  for (Site& s : out.sites) {
    s.i += di;
    s.j += dj;
  }
  return out;
}

template <typename T>
bool is_canonical(const SparseMap<T>& map) {
  return std::is_sorted(map.sites.begin(), map.sites.end());
}

// Same map with sites (and their rows) in sorted order.
template <typename T>
SparseMap<T> canonical_order(const SparseMap<T>& map) {
  if (is_canonical(map)) return map;
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return map.sites[a] < map.sites[b]; });
  SparseMap<T> out;
  out.feat_dim = map.feat_dim;
  for (std::size_t idx : order) {
    out.sites.push_back(map.sites[idx]);
    auto f = map.feature(idx);
    out.features.insert(out.features.end(), f.begin(), f.end());
  }
  return out;
}

template <typename To, typename From>
SparseMap<To> cast_map(const SparseMap<From>& map) {
  return {map.sites, std::vector<To>(map.features.begin(), map.features.end()), map.feat_dim};
}

}  // namespace gigassl
