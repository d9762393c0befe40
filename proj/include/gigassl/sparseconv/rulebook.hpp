#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/sparsemap.hpp"

namespace gigassl {

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept {
    const auto a = static_cast<std::uint64_t>(s.i) * 0x9E3779B97F4A7C15ull;
    const auto b = static_cast<std::uint64_t>(s.j) * 0xC2B2AE3D27D4EB4Full;
    return static_cast<std::size_t>(a ^ (b + 0x165667B19E3779F9ull + (a << 6) + (a >> 2)));
  }
};

// Order-sensitive fingerprint of a site list, used to catch rulebooks that
// were built for a different set of sites.
inline std::uint64_t site_fingerprint(std::span<const Site> sites) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ sites.size();
  for (const Site& s : sites) {
    h = (h ^ static_cast<std::uint64_t>(s.i)) * 0x100000001b3ull;
    h = (h ^ static_cast<std::uint64_t>(s.j)) * 0x100000001b3ull;
  }
  return h;
}

struct RulePair {
  std::uint32_t in;
  std::uint32_t out;
  friend bool operator==(const RulePair&, const RulePair&) = default;
  friend auto operator<=>(const RulePair&, const RulePair&) = default;
};

/// Gather/scatter pairs of a submanifold convolution. Offsets run row-major
/// over the kernel window (dj outer, di inner); pair lists are ordered by
/// output site.
struct Rulebook {
  int kernel_size = 0;
  std::size_t n_sites = 0;
  std::uint64_t fingerprint = 0;
  std::vector<Site> offsets;                 // (di, dj) per kernel slot
  std::vector<std::vector<RulePair>> pairs;  // one list per kernel slot

  std::size_t center() const noexcept { return offsets.size() / 2; }
};

// Rulebook over concatenated maps: sites in [map_offsets[m], map_offsets[m+1])
// belong to map m, and neighbours never cross map boundaries.
inline Rulebook build_rulebook(std::span<const Site> sites, std::span<const std::size_t> map_offsets,
                               int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("kernel size must be odd and positive");
  const int r = kernel_size / 2;
  Rulebook rb;
  rb.kernel_size = kernel_size;
  rb.n_sites = sites.size();
  rb.fingerprint = site_fingerprint(sites);
  for (int dj = -r; dj <= r; ++dj)
    for (int di = -r; di <= r; ++di) rb.offsets.push_back({di, dj});
  rb.pairs.resize(rb.offsets.size());

  std::unordered_map<Site, std::uint32_t, SiteHash> index;
  for (std::size_t m = 0; m + 1 < map_offsets.size(); ++m) {
    index.clear();
    for (std::size_t s = map_offsets[m]; s < map_offsets[m + 1]; ++s) index.emplace(sites[s], static_cast<std::uint32_t>(s));
    for (std::size_t s = map_offsets[m]; s < map_offsets[m + 1]; ++s) {
      for (std::size_t o = 0; o < rb.offsets.size(); ++o) {
        const Site nb{sites[s].i + rb.offsets[o].i, sites[s].j + rb.offsets[o].j};
        auto it = index.find(nb);
        if (it != index.end()) rb.pairs[o].push_back({it->second, static_cast<std::uint32_t>(s)});
      }
    }
  }
  return rb;
}

template <typename T>
Rulebook build_rulebook(const SparseMap<T>& map, int kernel_size) {
  const std::size_t offsets[] = {0, map.size()};
  return build_rulebook(map.sites, offsets, kernel_size);
}

}  // namespace gigassl
