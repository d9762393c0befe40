#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/io/binary.hpp"

namespace gigassl {

inline constexpr std::string_view kBankMagic = "GSLB";
inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr std::string_view kBankExtension = ".gsb";

/// Precomputed tile embeddings of one slide: n_augs augmentation slices, each
/// with its own n_tiles subsampled tiles. Slice 0 holds the non-augmented
/// tiles and is reserved for inference.
struct EmbeddingBank {
  std::string slide_id;
  std::uint32_t n_augs = 0;
  std::uint32_t n_tiles = 0;
  std::uint32_t feat_dim = 0;
  std::vector<std::array<std::int32_t, 2>> coords;  // [aug][tile] -> (x, y)
  std::vector<float> features;                      // [aug][tile][feat]
  nlohmann::json provenance = nlohmann::json::object();

  EmbeddingBank() = default;
  EmbeddingBank(std::string id, std::uint32_t augs, std::uint32_t tiles, std::uint32_t dim)
      : slide_id(std::move(id)),
        n_augs(augs),
        n_tiles(tiles),
        feat_dim(dim),
        coords(std::size_t(augs) * tiles),
        features(std::size_t(augs) * tiles * dim, 0.0f) {}

  std::size_t index(std::size_t aug, std::size_t tile) const { return aug * n_tiles + tile; }
  std::array<std::int32_t, 2>& coord(std::size_t aug, std::size_t tile) { return coords[index(aug, tile)]; }
  const std::array<std::int32_t, 2>& coord(std::size_t aug, std::size_t tile) const {
    return coords[index(aug, tile)];
  }
  std::span<float> feature(std::size_t aug, std::size_t tile) {
    return {features.data() + index(aug, tile) * feat_dim, feat_dim};
  }
  std::span<const float> feature(std::size_t aug, std::size_t tile) const {
    return {features.data() + index(aug, tile) * feat_dim, feat_dim};
  }

  void validate() const {
    if (n_augs == 0 || n_tiles == 0 || feat_dim == 0) throw CorruptBank(slide_id + ": empty bank dimensions");
    if (coords.size() != std::size_t(n_augs) * n_tiles || features.size() != coords.size() * feat_dim)
      throw CorruptBank(slide_id + ": bank arrays do not match its dimensions");
    for (const auto& c : coords)
      if (c[0] < 0 || c[1] < 0) throw CorruptBank(slide_id + ": negative tile coordinate");
    for (float v : features)
      if (!std::isfinite(v)) throw CorruptBank(slide_id + ": non-finite feature value");
  }

  friend bool operator==(const EmbeddingBank& a, const EmbeddingBank& b) {
    return a.slide_id == b.slide_id && a.n_augs == b.n_augs && a.n_tiles == b.n_tiles && a.feat_dim == b.feat_dim &&
           a.coords == b.coords &&
           std::equal(a.features.begin(), a.features.end(), b.features.begin(), b.features.end(),
                      [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
  }
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& bank_path) {
  auto p = bank_path;
  return p.replace_extension(".json");
}

// Writes "<path>" and the "<stem>.json" sidecar.
inline void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path) {
  bank.validate();
  io::Writer w;
  w.bytes(kBankMagic);
  w.u32(kBankVersion);
  w.u32(bank.n_augs);
  w.u32(bank.n_tiles);
  w.u32(bank.feat_dim);
  for (std::size_t k = 0; k < bank.n_augs; ++k)
    for (std::size_t t = 0; t < bank.n_tiles; ++t) {
      w.i32(bank.coord(k, t)[0]);
      w.i32(bank.coord(k, t)[1]);
      for (float v : bank.feature(k, t)) w.f32(v);
    }
  w.save(path);
  nlohmann::json side = {{"slide_id", bank.slide_id}, {"provenance", bank.provenance}};
  io::write_text(sidecar_path(path), side.dump(2) + "\n");
}

inline EmbeddingBank load_bank(const std::filesystem::path& path) {
  io::Reader r(io::read_file(path), ErrorKind::CorruptBank, path.string());
  if (r.remaining() < 4 || r.bytes(4) != kBankMagic) throw FormatError(path.string() + ": not an embedding bank");
  const auto version = r.u32();
  if (version != kBankVersion) throw FormatError(path.string() + ": unsupported bank version " + std::to_string(version));
  EmbeddingBank bank;
  bank.slide_id = path.stem().string();
  bank.n_augs = r.u32();
  bank.n_tiles = r.u32();
  bank.feat_dim = r.u32();
  if (bank.n_augs == 0 || bank.n_tiles == 0 || bank.feat_dim == 0) r.fail("zero bank dimension");
  const std::size_t entries = std::size_t(bank.n_augs) * bank.n_tiles;
  if (r.remaining() != entries * (8 + 4 * std::size_t(bank.feat_dim)))
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
           std::to_string(entries * (8 + 4 * std::size_t(bank.feat_dim))));
  bank.coords.resize(entries);
  bank.features.resize(entries * bank.feat_dim);
  for (std::size_t e = 0; e < entries; ++e) {
    bank.coords[e][0] = r.i32();
    bank.coords[e][1] = r.i32();
    for (std::size_t f = 0; f < bank.feat_dim; ++f) bank.features[e * bank.feat_dim + f] = r.f32();
  }
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    try {
      auto j = nlohmann::json::parse(io::read_file(side));
      bank.slide_id = j.value("slide_id", bank.slide_id);
      if (j.contains("provenance")) bank.provenance = j.at("provenance");
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
  }
  bank.validate();
  return bank;
}

// Every *.gsb file in the directory, sorted by path.
inline std::vector<std::filesystem::path> list_banks(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Io("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == kBankExtension) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gigassl
