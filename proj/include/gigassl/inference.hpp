#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "gigassl/io/binary.hpp"
#include "gigassl/parallel.hpp"
#include "gigassl/random.hpp"
#include "gigassl/ssl/bank.hpp"
#include "gigassl/ssl/model.hpp"
#include "gigassl/ssl/view.hpp"

namespace gigassl {

inline constexpr std::size_t kDefaultViews = 50;  // R

struct SlideEmbedding {
  std::string slide_id;
  std::vector<double> vector;
  std::size_t views = 0;
  std::size_t tiles = 0;
};

inline std::vector<double> l2_normalized(std::vector<double> v, const std::string& slide_id) {
  double sq = 0;
  for (double x : v) sq += x * x;
  if (!(sq > 0) || !std::isfinite(sq)) throw DegenerateEmbedding(slide_id + ": mean view embedding has zero norm");
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

/// Mean of R pooled views of slice 0, scaled to unit norm. Normalization runs
/// on running statistics.
template <typename T>
SlideEmbedding embed_slide(const EmbeddingBank& bank, GigaSslModel<T>& model, std::size_t tiles, std::size_t views,
                           Rng& rng, std::int64_t downsample = kDefaultDownsample) {
  if (views < 1) throw InvalidArgument("at least one view is needed");
  const auto order = canonical_identity_order(bank);
  std::vector<SparseMap<T>> maps;
  maps.reserve(views);
  for (std::size_t r = 0; r < views; ++r) maps.push_back(sample_identity_view<T>(bank, order, tiles, rng, downsample));
  model.set_mode(Mode::Eval);
  const Matrix<T> pooled = model.network().forward(std::span<const SparseMap<T>>(maps));
  std::vector<double> mean(pooled.cols, 0.0);
  for (std::size_t r = 0; r < views; ++r)
    for (std::size_t c = 0; c < pooled.cols; ++c) mean[c] += static_cast<double>(pooled(r, c));
  for (double& m : mean) m /= static_cast<double>(views);
  return {bank.slide_id, l2_normalized(std::move(mean), bank.slide_id), views, tiles};
}

/// Plain mean of the slice-0 tile embeddings, accumulated in canonical tile
/// order.
inline std::vector<double> average_mil_embed(const EmbeddingBank& bank) {
  if (bank.n_tiles == 0 || bank.n_augs == 0 || bank.feat_dim == 0) throw EmptyBag(bank.slide_id + ": no tiles");
  std::vector<double> mean(bank.feat_dim, 0.0);
  for (std::size_t t : canonical_identity_order(bank)) {
    const auto f = bank.feature(0, t);
    for (std::size_t d = 0; d < bank.feat_dim; ++d) mean[d] += static_cast<double>(f[d]);
  }
  for (double& m : mean) m /= static_cast<double>(bank.n_tiles);
  return mean;
}

// ---------------------------------------------------------------------------
// Embedding files
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEmbeddingMagic = "GSLE";
inline constexpr std::uint32_t kEmbeddingVersion = 1;

struct EmbeddingSet {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> values;  // [slide][dim]

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  if (set.values.size() != set.ids.size() * set.dim) throw DimensionMismatch("embedding set rows do not match ids");
  io::Writer w;
  w.bytes(kEmbeddingMagic);
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(set.ids.size()));
  w.u32(static_cast<std::uint32_t>(set.dim));
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    w.str(set.ids[i]);
    for (float v : set.row(i)) w.f32(v);
  }
  w.save(path);
}

inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  io::Reader r(io::read_file(path), ErrorKind::FormatError, path.string());
  if (r.bytes(4) != kEmbeddingMagic) r.fail("not an embeddings file (bad magic)");
  if (const auto v = r.u32(); v != kEmbeddingVersion) r.fail("unsupported embeddings version " + std::to_string(v));
  EmbeddingSet set;
  const auto n = r.u32();
  set.dim = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    set.ids.push_back(r.str());
    for (std::size_t d = 0; d < set.dim; ++d) set.values.push_back(r.f32());
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last embedding");
  return set;
}

inline std::string embeddings_csv(const EmbeddingSet& set) {
  std::string out = "slide_id";
  for (std::size_t d = 0; d < set.dim; ++d) out += ",v" + std::to_string(d);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    out += set.ids[i];
    for (float v : set.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole directories
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline Rng slide_rng(std::uint64_t seed, std::string_view slide_id) {
  return derive_rng(seed, {0xe3bed, fnv1a(slide_id)});
}

struct EmbedOptions {
  std::size_t tiles = 5;
  std::size_t views = kDefaultViews;
  std::uint64_t seed = 0;
  std::int64_t downsample = kDefaultDownsample;
  bool average_mil = false;
  std::size_t threads = 1;
};

struct EmbedFailure {
  std::string slide;
  std::string message;
};

struct EmbedResult {
  EmbeddingSet set;
  std::vector<EmbedFailure> failures;
};

using ModelFactory = std::function<std::unique_ptr<GigaSslModel<double>>()>;

/// Embeds every bank of a directory. Rows are sorted by slide id; a slide that
/// fails is reported and left out. Each worker owns its own model copy, and
/// each slide draws from its own stream, so the thread count never changes
/// the output.
inline EmbedResult embed_dataset(const std::filesystem::path& bank_dir, const ModelFactory& make_model,
                                 const EmbedOptions& opts) {
  const auto paths = list_banks(bank_dir);
  struct Slot {
    std::string id;
    std::vector<double> vec;
    std::string error;
  };
  std::vector<Slot> slots(paths.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.threads, paths.size()));
  std::vector<std::unique_ptr<GigaSslModel<double>>> models(workers);
  if (!opts.average_mil)
    for (auto& m : models) m = make_model();

  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < paths.size(); i += workers) {
      Slot& s = slots[i];
      s.id = paths[i].stem().string();
      try {
        const EmbeddingBank bank = load_bank(paths[i]);
        s.id = bank.slide_id;
        if (opts.average_mil) {
          s.vec = average_mil_embed(bank);
        } else {
          Rng rng = slide_rng(opts.seed, bank.slide_id);
          s.vec = embed_slide(bank, *models[w], opts.tiles, opts.views, rng, opts.downsample).vector;
        }
      } catch (const Error& e) {
        s.error = std::string(to_string(e.kind())) + ": " + e.what();
      }
    }
  };
  parallel_for(workers, workers, work);

  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slots[a].id < slots[b].id; });
  EmbedResult result;
  for (std::size_t i : order) {
    Slot& s = slots[i];
    if (!s.error.empty()) {
      result.failures.push_back({s.id, s.error});
      continue;
    }
    if (result.set.dim == 0) result.set.dim = s.vec.size();
    if (s.vec.size() != result.set.dim) {
      result.failures.push_back({s.id, "embedding dimension differs from the other slides"});
      continue;
    }
    result.set.ids.push_back(s.id);
    for (double v : s.vec) result.set.values.push_back(static_cast<float>(v));
  }
  return result;
}

}  // namespace gigassl
