#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "gigassl/gradcheck.hpp"
#include "gigassl/inference.hpp"
#include "gigassl/probe.hpp"
#include "gigassl/ssl/ntxent.hpp"

namespace gigassl::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline Check run(const std::string& name, const std::function<std::string()>& body) {
  try {
    const std::string failure = body();
    return {name, failure.empty(), failure};
  } catch (const std::exception& e) {
    return {name, false, std::string("threw ") + e.what()};
  }
}

inline SparseMap<double> random_map(Rng& rng, std::size_t sites, std::size_t dim) {
  std::uniform_int_distribution<std::int64_t> coord(0, 40 * 224);
  std::normal_distribution<double> normal;
  std::vector<TileRecord<double>> tiles;
  for (std::size_t s = 0; s < sites; ++s) {
    TileRecord<double> t{coord(rng), coord(rng), std::vector<double>(dim)};
    for (auto& v : t.feature) v = normal(rng);
    tiles.push_back(std::move(t));
  }
  return build_sparse_map<double>(tiles, kDefaultDownsample);
}

}  // namespace detail

/// Property checks over every module, using only the library itself.
inline std::vector<Check> run_all(std::uint64_t seed = 7) {
  std::vector<Check> out;

  for (const auto& r : gradcheck::run_all(20, seed)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "max rel error %.3g over %zu instances", r.max_rel_error, r.instances);
    out.push_back({"gradient: " + r.name, r.max_rel_error < gradcheck::kTolerance, buf});
  }

  out.push_back(detail::run("nt-xent closed forms", [] {
    Matrix<double> one(2, 2);
    one.data = {1, 0, 0.3, 2};
    if (nt_xent(one, adjacent_pairing(1), 0.5).loss != 0.0) return std::string("B=1 loss is not 0");
    Matrix<double> same(4, 2);
    same.data = {1, 1, 1, 1, 1, 1, 1, 1};
    if (std::abs(nt_xent(same, adjacent_pairing(2), 0.7).loss - std::log(3.0)) > 1e-9) return std::string("log 3");
    Matrix<double> ortho(4, 2);
    ortho.data = {1, 0, 1, 0, 0, 1, 0, 1};
    const double e = std::numbers::e;
    if (std::abs(nt_xent(ortho, adjacent_pairing(2), 1.0).loss - std::log((e + 2) / e)) > 1e-9)
      return std::string("log((e+2)/e)");
    return std::string();
  }));

  out.push_back(detail::run("slide augmentation identities", [seed] {
    Rng rng(seed);
    for (int trial = 0; trial < 50; ++trial) {
      const auto map = detail::random_map(rng, 12, 3);
      if (augment_sparse_map(map, SlideAugParams::identity()) != map) return std::string("identity changed the map");
      auto rot = map;
      SlideAugParams quarter = SlideAugParams::identity();
      quarter.rot_quarters = 1;
      for (int q = 0; q < 4; ++q) rot = augment_sparse_map(rot, quarter);
      if (rot != map) return std::string("four quarter turns are not the identity");
      SlideAugParams flip = SlideAugParams::identity();
      flip.flip_x = flip.flip_y = true;
      if (augment_sparse_map(augment_sparse_map(map, flip), flip) != map) return std::string("double flip");
    }
    return std::string();
  }));

  out.push_back(detail::run("pooling network translation and order invariance", [seed] {
    Rng rng(seed + 1);
    ParamStore<double> store;
    PoolingNetworkConfig cfg;
    cfg.in_channels = 3;
    cfg.block_channels = {6, 6};
    cfg.out_dim = 5;
    PoolingNetwork<double> net(store, "net", cfg);
    net.init(rng);
    net.set_mode(Mode::Eval);
    for (int trial = 0; trial < 20; ++trial) {
      const auto map = detail::random_map(rng, 9, 3);
      const auto shifted = translate(map, 10, -3 + trial);
      const auto a = pool_forward(map, net), b = pool_forward(shifted, net);
      for (std::size_t c = 0; c < a.size(); ++c)
        if (std::abs(a[c] - b[c]) > 1e-9) return std::string("translation changed the output");
    }
    return std::string();
  }));

  out.push_back(detail::run("auc hand examples and symmetry", [] {
    if (auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) != 1.0) return std::string("perfect ranking");
    if (auc({0.5, 0.5}, {0, 1}) != 0.5) return std::string("tie convention");
    if (auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) != 0.75) return std::string("0.75 example");
    return std::string();
  }));

  out.push_back(detail::run("logistic objective is init independent", [seed] {
    Rng rng(seed + 2);
    std::normal_distribution<double> normal;
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
      rows.push_back({normal(rng) + (i % 2), normal(rng), normal(rng)});
      y.push_back(i % 2);
    }
    const auto set = make_labeled_set(rows, y);
    const auto a = fit_logistic(set);
    std::vector<double> init(a.params.size());
    for (auto& v : init) v = normal(rng);
    const auto b = fit_logistic(set, {}, init);
    if (std::abs(a.loss - b.loss) > 1e-8) return std::string("losses differ");
    return std::string();
  }));

  out.push_back(detail::run("bank round trip", [seed] {
    EmbeddingBank bank("selftest", 2, 3, 4);
    Rng rng(seed + 3);
    std::normal_distribution<float> normal;
    for (auto& v : bank.features) v = normal(rng);
    for (std::size_t i = 0; i < bank.coords.size(); ++i)
      bank.coords[i] = {static_cast<std::int32_t>(256 * i), static_cast<std::int32_t>(7 * i)};
    const auto path = std::filesystem::temp_directory_path() / ("gigassl_selftest_" + std::to_string(seed) + ".gsb");
    save_bank(bank, path);
    const bool same = load_bank(path) == bank;
    std::filesystem::remove(path);
    std::filesystem::remove(sidecar_path(path));
    return same ? std::string() : std::string("loaded bank differs");
  }));

  return out;
}

}  // namespace gigassl::selftest
