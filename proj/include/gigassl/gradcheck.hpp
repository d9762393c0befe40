#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gigassl/numcore/finite_diff.hpp"
#include "gigassl/numcore/linear.hpp"
#include "gigassl/sparseconv/pooling_network.hpp"
#include "gigassl/ssl/ntxent.hpp"

namespace gigassl::gradcheck {

struct Result {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
};

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

using Forward = std::function<Matrix<double>(const Matrix<double>&)>;
using Backward = std::function<Matrix<double>(const Matrix<double>&)>;

// Compares analytic gradients of L = <coef, forward(x)> against central
// differences, for the input and every parameter in the store.
inline double compare(ParamStore<double>& store, const Matrix<double>& x, const Forward& forward,
                      const Backward& backward, Rng& rng) {
  const Matrix<double> y0 = forward(x);
  Matrix<double> coef(y0.rows, y0.cols);
  std::normal_distribution<double> d;
  for (auto& v : coef.data) v = d(rng);
  auto loss = [&](const Matrix<double>& in) {
    const Matrix<double> y = forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += coef.data[i] * y.data[i];
    return s;
  };

  store.zero_grad();
  forward(x);
  const Matrix<double> grad_x = backward(coef);

  double worst = 0.0;
  const Tensor<double> xt({x.rows, x.cols}, x.data);
  const auto num_x = finite_diff_grad(
      [&](const Tensor<double>& t) {
        Matrix<double> m(x.rows, x.cols);
        m.data = t.values();
        return loss(m);
      },
      xt, kStep);
  worst = std::max(worst, max_relative_error(grad_x.data, num_x.values()));

  for (auto& [name, p] : store) {
    const std::vector<double> analytic = p.grad.values();
    const auto num = finite_diff_grad(
        [&](const Tensor<double>& t) {
          const Tensor<double> saved = p.value;
          p.value = t;
          const double v = loss(x);
          p.value = saved;
          return v;
        },
        p.value, kStep);
    worst = std::max(worst, max_relative_error(analytic, num.values()));
  }
  return worst;
}

inline SparseMap<double> random_map(Rng& rng, std::size_t n_sites, std::size_t window, std::size_t feat_dim) {
  auto cells = sample_without_replacement(window * window, n_sites, rng);
  std::normal_distribution<double> val;
  SparseMap<double> map;
  map.feat_dim = feat_dim;
  for (auto c : cells) {
    map.sites.push_back({static_cast<std::int64_t>(c % window), static_cast<std::int64_t>(c / window)});
    for (std::size_t f = 0; f < feat_dim; ++f) map.features.push_back(val(rng));
  }
  return canonical_order(map);
}

inline std::vector<SparseMap<double>> random_maps(Rng& rng, std::size_t count, std::size_t feat_dim) {
  std::uniform_int_distribution<std::size_t> n(2, 9);
  std::vector<SparseMap<double>> maps;
  for (std::size_t m = 0; m < count; ++m) maps.push_back(random_map(rng, n(rng), 5, feat_dim));
  return maps;
}

// Perturb parameters away from their canonical initial values (e.g. BN
// gamma = 1) so every gradient path is exercised.
inline void jitter(ParamStore<double>& store, Rng& rng, double scale = 0.3) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& [_, p] : store)
    for (auto& v : p.value.values()) v += d(rng);
}

inline Result submanifold_conv(std::size_t instances, std::uint64_t seed) {
  Result r{"submanifold_conv", instances, 0.0};
  Rng rng(seed);
  for (std::size_t k = 0; k < instances; ++k) {
    ParamStore<double> store;
    SubmConv<double> conv(store, "conv", 3, 4, 3);
    conv.init(rng);
    jitter(store, rng);
    auto maps = random_maps(rng, 2, 3);
    auto batch = make_batch<double>(maps);
    auto rb = std::make_shared<const Rulebook>(build_rulebook(batch, 3));
    r.max_rel_error = std::max(
        r.max_rel_error, compare(store, batch.features, [&](const Matrix<double>& x) { return conv.forward(x, rb); },
                                 [&](const Matrix<double>& g) { return conv.backward(g); }, rng));
  }
  return r;
}

inline Result sparse_batchnorm(std::size_t instances, std::uint64_t seed) {
  Result r{"sparse_batchnorm", instances, 0.0};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> rows(2, 12);
  std::normal_distribution<double> d;
  for (std::size_t k = 0; k < instances; ++k) {
    ParamStore<double> store;
    SparseBatchNorm<double> bn(store, "bn", 4);
    jitter(store, rng);
    Matrix<double> x(rows(rng), 4);
    for (auto& v : x.data) v = 2.0 * d(rng) + 0.5;
    r.max_rel_error =
        std::max(r.max_rel_error, compare(store, x, [&](const Matrix<double>& in) { return bn.forward(in); },
                                          [&](const Matrix<double>& g) { return bn.backward(g); }, rng));
  }
  return r;
}

inline Result residual_block(std::size_t instances, std::uint64_t seed) {
  Result r{"residual_block", instances, 0.0};
  Rng rng(seed);
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t c_in = (k % 2 == 0) ? 3 : 4;
    ParamStore<double> store;
    ResidualBlock<double> block(store, "block", c_in, 4, 3);
    block.init(rng);
    jitter(store, rng);
    auto maps = random_maps(rng, 2, c_in);
    auto batch = make_batch<double>(maps);
    auto rb = std::make_shared<const Rulebook>(build_rulebook(batch, 3));
    r.max_rel_error = std::max(
        r.max_rel_error, compare(store, batch.features, [&](const Matrix<double>& x) { return block.forward(x, rb); },
                                 [&](const Matrix<double>& g) { return block.backward(g); }, rng));
  }
  return r;
}

inline Result global_pool(std::size_t instances, std::uint64_t seed) {
  Result r{"global_average_pool", instances, 0.0};
  Rng rng(seed);
  for (std::size_t k = 0; k < instances; ++k) {
    ParamStore<double> store;
    auto maps = random_maps(rng, 3, 4);
    auto batch = make_batch<double>(maps);
    const auto offsets = batch.offsets;
    r.max_rel_error = std::max(
        r.max_rel_error,
        compare(store, batch.features, [&](const Matrix<double>& x) { return global_average_pool(x, offsets); },
                [&](const Matrix<double>& g) { return global_average_pool_backward(g, offsets); }, rng));
  }
  return r;
}

inline Result projector(std::size_t instances, std::uint64_t seed) {
  Result r{"projector", instances, 0.0};
  Rng rng(seed);
  std::normal_distribution<double> d;
  for (std::size_t k = 0; k < instances; ++k) {
    ParamStore<double> store;
    MlpProjector<double> proj(store, "proj", 5, 6);
    proj.init(rng);
    jitter(store, rng, 0.1);
    Matrix<double> x(4, 5);
    for (auto& v : x.data) v = d(rng);
    r.max_rel_error =
        std::max(r.max_rel_error, compare(store, x, [&](const Matrix<double>& in) { return proj.forward(in); },
                                          [&](const Matrix<double>& g) { return proj.backward(g); }, rng));
  }
  return r;
}

inline Result nt_xent_loss(std::size_t instances, std::uint64_t seed) {
  Result r{"nt_xent", instances, 0.0};
  Rng rng(seed);
  std::normal_distribution<double> d;
  std::uniform_int_distribution<std::size_t> slides(2, 5);
  std::uniform_real_distribution<double> temp(0.2, 1.0);
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t b = slides(rng);
    const double tau = temp(rng);
    const auto pairing = adjacent_pairing(b);
    Matrix<double> z(2 * b, 6);
    for (auto& v : z.data) v = d(rng);
    const auto res = nt_xent(z, pairing, tau);
    const Tensor<double> zt({z.rows, z.cols}, z.data);
    const auto num = finite_diff_grad(
        [&](const Tensor<double>& t) {
          Matrix<double> m(z.rows, z.cols);
          m.data = t.values();
          return nt_xent(m, pairing, tau).loss;
        },
        zt, kStep);
    r.max_rel_error = std::max(r.max_rel_error, max_relative_error(res.grad.data, num.values()));
  }
  return r;
}

// Whole pooling network (blocks, pool, head) followed by the projector.
inline Result pooling_network(std::size_t instances, std::uint64_t seed) {
  Result r{"pooling_network", instances, 0.0};
  Rng rng(seed);
  for (std::size_t k = 0; k < instances; ++k) {
    ParamStore<double> store;
    PoolingNetworkConfig cfg;
    cfg.in_channels = 3;
    cfg.block_channels = {4, 4};
    cfg.out_dim = 5;
    PoolingNetwork<double> net(store, "pool", cfg);
    MlpProjector<double> proj(store, "proj", 5, 4);
    net.init(rng);
    proj.init(rng);
    jitter(store, rng, 0.2);
    auto maps = random_maps(rng, 3, 3);
    auto batch = make_batch<double>(maps);
    r.max_rel_error = std::max(r.max_rel_error, compare(
                                                    store, batch.features,
                                                    [&](const Matrix<double>& x) {
                                                      SparseBatch<double> b = batch;
                                                      b.features = x;
                                                      return proj.forward(net.forward(b));
                                                    },
                                                    [&](const Matrix<double>& g) { return net.backward(proj.backward(g)); },
                                                    rng));
  }
  return r;
}

inline std::vector<Result> run_all(std::size_t instances = 20, std::uint64_t seed = 1234) {
  return {submanifold_conv(instances, seed),     sparse_batchnorm(instances, seed + 1),
          residual_block(instances, seed + 2),   global_pool(instances, seed + 3),
          projector(instances, seed + 4),        nt_xent_loss(instances, seed + 5),
          pooling_network(instances, seed + 6)};
}

}  // namespace gigassl::gradcheck
