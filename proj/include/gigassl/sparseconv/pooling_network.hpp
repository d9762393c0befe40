#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/sparseconv/residual_block.hpp"

namespace gigassl {

struct PoolingNetworkConfig {
  std::size_t in_channels = 0;
  std::vector<std::size_t> block_channels{64, 64};
  int kernel_size = 3;
  std::size_t out_dim = 64;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::size_t blocks() const noexcept { return block_channels.size(); }

  void validate() const {
    if (in_channels < 1) throw InvalidArgument("pooling network needs in_channels >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("kernel_size must be odd");
    if (out_dim < 1) throw InvalidArgument("out_dim must be >= 1");
    for (auto c : block_channels)
      if (c < 1) throw InvalidArgument("block widths must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const PoolingNetworkConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels}, {"block_channels", c.block_channels},
                     {"blocks", c.blocks()},         {"kernel_size", c.kernel_size},
                     {"out_dim", c.out_dim},         {"bn_momentum", c.bn_momentum},
                     {"bn_eps", c.bn_eps}};
}

inline void from_json(const nlohmann::json& j, PoolingNetworkConfig& c) {
  j.at("in_channels").get_to(c.in_channels);
  j.at("block_channels").get_to(c.block_channels);
  j.at("kernel_size").get_to(c.kernel_size);
  j.at("out_dim").get_to(c.out_dim);
  c.bn_momentum = j.value("bn_momentum", 0.1);
  c.bn_eps = j.value("bn_eps", 1e-5);
  if (j.contains("blocks") && j.at("blocks").get<std::size_t>() != c.block_channels.size())
    throw FormatError("network config 'blocks' disagrees with block_channels");
}

// Mean over the sites of each map.
template <typename T>
Matrix<T> global_average_pool(const Matrix<T>& features, std::span<const std::size_t> offsets) {
  Matrix<T> out(offsets.size() - 1, features.cols);
  for (std::size_t m = 0; m + 1 < offsets.size(); ++m) {
    const std::size_t begin = offsets[m], end = offsets[m + 1];
    if (begin == end) throw EmptyBag("global average pool over an empty map");
    T* o = out.row(m);
    for (std::size_t s = begin; s < end; ++s) {
      const T* f = features.row(s);
      for (std::size_t c = 0; c < features.cols; ++c) o[c] += f[c];
    }
    const T inv = T(1) / static_cast<T>(end - begin);
    for (std::size_t c = 0; c < features.cols; ++c) o[c] *= inv;
  }
  return out;
}

template <typename T>
std::vector<T> global_average_pool(const SparseMap<T>& map) {
  if (map.size() == 0) throw EmptyBag("global average pool over an empty map");
  Matrix<T> f(map.size(), map.feat_dim);
  f.data = map.features;
  const std::size_t offsets[] = {0, map.size()};
  return global_average_pool(f, offsets).data;
}

template <typename T>
Matrix<T> global_average_pool_backward(const Matrix<T>& grad_out, std::span<const std::size_t> offsets) {
  Matrix<T> grad_in(offsets.back(), grad_out.cols);
  for (std::size_t m = 0; m + 1 < offsets.size(); ++m) {
    const T inv = T(1) / static_cast<T>(offsets[m + 1] - offsets[m]);
    for (std::size_t s = offsets[m]; s < offsets[m + 1]; ++s)
      for (std::size_t c = 0; c < grad_out.cols; ++c) grad_in(s, c) = grad_out(m, c) * inv;
  }
  return grad_in;
}

/// Residual blocks -> global average pool -> linear head.
///
/// Maps are put in canonical site order before batching, so outputs never
/// depend on site order. Normalization statistics in train mode span every
/// site of every map in the call.
template <typename T>
class PoolingNetwork {
 public:
  PoolingNetwork(ParamStore<T>& store, const std::string& name, PoolingNetworkConfig config)
      : config_(std::move(config)) {
    config_.validate();
    std::size_t width = config_.in_channels;
    for (std::size_t b = 0; b < config_.block_channels.size(); ++b) {
      blocks_.emplace_back(store, name + ".block" + std::to_string(b), width, config_.block_channels[b],
                           config_.kernel_size, config_.bn_momentum, config_.bn_eps);
      width = config_.block_channels[b];
    }
    head_.emplace(store, name + ".head", width, config_.out_dim);
  }

  void init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
    head_->init(rng);
  }

  const PoolingNetworkConfig& config() const noexcept { return config_; }
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }
  Linear<T>& head() { return *head_; }

  void set_mode(Mode mode) {
    mode_ = mode;
    for (auto& b : blocks_) b.set_mode(mode);
  }
  Mode mode() const noexcept { return mode_; }

  Matrix<T> forward(std::span<const SparseMap<T>> maps) {
    std::vector<SparseMap<T>> canonical;
    canonical.reserve(maps.size());
    for (const auto& m : maps) {
      if (m.feat_dim != config_.in_channels)
        throw DimensionMismatch("pooling network expects " + std::to_string(config_.in_channels) +
                                " input channels, map has " + std::to_string(m.feat_dim));
      canonical.push_back(canonical_order(m));
    }
    SparseBatch<T> batch = make_batch<T>(canonical);
    return forward(batch);
  }

  Matrix<T> forward(const SparseBatch<T>& batch) {
    auto rulebook = std::make_shared<const Rulebook>(build_rulebook(batch, config_.kernel_size));
    Matrix<T> h = batch.features;
    for (auto& b : blocks_) h = b.forward(h, rulebook);
    offsets_ = batch.offsets;
    return head_->forward(global_average_pool(h, offsets_));
  }

  // Gradient w.r.t. the input site features, rows in canonical batch order.
  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (offsets_.empty()) throw NoForwardCache("pooling network backward called before forward");
    Matrix<T> g = global_average_pool_backward(head_->backward(grad_out), offsets_);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return g;
  }

 private:
  PoolingNetworkConfig config_;
  std::vector<ResidualBlock<T>> blocks_;
  std::optional<Linear<T>> head_;
  std::vector<std::size_t> offsets_;
  Mode mode_ = Mode::Train;
};

template <typename T>
std::vector<T> pool_forward(const SparseMap<T>& map, PoolingNetwork<T>& network) {
  return network.forward(std::span<const SparseMap<T>>(&map, 1)).data;
}

}  // namespace gigassl
