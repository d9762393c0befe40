#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "gigassl/numcore/checkpoint.hpp"
#include "gigassl/numcore/linear.hpp"
#include "gigassl/sparseconv/pooling_network.hpp"

namespace gigassl {

/// Pooling network plus projection head over one parameter store.
template <typename T>
class GigaSslModel {
 public:
  GigaSslModel(const PoolingNetworkConfig& net, std::size_t proj_dim)
      : store_(std::make_unique<ParamStore<T>>()),
        network_(*store_, "pool", net),
        projector_(*store_, "proj", net.out_dim, proj_dim) {}

  GigaSslModel(const GigaSslModel&) = delete;
  GigaSslModel& operator=(const GigaSslModel&) = delete;

  void init(Rng& rng) {
    network_.init(rng);
    projector_.init(rng);
  }

  ParamStore<T>& store() { return *store_; }
  const ParamStore<T>& store() const { return *store_; }
  PoolingNetwork<T>& network() { return network_; }
  MlpProjector<T>& projector() { return projector_; }
  std::size_t proj_dim() const noexcept { return projector_.out_dim(); }

  void set_mode(Mode m) { network_.set_mode(m); }

 private:
  std::unique_ptr<ParamStore<T>> store_;
  PoolingNetwork<T> network_;
  MlpProjector<T> projector_;
};

// Rebuilds a model from a pretraining checkpoint. Parameters are stored as
// f32 and widened to T.
template <typename T>
std::unique_ptr<GigaSslModel<T>> load_model(const std::filesystem::path& path, nlohmann::json* header = nullptr) {
  Checkpoint ckpt = load_checkpoint(path);
  PoolingNetworkConfig net;
  std::size_t proj_dim = 0;
  try {
    net = ckpt.header.at("network").get<PoolingNetworkConfig>();
    proj_dim = ckpt.header.at("proj_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": checkpoint header lacks the model description (" + e.what() + ")");
  }
  auto model = std::make_unique<GigaSslModel<T>>(net, proj_dim);
  restore_store(model->store(), ckpt);
  model->store().set_step(ckpt.header.value("step", std::uint64_t{0}));
  if (header) *header = std::move(ckpt.header);
  return model;
}

}  // namespace gigassl
