#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/numcore/tensor.hpp"

namespace gigassl {

template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;  // Adam first moment
  Tensor<T> v;  // Adam second moment

  explicit Param(std::vector<std::size_t> shape)
      : value(shape), grad(shape), m(shape), v(shape) {}
};

/// Named parameters with gradient accumulators and Adam state.
///
/// std::map keeps node addresses stable, so layers hold Param pointers for the
/// lifetime of the store. Iteration order is lexicographic by name, which
/// fixes the order of every whole-store traversal (optimizer, checkpoint).
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Param<T>& add(const std::string& name, std::vector<std::size_t> shape) {
    if (buffers_.count(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
    auto [it, inserted] = params_.try_emplace(name, std::move(shape));
    if (!inserted) throw InvalidArgument("duplicate parameter name '" + name + "'");
    return it->second;
  }

  Param<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  // Non-trainable state (e.g. normalization running statistics). Checkpointed
  // with the parameters but never touched by the optimizer.
  Tensor<T>& add_buffer(const std::string& name, std::vector<std::size_t> shape, T fill = T(0)) {
    if (params_.count(name) || buffers_.count(name)) throw InvalidArgument("duplicate buffer name '" + name + "'");
    return buffers_.emplace(name, Tensor<T>(std::move(shape), fill)).first->second;
  }
  std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const noexcept { return params_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(T(0));
  }

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t t) noexcept { step_ = t; }

 private:
  std::map<std::string, Param<T>> params_;
  std::map<std::string, Tensor<T>> buffers_;
  std::uint64_t step_ = 0;
};

// He-style initialisation for a weight with the given fan-in.
template <typename T>
void init_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace gigassl
