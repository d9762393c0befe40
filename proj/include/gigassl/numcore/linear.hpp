#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/numcore/param_store.hpp"
#include "gigassl/random.hpp"

namespace gigassl {

/// Row-major batch of vectors: rows × cols.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }
  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Fully connected layer y = W x + b with W stored [out, in].
template <typename T>
class Linear {
 public:
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out)
      : in_(in), out_(out), weight_(&store.add(name + ".weight", {out, in})), bias_(&store.add(name + ".bias", {out})) {}

  void init(Rng& rng) {
    init_normal(weight_->value, std::sqrt(2.0 / static_cast<double>(in_)), rng);
    bias_->value.fill(T(0));
  }

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }

  Matrix<T> forward(const Matrix<T>& x) {
    if (x.cols != in_)
      throw DimensionMismatch("linear expects " + std::to_string(in_) + " inputs, got " + std::to_string(x.cols));
    cache_ = x;
    Matrix<T> y(x.rows, out_);
    const T* w = weight_->value.data();
    const T* b = bias_->value.data();
    for (std::size_t r = 0; r < x.rows; ++r) {
      const T* xr = x.row(r);
      T* yr = y.row(r);
      for (std::size_t o = 0; o < out_; ++o) {
        T acc = b[o];
        const T* wo = w + o * in_;
        for (std::size_t i = 0; i < in_; ++i) acc += wo[i] * xr[i];
        yr[o] = acc;
      }
    }
    return y;
  }

  // Accumulates parameter gradients and returns the gradient w.r.t. the input.
  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (!cache_) throw NoForwardCache("linear backward called before forward");
    const Matrix<T>& x = *cache_;
    if (grad_out.rows != x.rows || grad_out.cols != out_)
      throw DimensionMismatch("linear backward gradient shape mismatch");
    Matrix<T> grad_in(x.rows, in_);
    const T* w = weight_->value.data();
    T* gw = weight_->grad.data();
    T* gb = bias_->grad.data();
    for (std::size_t r = 0; r < x.rows; ++r) {
      const T* xr = x.row(r);
      const T* gr = grad_out.row(r);
      T* gi = grad_in.row(r);
      for (std::size_t o = 0; o < out_; ++o) {
        const T g = gr[o];
        gb[o] += g;
        T* gwo = gw + o * in_;
        const T* wo = w + o * in_;
        for (std::size_t i = 0; i < in_; ++i) {
          gwo[i] += g * xr[i];
          gi[i] += g * wo[i];
        }
      }
    }
    return grad_in;
  }

  Param<T>& weight() { return *weight_; }
  Param<T>& bias() { return *bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Param<T>* weight_;
  Param<T>* bias_;
  std::optional<Matrix<T>> cache_;
};

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  Matrix<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

// Gradient of ReLU given its pre-activation input.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& pre, const Matrix<T>& grad_out) {
  Matrix<T> g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(pre.data[i] > T(0))) g.data[i] = T(0);
  return g;
}

/// Projection head Linear(C -> C) -> ReLU -> Linear(C -> D).
template <typename T>
class MlpProjector {
 public:
  static constexpr std::size_t kDefaultDim = 128;

  MlpProjector(ParamStore<T>& store, const std::string& name, std::size_t in_dim, std::size_t proj_dim = kDefaultDim)
      : hidden_(store, name + ".fc1", in_dim, in_dim), out_(store, name + ".fc2", in_dim, proj_dim) {}

  void init(Rng& rng) {
    hidden_.init(rng);
    out_.init(rng);
  }

  std::size_t in_dim() const noexcept { return hidden_.in_dim(); }
  std::size_t out_dim() const noexcept { return out_.out_dim(); }

  Matrix<T> forward(const Matrix<T>& x) {
    pre_ = hidden_.forward(x);
    return out_.forward(relu(*pre_));
  }

  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (!pre_) throw NoForwardCache("projector backward called before forward");
    return hidden_.backward(relu_backward(*pre_, out_.backward(grad_out)));
  }

  Linear<T>& first() { return hidden_; }
  Linear<T>& second() { return out_; }

 private:
  Linear<T> hidden_;
  Linear<T> out_;
  std::optional<Matrix<T>> pre_;
};

}  // namespace gigassl
