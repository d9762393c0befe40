#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/numcore/linear.hpp"
#include "gigassl/numcore/param_store.hpp"

namespace gigassl {

enum class Mode { Train, Eval };

/// Per-channel normalization over every active site of the batch. Train mode
/// uses batch statistics and updates the running estimates; eval mode uses
/// the running estimates.
template <typename T>
class SparseBatchNorm {
 public:
  SparseBatchNorm(ParamStore<T>& store, const std::string& name, std::size_t channels, double momentum = 0.1,
                  double eps = 1e-5)
      : channels_(channels),
        momentum_(momentum),
        eps_(eps),
        gamma_(&store.add(name + ".weight", {channels})),
        beta_(&store.add(name + ".bias", {channels})),
        running_mean_(&store.add_buffer(name + ".running_mean", {channels}, T(0))),
        running_var_(&store.add_buffer(name + ".running_var", {channels}, T(1))) {
    if (!(eps > 0)) throw InvalidArgument("batch norm eps must be > 0");
    if (!(momentum >= 0 && momentum <= 1)) throw InvalidArgument("batch norm momentum must be in [0,1]");
    gamma_->value.fill(T(1));
  }

  void init() {
    gamma_->value.fill(T(1));
    beta_->value.fill(T(0));
    running_mean_->fill(T(0));
    running_var_->fill(T(1));
  }

  void set_mode(Mode mode) noexcept { mode_ = mode; }
  Mode mode() const noexcept { return mode_; }
  double eps() const noexcept { return eps_; }

  Matrix<T> forward(const Matrix<T>& x) {
    if (x.cols != channels_) throw DimensionMismatch("batch norm channel mismatch");
    const std::size_t n = x.rows;
    Cache c;
    c.xhat = Matrix<T>(n, channels_);
    c.inv_std.assign(channels_, T(0));
    c.mode = mode_;
    const T* g = gamma_->value.data();
    const T* b = beta_->value.data();
    Matrix<T> y(n, channels_);
    if (mode_ == Mode::Train) {
      if (n < 2) throw DegenerateBatch("batch norm in train mode needs at least 2 active sites, got " +
                                       std::to_string(n));
      for (std::size_t ch = 0; ch < channels_; ++ch) {
        T mean = T(0);
        for (std::size_t s = 0; s < n; ++s) mean += x(s, ch);
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t s = 0; s < n; ++s) {
          const T d = x(s, ch) - mean;
          var += d * d;
        }
        var /= static_cast<T>(n);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
        c.inv_std[ch] = inv;
        for (std::size_t s = 0; s < n; ++s) {
          const T xh = (x(s, ch) - mean) * inv;
          c.xhat(s, ch) = xh;
          y(s, ch) = g[ch] * xh + b[ch];
        }
        const T unbiased = var * static_cast<T>(n) / static_cast<T>(n - 1);
        const T mom = static_cast<T>(momentum_);
        (*running_mean_)[ch] = (T(1) - mom) * (*running_mean_)[ch] + mom * mean;
        (*running_var_)[ch] = (T(1) - mom) * (*running_var_)[ch] + mom * unbiased;
      }
    } else {
      for (std::size_t ch = 0; ch < channels_; ++ch) {
        const T inv = T(1) / std::sqrt((*running_var_)[ch] + static_cast<T>(eps_));
        c.inv_std[ch] = inv;
        for (std::size_t s = 0; s < n; ++s) {
          const T xh = (x(s, ch) - (*running_mean_)[ch]) * inv;
          c.xhat(s, ch) = xh;
          y(s, ch) = g[ch] * xh + b[ch];
        }
      }
    }
    cache_ = std::move(c);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (!cache_) throw NoForwardCache("batch norm backward called before forward");
    const Cache& c = *cache_;
    const std::size_t n = c.xhat.rows;
    if (grad_out.rows != n || grad_out.cols != channels_) throw DimensionMismatch("batch norm gradient shape mismatch");
    const T* g = gamma_->value.data();
    T* gg = gamma_->grad.data();
    T* gb = beta_->grad.data();
    Matrix<T> grad_in(n, channels_);
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t s = 0; s < n; ++s) {
        sum_g += grad_out(s, ch);
        sum_gx += grad_out(s, ch) * c.xhat(s, ch);
      }
      gg[ch] += sum_gx;
      gb[ch] += sum_g;
      const T scale = g[ch] * c.inv_std[ch];
      if (c.mode == Mode::Train) {
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t s = 0; s < n; ++s)
          grad_in(s, ch) = scale * (grad_out(s, ch) - inv_n * sum_g - c.xhat(s, ch) * inv_n * sum_gx);
      } else {
        for (std::size_t s = 0; s < n; ++s) grad_in(s, ch) = scale * grad_out(s, ch);
      }
    }
    return grad_in;
  }

  Param<T>& gamma() { return *gamma_; }
  Param<T>& beta() { return *beta_; }
  Tensor<T>& running_mean() { return *running_mean_; }
  Tensor<T>& running_var() { return *running_var_; }

 private:
  struct Cache {
    Matrix<T> xhat;
    std::vector<T> inv_std;
    Mode mode = Mode::Train;
  };

  std::size_t channels_;
  double momentum_;
  double eps_;
  Param<T>* gamma_;
  Param<T>* beta_;
  Tensor<T>* running_mean_;
  Tensor<T>* running_var_;
  Mode mode_ = Mode::Train;
  std::optional<Cache> cache_;
};

}  // namespace gigassl
