#pragma once

#include <memory>
#include <optional>
#include <string>

#include "gigassl/sparseconv/batchnorm.hpp"
#include "gigassl/sparseconv/submconv.hpp"

namespace gigassl {

/// Basic residual block: conv-BN-ReLU-conv-BN, plus a skip path (identity, or
/// a 1x1 convolution when the widths differ), followed by ReLU. Convolutions
/// that feed a normalization carry no bias.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
                int kernel_size, double bn_momentum = 0.1, double bn_eps = 1e-5)
      : conv1_(store, name + ".conv1", in_channels, out_channels, kernel_size, false),
        bn1_(store, name + ".bn1", out_channels, bn_momentum, bn_eps),
        conv2_(store, name + ".conv2", out_channels, out_channels, kernel_size, false),
        bn2_(store, name + ".bn2", out_channels, bn_momentum, bn_eps) {
    if (in_channels != out_channels)
      skip_.emplace(store, name + ".skip", in_channels, out_channels, 1);
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    bn1_.init();
    bn2_.init();
    if (skip_) skip_->init(rng);
  }

  void set_mode(Mode mode) {
    bn1_.set_mode(mode);
    bn2_.set_mode(mode);
  }

  std::size_t in_channels() const noexcept { return conv1_.in_channels(); }
  std::size_t out_channels() const noexcept { return conv1_.out_channels(); }

  Matrix<T> forward(const Matrix<T>& x, const std::shared_ptr<const Rulebook>& rulebook) {
    pre1_ = bn1_.forward(conv1_.forward(x, rulebook));
    Matrix<T> h = relu(*pre1_);
    Matrix<T> main = bn2_.forward(conv2_.forward(h, rulebook));
    const Matrix<T> shortcut = skip_ ? skip_->forward(x, rulebook) : x;
    for (std::size_t i = 0; i < main.data.size(); ++i) main.data[i] += shortcut.data[i];
    pre_out_ = main;
    return relu(main);
  }

  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (!pre_out_ || !pre1_) throw NoForwardCache("residual block backward called before forward");
    const Matrix<T> g_sum = relu_backward(*pre_out_, grad_out);
    Matrix<T> g_main = conv2_.backward(bn2_.backward(g_sum));
    Matrix<T> g_in = conv1_.backward(bn1_.backward(relu_backward(*pre1_, g_main)));
    const Matrix<T> g_skip = skip_ ? skip_->backward(g_sum) : g_sum;
    for (std::size_t i = 0; i < g_in.data.size(); ++i) g_in.data[i] += g_skip.data[i];
    return g_in;
  }

  SubmConv<T>& conv1() { return conv1_; }
  SubmConv<T>& conv2() { return conv2_; }
  SparseBatchNorm<T>& bn1() { return bn1_; }
  SparseBatchNorm<T>& bn2() { return bn2_; }
  SubmConv<T>* skip() { return skip_ ? &*skip_ : nullptr; }

 private:
  SubmConv<T> conv1_;
  SparseBatchNorm<T> bn1_;
  SubmConv<T> conv2_;
  SparseBatchNorm<T> bn2_;
  std::optional<SubmConv<T>> skip_;
  std::optional<Matrix<T>> pre1_;
  std::optional<Matrix<T>> pre_out_;
};

}  // namespace gigassl
