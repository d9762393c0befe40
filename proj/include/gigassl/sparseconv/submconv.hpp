#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/numcore/linear.hpp"
#include "gigassl/numcore/param_store.hpp"
#include "gigassl/sparseconv/rulebook.hpp"
#include "gigassl/sparsemap.hpp"

namespace gigassl {

/// Several sparse maps laid end to end; features are one row per site.
template <typename T>
struct SparseBatch {
  std::vector<Site> sites;
  std::vector<std::size_t> offsets{0};  // map m owns rows [offsets[m], offsets[m+1])
  Matrix<T> features;

  std::size_t n_maps() const noexcept { return offsets.size() - 1; }
  std::size_t n_sites() const noexcept { return sites.size(); }
};

template <typename T>
SparseBatch<T> make_batch(std::span<const SparseMap<T>> maps) {
  if (maps.empty()) throw EmptyBag("empty batch of sparse maps");
  const std::size_t feat_dim = maps.front().feat_dim;
  std::size_t total = 0;
  for (const auto& m : maps) {
    validate(m);
    if (m.feat_dim != feat_dim) throw DimensionMismatch("maps in a batch must share the feature dimension");
    total += m.size();
  }
  SparseBatch<T> batch;
  batch.features = Matrix<T>(total, feat_dim);
  batch.sites.reserve(total);
  std::size_t row = 0;
  for (const auto& m : maps) {
    batch.sites.insert(batch.sites.end(), m.sites.begin(), m.sites.end());
    std::copy(m.features.begin(), m.features.end(), batch.features.row(row));
    row += m.size();
    batch.offsets.push_back(row);
  }
  return batch;
}

template <typename T>
Rulebook build_rulebook(const SparseBatch<T>& batch, int kernel_size) {
  return build_rulebook(batch.sites, batch.offsets, kernel_size);
}

/// Submanifold convolution: output sites equal input sites, and only active
/// neighbours contribute. Weight layout is [k, k, C_in, C_out] with the first
/// kernel axis indexing rows (dj) and the second columns (di).
template <typename T>
class SubmConv {
 public:
  SubmConv(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
           int kernel_size, bool with_bias = true)
      : in_(in_channels),
        out_(out_channels),
        kernel_(kernel_size),
        weight_(&store.add(name + ".weight", {std::size_t(kernel_size), std::size_t(kernel_size), in_channels,
                                              out_channels})),
        bias_(with_bias ? &store.add(name + ".bias", {out_channels}) : nullptr),
        zero_bias_(with_bias ? 0 : out_channels, T(0)) {
    if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("kernel size must be odd and positive");
  }

  void init(Rng& rng) {
    init_normal(weight_->value, std::sqrt(2.0 / static_cast<double>(kernel_ * kernel_ * in_)), rng);
    if (bias_) bias_->value.fill(T(0));
  }

  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }
  int kernel_size() const noexcept { return kernel_; }

  Matrix<T> forward(const Matrix<T>& x, std::shared_ptr<const Rulebook> rulebook) {
    check(x, *rulebook);
    cache_x_ = x;
    cache_rb_ = std::move(rulebook);
    return apply(x, *cache_rb_, weight_->value.data(), bias_ ? bias_->value.data() : zero_bias_.data());
  }

  // Returns the input gradient; parameter gradients are accumulated.
  Matrix<T> backward(const Matrix<T>& grad_out) {
    if (!cache_x_ || !cache_rb_) throw NoForwardCache("submanifold conv backward called before forward");
    const Matrix<T>& x = *cache_x_;
    const Rulebook& rb = *cache_rb_;
    if (grad_out.rows != x.rows || grad_out.cols != out_)
      throw DimensionMismatch("submanifold conv gradient shape mismatch");
    Matrix<T> grad_in(x.rows, in_);
    const T* w = weight_->value.data();
    T* gw = weight_->grad.data();
    if (bias_) {
      T* gb = bias_->grad.data();
      for (std::size_t s = 0; s < grad_out.rows; ++s) {
        const T* g = grad_out.row(s);
        for (std::size_t co = 0; co < out_; ++co) gb[co] += g[co];
      }
    }
    for (std::size_t o = 0; o < rb.pairs.size(); ++o) {
      if (kernel_ != rb.kernel_size && o != rb.center()) continue;
      const std::size_t slot = slot_of(rb, o);
      const T* wo = w + slot * in_ * out_;
      T* gwo = gw + slot * in_ * out_;
      for (const RulePair& p : rb.pairs[o]) {
        const T* xin = x.row(p.in);
        const T* g = grad_out.row(p.out);
        T* gi = grad_in.row(p.in);
        for (std::size_t ci = 0; ci < in_; ++ci) {
          const T* wrow = wo + ci * out_;
          T* gwrow = gwo + ci * out_;
          T acc = T(0);
          for (std::size_t co = 0; co < out_; ++co) {
            acc += wrow[co] * g[co];
            gwrow[co] += xin[ci] * g[co];
          }
          gi[ci] += acc;
        }
      }
    }
    return grad_in;
  }

  Param<T>& weight() { return *weight_; }
  Param<T>& bias() { return *bias_; }
  bool has_bias() const noexcept { return bias_ != nullptr; }

 private:
  void check(const Matrix<T>& x, const Rulebook& rb) const {
    if (x.cols != in_)
      throw DimensionMismatch("submanifold conv expects " + std::to_string(in_) + " channels, got " +
                              std::to_string(x.cols));
    if (rb.n_sites != x.rows) throw StaleRulebook("rulebook covers " + std::to_string(rb.n_sites) +
                                                  " sites but input has " + std::to_string(x.rows));
    if (rb.kernel_size != kernel_ && kernel_ != 1)
      throw StaleRulebook("rulebook kernel size does not match the layer");
  }

  // Kernel slot in the weight tensor for rulebook offset o. A 1x1 layer reads
  // only the centre offset of a wider rulebook.
  std::size_t slot_of(const Rulebook& rb, std::size_t o) const {
    if (kernel_ == rb.kernel_size) return o;
    return 0;
  }

  Matrix<T> apply(const Matrix<T>& x, const Rulebook& rb, const T* w, const T* b) const {
    Matrix<T> y(x.rows, out_);
    for (std::size_t s = 0; s < y.rows; ++s) std::copy(b, b + out_, y.row(s));
    for (std::size_t o = 0; o < rb.pairs.size(); ++o) {
      if (kernel_ != rb.kernel_size && o != rb.center()) continue;
      const T* wo = w + slot_of(rb, o) * in_ * out_;
      for (const RulePair& p : rb.pairs[o]) {
        const T* xin = x.row(p.in);
        T* yo = y.row(p.out);
        for (std::size_t ci = 0; ci < in_; ++ci) {
          const T xv = xin[ci];
          const T* wrow = wo + ci * out_;
          for (std::size_t co = 0; co < out_; ++co) yo[co] += wrow[co] * xv;
        }
      }
    }
    return y;
  }

  std::size_t in_;
  std::size_t out_;
  int kernel_;
  Param<T>* weight_;
  Param<T>* bias_;
  std::vector<T> zero_bias_;
  std::optional<Matrix<T>> cache_x_;
  std::shared_ptr<const Rulebook> cache_rb_;
};

}  // namespace gigassl
