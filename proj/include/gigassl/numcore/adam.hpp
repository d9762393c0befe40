#pragma once

#include <cmath>

#include "gigassl/error.hpp"
#include "gigassl/numcore/param_store.hpp"

namespace gigassl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0)) throw InvalidArgument("adam lr must be > 0");
    if (!(beta1 > 0 && beta1 < 1)) throw InvalidArgument("adam beta1 must lie in (0,1)");
    if (!(beta2 > 0 && beta2 < 1)) throw InvalidArgument("adam beta2 must lie in (0,1)");
    if (!(eps > 0)) throw InvalidArgument("adam eps must be > 0");
    if (!(weight_decay >= 0)) throw InvalidArgument("adam weight_decay must be >= 0");
  }
};

// One bias-corrected Adam update over every parameter in the store. The whole
// step is rejected, with nothing modified, if any gradient is non-finite.
// Weight decay is classic L2 (added to the gradient).
template <typename T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto& [name, p] : store)
    if (!p.grad.all_finite()) throw NonFiniteGradient("parameter '" + name + "'");

  const auto t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [_, p] : store) {
    auto& w = p.value.values();
    auto& g = p.grad.values();
    auto& m = p.m.values();
    auto& v = p.v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + cfg.weight_decay * static_cast<double>(w[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
      g[i] = T(0);
    }
  }
  store.set_step(t);
}

}  // namespace gigassl
